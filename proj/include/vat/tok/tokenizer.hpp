#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vat/geom/sampling.hpp"
#include "vat/geom/vec3.hpp"
#include "vat/nd/adam.hpp"
#include "vat/nd/nn.hpp"
#include "vat/nd/rng.hpp"
#include "vat/nd/tensor.hpp"
#include "vat/tok/codebook.hpp"
#include "vat/tok/config.hpp"
#include "vat/tok/pyramid.hpp"

namespace vat::tok {

// Gaussian posterior over the compressed latent: one (mu, sigma) pair per
// latent channel, sigma strictly positive by construction (softplus head).
struct LatentDistribution {
  nd::Tensor mu;     // [K, d]
  nd::Tensor sigma;  // [K, d]

  // Throws std::invalid_argument unless shapes match, both are rank-2, and
  // sigma is strictly positive and finite elementwise.
  void validate() const;
};

// Sequence resampling between the full latent length and the per-scale token
// counts. down() is adaptive average pooling over positions (throws if
// target_len exceeds the row count or is < 1); up() is linear interpolation.
// Both are identity maps when target_len equals the input length.
nd::Tensor down(const nd::Tensor& z, int target_len);
nd::Tensor up(const nd::Tensor& x, int target_len);

// Multi-scale residual quantization of one latent Z0 [K, d]:
//   Z_0 = Z0;  x_s = Quant(Down(Z_s));  Z_{s+1} = Z_s - Up(x_s)
// and the reconstruction zhat = sum_s Up(x_s), so Z0 = zhat + final_residual
// holds up to float rounding for every input and codebook state.
struct VvqResult {
  TokenPyramid pyramid;
  nd::Tensor zhat;            // [K, d], straight-through: gradients -> encoder
  nd::Tensor zhat_codebook;   // same values, gradients -> codebook entries
  nd::Tensor final_residual;  // [K, d], residual left after the last scale
  std::vector<nd::Tensor> scale_up;  // per-scale Up(x_s), straight-through
};

// Reconstruction from the first `scales` pyramid levels:
// sum_{s < scales} scale_up[s]. With all scales included this equals
// result.zhat bit-for-bit.
nd::Tensor partial_zhat(const VvqResult& result, int scales);

// Three feature planes (XY, YZ, XZ), each held at three mipmap resolutions
// that exactly double: base_res, 2*base_res, 4*base_res. planes[p][level] is
// a [D, res, res] tensor.
struct TriplaneFeatures {
  std::array<std::array<nd::Tensor, 3>, 3> planes;
  int base_res = 0;
};

// Weighted tokenizer objective. `total` is the graph root for backward;
// the component fields are the unweighted raw values for reporting.
struct TokenizerLoss {
  nd::Tensor total;
  float occupancy = 0.0f;
  float codebook = 0.0f;
  float commitment = 0.0f;
  float kl = 0.0f;
};

// Occupancy BCE + codebook/commitment MSE + KL toward the standard normal:
//   total = w_occ * bce(pred_logits, target_occ)
//         + w_cb  * (mse(sg(z0), zhat) + beta * mse(z0, sg(zhat)))
//         + w_kl  * 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
// Pass zhat_codebook = nullptr during quantization-free training (phase 1);
// the codebook and commitment terms are then omitted.
TokenizerLoss tokenizer_loss(const VatConfig& cfg, const nd::Tensor& pred_logits,
                             const nd::Tensor& target_occ, const nd::Tensor& z0,
                             const nd::Tensor* zhat_codebook,
                             const LatentDistribution& dist);

// The variational tokenizer: a point-cloud encoder with in-context
// compression, a Gaussian latent head, multi-scale residual vector
// quantization, and a triplane occupancy decoder.
//
// Frozen instances are shareable read-only across threads; training is
// single-writer.
class VatTokenizer {
 public:
  VatTokenizer(const VatConfig& cfg, uint64_t seed);

  const VatConfig& config() const { return cfg_; }
  nd::ParamStore& params() { return params_; }
  const nd::ParamStore& params() const { return params_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // Point features: Fourier-encoded positions concatenated with normals,
  // linearly embedded, then read once by L learnable query tokens through
  // cross-attention. Output [L, D]; permutation-invariant over points.
  // Throws std::invalid_argument on an empty point set or missing normals.
  nd::Tensor featurize(const std::vector<geom::Vec3>& positions,
                       const std::vector<geom::Vec3>& normals) const;
  nd::Tensor featurize(const geom::PointSampleSet& points) const;

  // Self-attention over [point_tokens; latent queries]; keeps the K latent
  // rows. Output [K, D].
  nd::Tensor compress(const nd::Tensor& point_tokens) const;

  // Gaussian head over the compressed latent: [K, D] -> mu, sigma [K, d].
  LatentDistribution latent_distribution(const nd::Tensor& z) const;

  // z0 = mu + sigma * eps with eps ~ N(0, I) when noise_on; exactly mu
  // otherwise (inference).
  nd::Tensor reparameterize(const LatentDistribution& dist, nd::Rng& rng,
                            bool noise_on) const;

  // Residual quantization over the scale schedule (argmin code selection).
  // Advances the codebook usage counters.
  VvqResult vvq_encode(const nd::Tensor& z0) const;
  // Same, but samples indices from softmax(-d^2 / tau) with
  // tau = cfg.stochastic_tau (training ablation).
  VvqResult vvq_encode_stochastic(const nd::Tensor& z0, nd::Rng& rng) const;

  // Decoder: latent [K, d] -> learnable decoder tokens via cross-attention
  // and self-attention -> three feature planes with mipmaps.
  TriplaneFeatures build_triplanes(const nd::Tensor& latent) const;

  // Per query point: bilinear sample of every plane at every mipmap level
  // (features concatenated, 3 planes x 3 levels), then an MLP to one
  // occupancy logit per point. Queries live in the unit cube
  // [-0.5, 0.5]^3. Output [n, 1].
  nd::Tensor sample_occupancy_logits(const TriplaneFeatures& tri,
                                     const std::vector<geom::Vec3>& queries) const;

  nd::Tensor decode_logits(const nd::Tensor& latent,
                           const std::vector<geom::Vec3>& queries) const;
  // Sigmoid of decode_logits: occupancy predictions in (0, 1).
  nd::Tensor decode(const nd::Tensor& latent,
                    const std::vector<geom::Vec3>& queries) const;

  // Inference conveniences (deterministic: reparameterization noise off,
  // argmin code selection).
  TokenPyramid encode_points(const std::vector<geom::Vec3>& positions,
                             const std::vector<geom::Vec3>& normals) const;
  // Rebuilds zhat = sum_s Up(lookup(x_s)) from stored indices. Decoding any
  // syntactically valid pyramid succeeds; validates lengths and index range.
  nd::Tensor pyramid_to_latent(const TokenPyramid& pyramid) const;

 private:
  VatConfig cfg_;
  nd::ParamStore params_;
  nd::Rng init_rng_;

  nn::Linear point_embed_;            // fourier+normal features -> D
  nd::Tensor point_queries_;          // [L, D]
  nn::CrossAttentionLayer point_cross_;
  nd::Tensor latent_queries_;         // [K, D]
  std::vector<nn::TransformerBlock> encoder_;
  nn::Linear gauss_head_;             // D -> 2d (mu, raw sigma)
  Codebook codebook_;
  nn::Linear from_latent_;            // d -> D
  nd::Tensor decoder_queries_;        // [decoder_tokens, D]
  nn::CrossAttentionLayer dec_cross_;
  std::vector<nn::TransformerBlock> decoder_;
  nd::Tensor up1_w_, up1_b_;          // 3x3 conv, base -> 2x level
  nd::Tensor up2_w_, up2_b_;          // 3x3 conv, 2x -> 4x level
  nn::Linear head_fc1_, head_fc2_;    // 9D -> hidden -> 1

  VvqResult vvq_encode_impl(const nd::Tensor& z0, nd::Rng* sample_rng) const;
};

}  // namespace vat::tok
