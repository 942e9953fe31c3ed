#include "vat/tok/tokenizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "vat/nd/ops.hpp"

namespace vat::tok {

namespace {

VatConfig checked(VatConfig cfg) {
  cfg.validate();  // throws on hard violations; warnings are the caller's concern
  return cfg;
}

float scalar_value(const nd::Tensor& t) { return (*t.data)[0]; }

void require_shape2(const nd::Tensor& t, int rows, int cols, const char* what) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw std::invalid_argument(std::string(what) + ": expected [" + std::to_string(rows) +
                                ", " + std::to_string(cols) + "]");
  }
}

}  // namespace

void LatentDistribution::validate() const {
  if (mu.rank() != 2 || sigma.rank() != 2 || mu.shape != sigma.shape) {
    throw std::invalid_argument("LatentDistribution: mu and sigma must be rank-2 with equal shapes");
  }
  for (float m : *mu.data) {
    if (!std::isfinite(m)) throw std::invalid_argument("LatentDistribution: non-finite mu");
  }
  for (float s : *sigma.data) {
    if (!std::isfinite(s) || s <= 0.0f) {
      throw std::invalid_argument("LatentDistribution: sigma must be strictly positive and finite");
    }
  }
}

nd::Tensor down(const nd::Tensor& z, int target_len) {
  if (z.rank() != 2) throw std::invalid_argument("down: expected a rank-2 sequence");
  if (target_len < 1 || target_len > z.dim(0)) {
    throw std::invalid_argument("down: target length " + std::to_string(target_len) +
                                " must lie in [1, " + std::to_string(z.dim(0)) + "]");
  }
  return nd::avgpool_rows(z, target_len);
}

nd::Tensor up(const nd::Tensor& x, int target_len) {
  if (x.rank() != 2) throw std::invalid_argument("up: expected a rank-2 sequence");
  if (target_len < 1) throw std::invalid_argument("up: target length must be >= 1");
  return nd::lininterp_rows(x, target_len);
}

nd::Tensor partial_zhat(const VvqResult& result, int scales) {
  if (scales < 1 || scales > static_cast<int>(result.scale_up.size())) {
    throw std::invalid_argument("partial_zhat: scale count " + std::to_string(scales) +
                                " must lie in [1, " + std::to_string(result.scale_up.size()) +
                                "]");
  }
  nd::Tensor acc = result.scale_up[0];
  for (int s = 1; s < scales; ++s) acc = nd::add(acc, result.scale_up[static_cast<size_t>(s)]);
  return acc;
}

TokenizerLoss tokenizer_loss(const VatConfig& cfg, const nd::Tensor& pred_logits,
                             const nd::Tensor& target_occ, const nd::Tensor& z0,
                             const nd::Tensor* zhat_codebook,
                             const LatentDistribution& dist) {
  TokenizerLoss out;
  nd::Tensor occ = nd::bce_with_logits_mean(pred_logits, target_occ);
  nd::Tensor kl = nd::kl_standard_normal_sum(dist.mu, dist.sigma);
  out.occupancy = scalar_value(occ);
  out.kl = scalar_value(kl);

  nd::Tensor total = nd::scale(occ, cfg.occupancy_weight);
  if (zhat_codebook != nullptr) {
    // Pull the codebook toward the encoder output and (more gently) the
    // encoder toward the codes it was assigned.
    nd::Tensor cb = nd::mse_mean(nd::stop_grad(z0), *zhat_codebook);
    nd::Tensor commit = nd::mse_mean(z0, nd::stop_grad(*zhat_codebook));
    out.codebook = scalar_value(cb);
    out.commitment = scalar_value(commit);
    nd::Tensor quant = nd::add(cb, nd::scale(commit, cfg.commitment_beta));
    total = nd::add(total, nd::scale(quant, cfg.codebook_weight));
  }
  total = nd::add(total, nd::scale(kl, cfg.kl_weight));
  out.total = total;
  return out;
}

VatTokenizer::VatTokenizer(const VatConfig& cfg, uint64_t seed)
    : cfg_(checked(cfg)),
      init_rng_(seed),
      codebook_(params_, "tok.codebook", cfg_.codebook_size, cfg_.quant_dim, init_rng_) {
  const int D = cfg_.channels;
  const int d = cfg_.quant_dim;
  const int hidden = cfg_.mlp_ratio * D;
  const int in_dim = geom::fourier_feature_size(cfg_.fourier_bands) + 3;

  point_embed_ = nn::Linear(params_, "tok.point_embed", in_dim, D, init_rng_);
  point_queries_ = params_.add(
      "tok.point_queries",
      nd::Tensor::randn({cfg_.feature_len, D}, init_rng_, 0.02f, /*requires_grad=*/true));
  point_cross_ = nn::CrossAttentionLayer(params_, "tok.point_cross", D, cfg_.heads, hidden,
                                         init_rng_);
  latent_queries_ = params_.add(
      "tok.latent_queries",
      nd::Tensor::randn({cfg_.latent_count, D}, init_rng_, 0.02f, /*requires_grad=*/true));
  encoder_.reserve(static_cast<size_t>(cfg_.encoder_depth));
  for (int i = 0; i < cfg_.encoder_depth; ++i) {
    encoder_.emplace_back(params_, "tok.enc" + std::to_string(i), D, cfg_.heads, hidden,
                          /*qk_norm=*/false, init_rng_);
  }
  gauss_head_ = nn::Linear(params_, "tok.gauss_head", D, 2 * d, init_rng_);

  from_latent_ = nn::Linear(params_, "tok.from_latent", d, D, init_rng_);
  decoder_queries_ = params_.add(
      "tok.decoder_queries",
      nd::Tensor::randn({cfg_.decoder_tokens, D}, init_rng_, 0.02f, /*requires_grad=*/true));
  dec_cross_ = nn::CrossAttentionLayer(params_, "tok.dec_cross", D, cfg_.heads, hidden,
                                       init_rng_);
  decoder_.reserve(static_cast<size_t>(cfg_.decoder_depth));
  for (int i = 0; i < cfg_.decoder_depth; ++i) {
    decoder_.emplace_back(params_, "tok.dec" + std::to_string(i), D, cfg_.heads, hidden,
                          /*qk_norm=*/false, init_rng_);
  }
  float conv_std = std::sqrt(2.0f / (9.0f * static_cast<float>(D)));
  up1_w_ = params_.add("tok.up1.w", nd::Tensor::randn({D, D, 3, 3}, init_rng_, conv_std,
                                                      /*requires_grad=*/true));
  up1_b_ = params_.add("tok.up1.b", nd::Tensor::zeros({D}, /*requires_grad=*/true));
  up2_w_ = params_.add("tok.up2.w", nd::Tensor::randn({D, D, 3, 3}, init_rng_, conv_std,
                                                      /*requires_grad=*/true));
  up2_b_ = params_.add("tok.up2.b", nd::Tensor::zeros({D}, /*requires_grad=*/true));
  head_fc1_ = nn::Linear(params_, "tok.head_fc1", 9 * D, cfg_.head_hidden, init_rng_);
  head_fc2_ = nn::Linear(params_, "tok.head_fc2", cfg_.head_hidden, 1, init_rng_);
}

nd::Tensor VatTokenizer::featurize(const std::vector<geom::Vec3>& positions,
                                   const std::vector<geom::Vec3>& normals) const {
  if (positions.empty()) throw std::invalid_argument("featurize: point set is empty");
  if (normals.size() != positions.size()) {
    throw std::invalid_argument("featurize: need one normal per point (" +
                                std::to_string(positions.size()) + " points, " +
                                std::to_string(normals.size()) + " normals)");
  }
  const int n = static_cast<int>(positions.size());
  const int fdim = geom::fourier_feature_size(cfg_.fourier_bands);
  std::vector<float> buf;
  buf.reserve(static_cast<size_t>(n) * (fdim + 3));
  for (int i = 0; i < n; ++i) {
    std::vector<float> enc = geom::fourier_features(positions[static_cast<size_t>(i)],
                                                    cfg_.fourier_bands);
    buf.insert(buf.end(), enc.begin(), enc.end());
    const geom::Vec3& nrm = normals[static_cast<size_t>(i)];
    buf.push_back(nrm.x);
    buf.push_back(nrm.y);
    buf.push_back(nrm.z);
  }
  nd::Tensor feats = nd::Tensor::from(std::move(buf), {n, fdim + 3});
  nd::Tensor ctx = point_embed_(feats);
  return point_cross_(point_queries_, ctx);
}

nd::Tensor VatTokenizer::featurize(const geom::PointSampleSet& points) const {
  return featurize(points.positions, points.normals);
}

nd::Tensor VatTokenizer::compress(const nd::Tensor& point_tokens) const {
  require_shape2(point_tokens, cfg_.feature_len, cfg_.channels, "compress");
  nd::Tensor x = nd::concat_rows({point_tokens, latent_queries_});
  for (const auto& block : encoder_) x = block(x);
  return nd::slice_rows(x, cfg_.feature_len, cfg_.feature_len + cfg_.latent_count);
}

LatentDistribution VatTokenizer::latent_distribution(const nd::Tensor& z) const {
  require_shape2(z, cfg_.latent_count, cfg_.channels, "latent_distribution");
  const int d = cfg_.quant_dim;
  nd::Tensor g = gauss_head_(z);
  LatentDistribution dist;
  dist.mu = nd::slice_cols(g, 0, d);
  dist.sigma = nd::softplus(nd::slice_cols(g, d, 2 * d));
  return dist;
}

nd::Tensor VatTokenizer::reparameterize(const LatentDistribution& dist, nd::Rng& rng,
                                        bool noise_on) const {
  if (dist.mu.rank() != 2 || dist.mu.shape != dist.sigma.shape) {
    throw std::invalid_argument("reparameterize: mu and sigma shapes must match");
  }
  if (!noise_on) return dist.mu;
  nd::Tensor eps = nd::Tensor::randn(dist.mu.shape, rng, 1.0f, /*requires_grad=*/false);
  return nd::add(dist.mu, nd::mul(dist.sigma, eps));
}

VvqResult VatTokenizer::vvq_encode(const nd::Tensor& z0) const {
  return vvq_encode_impl(z0, nullptr);
}

VvqResult VatTokenizer::vvq_encode_stochastic(const nd::Tensor& z0, nd::Rng& rng) const {
  return vvq_encode_impl(z0, &rng);
}

VvqResult VatTokenizer::vvq_encode_impl(const nd::Tensor& z0, nd::Rng* sample_rng) const {
  require_shape2(z0, cfg_.latent_count, cfg_.quant_dim, "vvq_encode");
  if (cfg_.scale_schedule.empty()) {
    throw std::invalid_argument("vvq_encode: empty scale schedule");
  }
  VvqResult result;
  nd::Tensor z = z0;
  nd::Tensor acc_st, acc_tab;
  bool first = true;
  for (int len : cfg_.scale_schedule) {
    nd::Tensor ds = down(z, len);
    std::vector<int> idx = (sample_rng != nullptr)
                               ? codebook_.sample(ds, cfg_.stochastic_tau, *sample_rng)
                               : codebook_.nearest(ds);
    nd::Tensor tab = codebook_.lookup(idx);
    nd::Tensor st = nd::straight_through(ds, tab);
    nd::Tensor up_st = up(st, cfg_.latent_count);
    nd::Tensor up_tab = up(tab, cfg_.latent_count);
    result.scale_up.push_back(up_st);
    result.pyramid.scales.push_back(std::move(idx));
    acc_st = first ? up_st : nd::add(acc_st, up_st);
    acc_tab = first ? up_tab : nd::add(acc_tab, up_tab);
    first = false;
    z = nd::sub(z, up_st);
  }
  result.zhat = acc_st;
  result.zhat_codebook = acc_tab;
  result.final_residual = z;
  return result;
}

TriplaneFeatures VatTokenizer::build_triplanes(const nd::Tensor& latent) const {
  require_shape2(latent, cfg_.latent_count, cfg_.quant_dim, "build_triplanes");
  const int r = cfg_.base_plane_res();
  const int D = cfg_.channels;

  nd::Tensor h = from_latent_(latent);
  nd::Tensor x = dec_cross_(decoder_queries_, h);
  for (const auto& block : decoder_) x = block(x);

  TriplaneFeatures tri;
  tri.base_res = r;
  for (int p = 0; p < 3; ++p) {
    nd::Tensor rows = nd::slice_rows(x, p * r * r, (p + 1) * r * r);
    nd::Tensor base = nd::reshape(nd::transpose2d(rows), {D, r, r});
    tri.planes[static_cast<size_t>(p)][0] = base;
    tri.planes[static_cast<size_t>(p)][1] =
        nd::gelu(nd::conv2d(nd::upsample2x_nearest(base), up1_w_, up1_b_));
    tri.planes[static_cast<size_t>(p)][2] = nd::gelu(
        nd::conv2d(nd::upsample2x_nearest(tri.planes[static_cast<size_t>(p)][1]), up2_w_, up2_b_));
  }
  return tri;
}

nd::Tensor VatTokenizer::sample_occupancy_logits(
    const TriplaneFeatures& tri, const std::vector<geom::Vec3>& queries) const {
  if (queries.empty()) {
    throw std::invalid_argument("sample_occupancy_logits: no query points");
  }
  const int n = static_cast<int>(queries.size());
  auto clamp01 = [](float t) { return t < 0.0f ? 0.0f : (t > 1.0f ? 1.0f : t); };
  // Plane charts over the unit cube: XY, YZ, XZ.
  std::array<std::vector<float>, 3> uv;
  for (auto& u : uv) u.reserve(2 * static_cast<size_t>(n));
  for (const geom::Vec3& q : queries) {
    float x = clamp01(q.x + 0.5f);
    float y = clamp01(q.y + 0.5f);
    float z = clamp01(q.z + 0.5f);
    uv[0].push_back(x);
    uv[0].push_back(y);
    uv[1].push_back(y);
    uv[1].push_back(z);
    uv[2].push_back(x);
    uv[2].push_back(z);
  }
  std::vector<nd::Tensor> feats;
  feats.reserve(9);
  for (int p = 0; p < 3; ++p) {
    for (int lvl = 0; lvl < 3; ++lvl) {
      feats.push_back(nd::bilinear_sample(tri.planes[static_cast<size_t>(p)][static_cast<size_t>(lvl)],
                                          uv[static_cast<size_t>(p)]));
    }
  }
  nd::Tensor f = nd::concat_cols(feats);
  return head_fc2_(nd::gelu(head_fc1_(f)));
}

nd::Tensor VatTokenizer::decode_logits(const nd::Tensor& latent,
                                       const std::vector<geom::Vec3>& queries) const {
  return sample_occupancy_logits(build_triplanes(latent), queries);
}

nd::Tensor VatTokenizer::decode(const nd::Tensor& latent,
                                const std::vector<geom::Vec3>& queries) const {
  return nd::sigmoid(decode_logits(latent, queries));
}

TokenPyramid VatTokenizer::encode_points(const std::vector<geom::Vec3>& positions,
                                         const std::vector<geom::Vec3>& normals) const {
  nd::Tensor tokens = featurize(positions, normals);
  nd::Tensor z = compress(tokens);
  LatentDistribution dist = latent_distribution(z);
  nd::Rng unused(0);
  nd::Tensor z0 = reparameterize(dist, unused, /*noise_on=*/false);
  return vvq_encode(z0).pyramid;
}

nd::Tensor VatTokenizer::pyramid_to_latent(const TokenPyramid& pyramid) const {
  pyramid.validate(cfg_.scale_schedule, cfg_.codebook_size);
  nd::Tensor acc;
  bool first = true;
  for (const auto& idx : pyramid.scales) {
    nd::Tensor u = up(codebook_.lookup(idx), cfg_.latent_count);
    acc = first ? u : nd::add(acc, u);
    first = false;
  }
  return acc;
}

}  // namespace vat::tok
