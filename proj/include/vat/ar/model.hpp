#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vat/nd/nn.hpp"
#include "vat/nd/rng.hpp"
#include "vat/nd/tensor.hpp"
#include "vat/tok/codebook.hpp"
#include "vat/tok/pyramid.hpp"

namespace vat::ar {

// Configuration for the next-scale autoregressive prior. The scale schedule,
// codebook size, quantizer width, and latent count must match the tokenizer
// that produced the pyramids this model is trained on.
struct ArConfig {
  int channels = 128;       // transformer width
  int depth = 4;            // number of adaptive-layernorm blocks
  int heads = 4;            // attention heads per block
  int mlp_ratio = 4;        // hidden = channels * mlp_ratio
  int condition_dim = 16;   // length of the conditioning vector
  int latent_count = 16;    // rows of the full-resolution latent (K)
  int quant_dim = 16;       // columns of each codebook entry (d)
  int codebook_size = 256;  // vocabulary V
  std::vector<int> scale_schedule = {1, 4, 16};

  // Sampling defaults; overridable per generate() call.
  float temperature = 1.0f;
  int top_k = 0;  // 0 disables top-k filtering

  // Throws std::invalid_argument on violations.
  void validate() const;

  int total_tokens() const;  // sum of the scale schedule
};

// A conditioning vector, shape [1, condition_dim]. It is injected twice:
// embedded as the start token (the input row of the first scale) and fed to
// every block's adaptive layernorm.
struct ConditionEmbedding {
  nd::Tensor features;

  // Throws std::invalid_argument unless features is [1, expected_dim] with
  // finite entries.
  void validate(int expected_dim) const;
};

// Attention mask over the full token sequence. Row blocks follow the scale
// schedule (plus an optional conditioning prefix in front); a query in block b
// may attend every key in blocks <= b, so attention within a scale covers the
// whole block and never reaches a later scale.
struct BlockCausalMask {
  int total = 0;
  std::vector<int> block_of;  // block index of each sequence row
  std::shared_ptr<const std::vector<uint8_t>> allow;  // [total*total], 1 = may attend

  static BlockCausalMask build(const std::vector<int>& schedule, int extra_prefix = 0);
};

// Per-layer key/value tensors accumulated during incremental decoding. The
// cache length always equals the number of consumed positions; appending a new
// block never mutates previously stored rows.
struct KvCache {
  std::vector<nd::Tensor> k;
  std::vector<nd::Tensor> v;

  KvCache() = default;
  explicit KvCache(int depth) : k(depth), v(depth) {}

  int positions() const;
};

// Teacher-forcing batch for one pyramid: embedded input rows for every scale
// and the flat list of target indices they predict.
struct ArInputs {
  nd::Tensor rows;                 // [total_tokens, channels]
  std::vector<int> targets;        // length total_tokens, values in [0, V)
  std::vector<int> scale_offsets;  // starting row of each scale block
};

// Samples one index from a row of unnormalised logits. temperature <= 1e-6
// degenerates to argmax (ties resolve to the lowest index); otherwise applies
// softmax(logits / temperature), restricted to the top_k largest logits when
// top_k is in [1, v). Throws std::invalid_argument on a non-positive v or
// non-finite logits.
int sample_index(const float* logits, int v, float temperature, int top_k, nd::Rng& rng);

// Block-causal transformer over token pyramids. Each row of the sequence
// predicts one token of the pyramid: the first scale's input row is the
// embedded condition (start token), and the input rows of scale s are the
// dequantized partial sum of all earlier scales, resampled to that scale's
// length. Blocks use adaptive layernorm driven by the raw condition vector and
// normalise queries/keys to unit length before attention.
class ArModel {
 public:
  ArModel(const ArConfig& cfg, std::uint64_t seed);

  const ArConfig& config() const { return cfg_; }
  const BlockCausalMask& mask() const { return mask_; }
  nd::ParamStore& params() { return params_; }
  const nd::ParamStore& params() const { return params_; }

  // Embeds a pyramid into teacher-forcing rows + targets. Throws if the
  // pyramid does not match the scale schedule or the codebook disagrees with
  // the configured vocabulary/width.
  ArInputs build_inputs(const tok::TokenPyramid& pyramid, const tok::Codebook& codebook,
                        const ConditionEmbedding& condition) const;

  // Full-sequence block-causal forward pass: [total, channels] -> [total, V].
  nd::Tensor forward(const nd::Tensor& rows, const ConditionEmbedding& condition) const;

  // Mean cross-entropy of next-token predictions over every scale.
  nd::Tensor loss(const tok::TokenPyramid& pyramid, const tok::Codebook& codebook,
                  const ConditionEmbedding& condition) const;

  // Incremental forward for one block of new rows; appends this block's keys
  // and values to the cache and returns logits for the new rows only.
  nd::Tensor forward_cached(const nd::Tensor& rows, const ConditionEmbedding& condition,
                            KvCache& cache) const;

  // Samples a pyramid scale by scale (tokens within a scale in parallel from
  // one cached forward pass). temperature/top_k <0 fall back to the config.
  tok::TokenPyramid generate(const ConditionEmbedding& condition, const tok::Codebook& codebook,
                             nd::Rng& rng, float temperature = -1.0f, int top_k = -1) const;

 private:
  void check_codebook(const tok::Codebook& codebook) const;
  nd::Tensor start_rows(const ConditionEmbedding& condition) const;
  nd::Tensor scale_rows(int scale, const nd::Tensor& partial_sum) const;

  ArConfig cfg_;
  nd::ParamStore params_;
  nd::Rng init_rng_;
  BlockCausalMask mask_;
  nn::Linear cond_embed_;   // condition_dim -> channels
  nn::Linear token_embed_;  // quant_dim -> channels
  std::vector<nd::Tensor> pos_embed_;  // one [L_s, channels] table per scale
  std::vector<nn::AdaLnBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear head_;  // channels -> V, zero-initialised
};

}  // namespace vat::ar
