#include "vat/ar/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vat/nd/ops.hpp"
#include "vat/tok/tokenizer.hpp"

namespace vat::ar {

using nd::Tensor;

void ArConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ar config: " + msg); };
  if (channels < 1) fail("channels must be positive");
  if (depth < 1) fail("depth must be positive");
  if (heads < 1) fail("heads must be positive");
  if (channels % heads != 0) fail("channels must be divisible by heads");
  if (mlp_ratio < 1) fail("mlp_ratio must be positive");
  if (condition_dim < 1) fail("condition_dim must be positive");
  if (latent_count < 1) fail("latent_count must be positive");
  if (quant_dim < 1) fail("quant_dim must be positive");
  if (codebook_size < 2) fail("codebook_size must be at least 2");
  if (scale_schedule.empty()) fail("scale schedule must not be empty");
  for (std::size_t s = 0; s < scale_schedule.size(); ++s) {
    if (scale_schedule[s] < 1) fail("scale lengths must be positive");
    if (s > 0 && scale_schedule[s] <= scale_schedule[s - 1]) {
      fail("scale lengths must be strictly increasing");
    }
  }
  if (scale_schedule.back() > latent_count) {
    fail("final scale length must not exceed latent_count");
  }
  if (!(temperature >= 0.0f)) fail("temperature must be non-negative");
  if (top_k < 0) fail("top_k must be non-negative (0 disables)");
}

int ArConfig::total_tokens() const {
  return std::accumulate(scale_schedule.begin(), scale_schedule.end(), 0);
}

void ConditionEmbedding::validate(int expected_dim) const {
  if (!features.defined() || features.rank() != 2 || features.dim(0) != 1 ||
      features.dim(1) != expected_dim) {
    throw std::invalid_argument("condition embedding must be a [1, " +
                                std::to_string(expected_dim) + "] row");
  }
  for (float v : *features.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("condition embedding has non-finite entries");
  }
}

BlockCausalMask BlockCausalMask::build(const std::vector<int>& schedule, int extra_prefix) {
  if (schedule.empty()) throw std::invalid_argument("block mask: empty scale schedule");
  if (extra_prefix < 0) throw std::invalid_argument("block mask: negative prefix length");
  BlockCausalMask m;
  int next_block = 0;
  if (extra_prefix > 0) {
    m.block_of.insert(m.block_of.end(), extra_prefix, next_block);
    ++next_block;
  }
  for (int len : schedule) {
    if (len < 1) throw std::invalid_argument("block mask: scale lengths must be positive");
    m.block_of.insert(m.block_of.end(), len, next_block);
    ++next_block;
  }
  m.total = static_cast<int>(m.block_of.size());
  auto bits = std::make_shared<std::vector<uint8_t>>(
      static_cast<std::size_t>(m.total) * static_cast<std::size_t>(m.total), 0);
  for (int q = 0; q < m.total; ++q) {
    for (int k = 0; k < m.total; ++k) {
      (*bits)[static_cast<std::size_t>(q) * m.total + k] =
          m.block_of[k] <= m.block_of[q] ? 1 : 0;
    }
  }
  m.allow = std::move(bits);
  return m;
}

int KvCache::positions() const {
  if (k.empty() || !k[0].defined()) return 0;
  return k[0].dim(0);
}

int sample_index(const float* logits, int v, float temperature, int top_k, nd::Rng& rng) {
  if (v < 1) throw std::invalid_argument("sample_index: vocabulary must be positive");
  for (int i = 0; i < v; ++i) {
    if (!std::isfinite(logits[i])) throw std::invalid_argument("sample_index: non-finite logit");
  }
  if (temperature <= 1e-6f) {
    int best = 0;
    for (int i = 1; i < v; ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return best;
  }
  // Candidates sorted by descending logit (index breaks ties) so that top-k
  // keeps exactly k entries and the CDF scan below is deterministic.
  std::vector<int> order(static_cast<std::size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  int keep = (top_k >= 1 && top_k < v) ? top_k : v;
  const double inv_t = 1.0 / static_cast<double>(temperature);
  const double m = static_cast<double>(logits[order[0]]);
  std::vector<double> weights(static_cast<std::size_t>(keep));
  double total = 0.0;
  for (int i = 0; i < keep; ++i) {
    weights[static_cast<std::size_t>(i)] = std::exp((static_cast<double>(logits[order[i]]) - m) * inv_t);
    total += weights[static_cast<std::size_t>(i)];
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (int i = 0; i < keep; ++i) {
    acc += weights[static_cast<std::size_t>(i)];
    if (u < acc) return order[i];
  }
  return order[keep - 1];
}

namespace {

const ArConfig& checked(const ArConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

ArModel::ArModel(const ArConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      init_rng_(seed),
      mask_(BlockCausalMask::build(cfg_.scale_schedule)),
      cond_embed_(params_, "ar.cond_embed", cfg_.condition_dim, cfg_.channels, init_rng_),
      token_embed_(params_, "ar.token_embed", cfg_.quant_dim, cfg_.channels, init_rng_),
      final_ln_(params_, "ar.final_ln", cfg_.channels),
      head_(params_, "ar.head", cfg_.channels, cfg_.codebook_size, init_rng_) {
  pos_embed_.reserve(cfg_.scale_schedule.size());
  for (std::size_t s = 0; s < cfg_.scale_schedule.size(); ++s) {
    pos_embed_.push_back(params_.add(
        "ar.pos" + std::to_string(s),
        Tensor::randn({cfg_.scale_schedule[s], cfg_.channels}, init_rng_, 0.02f)));
  }
  blocks_.reserve(static_cast<std::size_t>(cfg_.depth));
  for (int i = 0; i < cfg_.depth; ++i) {
    blocks_.emplace_back(params_, "ar.blk" + std::to_string(i), cfg_.channels, cfg_.heads,
                         cfg_.channels * cfg_.mlp_ratio, cfg_.condition_dim,
                         /*qk_norm=*/true, init_rng_);
  }
  // Start from maximum-entropy predictions: with a zero head every class is
  // equally likely, which keeps early training stable and mirrors the usual
  // zero-init classifier recipe for these priors.
  head_.zero_init();
}

void ArModel::check_codebook(const tok::Codebook& codebook) const {
  if (codebook.size() != cfg_.codebook_size || codebook.dim() != cfg_.quant_dim) {
    throw std::invalid_argument(
        "codebook is " + std::to_string(codebook.size()) + "x" + std::to_string(codebook.dim()) +
        " but the model expects " + std::to_string(cfg_.codebook_size) + "x" +
        std::to_string(cfg_.quant_dim));
  }
}

Tensor ArModel::start_rows(const ConditionEmbedding& condition) const {
  condition.validate(cfg_.condition_dim);
  Tensor row = cond_embed_(condition.features);  // [1, channels]
  const int len = cfg_.scale_schedule[0];
  Tensor rows = len == 1 ? row
                         : nd::add_rowvec(Tensor::zeros({len, cfg_.channels}),
                                          nd::reshape(row, {cfg_.channels}));
  return nd::add(rows, pos_embed_[0]);
}

Tensor ArModel::scale_rows(int scale, const Tensor& partial_sum) const {
  const int len = cfg_.scale_schedule[static_cast<std::size_t>(scale)];
  Tensor feats = tok::down(partial_sum, len);
  return nd::add(token_embed_(feats), pos_embed_[static_cast<std::size_t>(scale)]);
}

ArInputs ArModel::build_inputs(const tok::TokenPyramid& pyramid, const tok::Codebook& codebook,
                               const ConditionEmbedding& condition) const {
  pyramid.validate(cfg_.scale_schedule, cfg_.codebook_size);
  check_codebook(codebook);

  ArInputs out;
  std::vector<Tensor> row_blocks;
  row_blocks.reserve(cfg_.scale_schedule.size());
  row_blocks.push_back(start_rows(condition));

  Tensor partial;  // sum of dequantized earlier scales, [latent_count, quant_dim]
  int offset = 0;
  for (std::size_t s = 0; s < cfg_.scale_schedule.size(); ++s) {
    out.scale_offsets.push_back(offset);
    offset += cfg_.scale_schedule[s];
    out.targets.insert(out.targets.end(), pyramid.scales[s].begin(), pyramid.scales[s].end());
    if (s + 1 < cfg_.scale_schedule.size()) {
      Tensor up_s = tok::up(codebook.lookup(pyramid.scales[s]), cfg_.latent_count);
      partial = s == 0 ? up_s : nd::add(partial, up_s);
      row_blocks.push_back(scale_rows(static_cast<int>(s) + 1, partial));
    }
  }
  out.rows = row_blocks.size() == 1 ? row_blocks[0] : nd::concat_rows(row_blocks);
  return out;
}

Tensor ArModel::forward(const Tensor& rows, const ConditionEmbedding& condition) const {
  condition.validate(cfg_.condition_dim);
  if (!rows.defined() || rows.rank() != 2 || rows.dim(0) != mask_.total ||
      rows.dim(1) != cfg_.channels) {
    throw std::invalid_argument("forward expects [" + std::to_string(mask_.total) + ", " +
                                std::to_string(cfg_.channels) + "] input rows");
  }
  Tensor x = rows;
  for (const auto& block : blocks_) x = block(x, condition.features, mask_.allow);
  return head_(final_ln_(x));
}

Tensor ArModel::loss(const tok::TokenPyramid& pyramid, const tok::Codebook& codebook,
                     const ConditionEmbedding& condition) const {
  ArInputs inputs = build_inputs(pyramid, codebook, condition);
  Tensor logits = forward(inputs.rows, condition);
  return nd::cross_entropy_mean(logits, inputs.targets);
}

Tensor ArModel::forward_cached(const Tensor& rows, const ConditionEmbedding& condition,
                               KvCache& cache) const {
  condition.validate(cfg_.condition_dim);
  if (cache.k.size() != blocks_.size() || cache.v.size() != blocks_.size()) {
    throw std::invalid_argument("kv cache depth does not match model depth");
  }
  if (!rows.defined() || rows.rank() != 2 || rows.dim(1) != cfg_.channels) {
    throw std::invalid_argument("forward_cached expects [n, " + std::to_string(cfg_.channels) +
                                "] input rows");
  }
  Tensor x = rows;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = blocks_[l].forward_cached(x, condition.features, cache.k[l], cache.v[l]);
  }
  return head_(final_ln_(x));
}

tok::TokenPyramid ArModel::generate(const ConditionEmbedding& condition,
                                    const tok::Codebook& codebook, nd::Rng& rng,
                                    float temperature, int top_k) const {
  check_codebook(codebook);
  const float temp = temperature < 0.0f ? cfg_.temperature : temperature;
  const int k = top_k < 0 ? cfg_.top_k : top_k;
  const int v = cfg_.codebook_size;

  KvCache cache(cfg_.depth);
  tok::TokenPyramid out;
  Tensor partial;
  for (std::size_t s = 0; s < cfg_.scale_schedule.size(); ++s) {
    Tensor rows = s == 0 ? start_rows(condition) : scale_rows(static_cast<int>(s), partial);
    Tensor logits = forward_cached(rows, condition, cache);
    const int len = cfg_.scale_schedule[s];
    std::vector<int> indices(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      const float* row = logits.data->data() + static_cast<std::size_t>(i) * v;
      indices[static_cast<std::size_t>(i)] = sample_index(row, v, temp, k, rng);
    }
    out.scales.push_back(indices);
    Tensor up_s = tok::up(codebook.lookup(indices), cfg_.latent_count);
    partial = s == 0 ? up_s : nd::add(partial, up_s);
  }
  return out;
}

}  // namespace vat::ar
