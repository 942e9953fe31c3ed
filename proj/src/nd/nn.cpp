#include "vat/nd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vat::nn {

using namespace vat::nd;

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  float std = std::sqrt(2.0f / static_cast<float>(in + out));
  w = ps.add(prefix + ".w", Tensor::randn({in, out}, rng, std));
  b = ps.add(prefix + ".b", Tensor::zeros({out}));
}

void Linear::zero_init() {
  std::fill(w.data->begin(), w.data->end(), 0.0f);
  std::fill(b.data->begin(), b.data->end(), 0.0f);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int dim) {
  gamma = ps.add(prefix + ".gamma", Tensor::full({dim}, 1.0f));
  beta = ps.add(prefix + ".beta", Tensor::zeros({dim}));
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, int dim, int hidden, Rng& rng)
    : fc1(ps, prefix + ".fc1", dim, hidden, rng), fc2(ps, prefix + ".fc2", hidden, dim, rng) {}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix, int dim,
                                       int heads, bool qk_norm, Rng& rng)
    : dim(dim),
      heads(heads),
      head_dim(dim / heads),
      qk_norm(qk_norm),
      wq(ps, prefix + ".wq", dim, dim, rng),
      wk(ps, prefix + ".wk", dim, dim, rng),
      wv(ps, prefix + ".wv", dim, dim, rng),
      wo(ps, prefix + ".wo", dim, dim, rng) {
  if (dim % heads != 0) {
    throw std::runtime_error("attention: dim " + std::to_string(dim) +
                             " not divisible by heads " + std::to_string(heads));
  }
  if (qk_norm) {
    qk_gain = ps.add(prefix + ".qk_gain",
                     Tensor::full({dim}, std::sqrt(static_cast<float>(head_dim))));
  }
}

MultiHeadAttention::Projected MultiHeadAttention::project(const Tensor& x_q,
                                                          const Tensor& x_kv) const {
  return {wq(x_q), wk(x_kv), wv(x_kv)};
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                  std::shared_ptr<const std::vector<uint8_t>> mask) const {
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * head_dim, c1 = (h + 1) * head_dim;
    Tensor qh = slice_cols(q, c0, c1);
    Tensor kh = slice_cols(k, c0, c1);
    Tensor vh = slice_cols(v, c0, c1);
    if (qk_norm) {
      Tensor gain = reshape(slice_cols(reshape(qk_gain, {1, dim}), c0, c1), {head_dim});
      qh = mul_rowvec(l2norm_rows(qh), gain);
      kh = l2norm_rows(kh);
    }
    head_outs.push_back(attention(qh, kh, vh, mask));
  }
  return wo(heads == 1 ? head_outs[0] : concat_cols(head_outs));
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& prefix, int dim,
                                   int heads, int mlp_hidden, bool qk_norm, Rng& rng)
    : ln1(ps, prefix + ".ln1", dim),
      ln2(ps, prefix + ".ln2", dim),
      attn(ps, prefix + ".attn", dim, heads, qk_norm, rng),
      mlp(ps, prefix + ".mlp", dim, mlp_hidden, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x,
                                    std::shared_ptr<const std::vector<uint8_t>> mask) const {
  Tensor n1 = ln1(x);
  Tensor h = add(x, attn(n1, n1, std::move(mask)));
  return add(h, mlp(ln2(h)));
}

CrossAttentionLayer::CrossAttentionLayer(ParamStore& ps, const std::string& prefix, int dim,
                                         int heads, int mlp_hidden, Rng& rng)
    : ln_q(ps, prefix + ".ln_q", dim),
      ln_kv(ps, prefix + ".ln_kv", dim),
      ln2(ps, prefix + ".ln2", dim),
      attn(ps, prefix + ".attn", dim, heads, /*qk_norm=*/false, rng),
      mlp(ps, prefix + ".mlp", dim, mlp_hidden, rng) {}

Tensor CrossAttentionLayer::operator()(const Tensor& queries, const Tensor& context) const {
  Tensor h = add(queries, attn(ln_q(queries), ln_kv(context)));
  return add(h, mlp(ln2(h)));
}

Tensor modulate(const Tensor& y, const Tensor& shift, const Tensor& scale) {
  return add_rowvec(mul_rowvec(y, add_scalar(scale, 1.0f)), shift);
}

AdaLnBlock::AdaLnBlock(ParamStore& ps, const std::string& prefix, int dim, int heads,
                       int mlp_hidden, int cond_dim, bool qk_norm, Rng& rng)
    : dim(dim),
      attn(ps, prefix + ".attn", dim, heads, qk_norm, rng),
      mlp(ps, prefix + ".mlp", dim, mlp_hidden, rng),
      mod(ps, prefix + ".mod", cond_dim, 6 * dim, rng) {
  mod.zero_init();
}

AdaLnBlock::Modulation AdaLnBlock::modulation(const Tensor& cond) const {
  if (cond.rank() != 2 || cond.dim(0) != 1) {
    throw std::runtime_error("AdaLnBlock: condition must be [1, c], got " +
                             shape_str(cond.shape));
  }
  Tensor m = mod(gelu(cond));  // [1, 6*dim]
  auto part = [&](int i) {
    return reshape(slice_cols(m, i * dim, (i + 1) * dim), {dim});
  };
  return {part(0), part(1), part(2), part(3), part(4), part(5)};
}

Tensor AdaLnBlock::operator()(const Tensor& x, const Tensor& cond,
                              std::shared_ptr<const std::vector<uint8_t>> mask) const {
  Modulation m = modulation(cond);
  Tensor a_in = modulate(layernorm_rows(x), m.shift1, m.scale1);
  Tensor h = add(x, mul_rowvec(attn(a_in, a_in, std::move(mask)), m.gate1));
  Tensor m_in = modulate(layernorm_rows(h), m.shift2, m.scale2);
  return add(h, mul_rowvec(mlp(m_in), m.gate2));
}

Tensor AdaLnBlock::forward_cached(const Tensor& x_new, const Tensor& cond, Tensor& k_cache,
                                  Tensor& v_cache) const {
  Modulation m = modulation(cond);
  Tensor a_in = modulate(layernorm_rows(x_new), m.shift1, m.scale1);
  MultiHeadAttention::Projected p = attn.project(a_in, a_in);
  k_cache = k_cache.defined() ? concat_rows({k_cache, p.k}) : p.k;
  v_cache = v_cache.defined() ? concat_rows({v_cache, p.v}) : p.v;
  Tensor h = add(x_new, mul_rowvec(attn.attend(p.q, k_cache, v_cache, nullptr), m.gate1));
  Tensor m_in = modulate(layernorm_rows(h), m.shift2, m.scale2);
  return add(h, mul_rowvec(mlp(m_in), m.gate2));
}

}  // namespace vat::nn
