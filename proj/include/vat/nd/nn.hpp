#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vat/nd/adam.hpp"
#include "vat/nd/ops.hpp"
#include "vat/nd/tensor.hpp"

// Small transformer building blocks assembled from nd ops. Constructors
// register their parameters in a ParamStore under a dotted name prefix.
namespace vat::nn {

using nd::Tensor;

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(nd::ParamStore& ps, const std::string& prefix, int in, int out, nd::Rng& rng);

  Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
  void zero_init();  // for modulation heads that must start as identity
};

struct LayerNorm {
  Tensor gamma, beta;  // [dim]
  float eps = 1e-5f;

  LayerNorm() = default;
  LayerNorm(nd::ParamStore& ps, const std::string& prefix, int dim);

  Tensor operator()(const Tensor& x) const {
    return add_rowvec(mul_rowvec(layernorm_rows(x, eps), gamma), beta);
  }
};

struct Mlp {
  Linear fc1, fc2;

  Mlp() = default;
  Mlp(nd::ParamStore& ps, const std::string& prefix, int dim, int hidden, nd::Rng& rng);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

// Multi-head attention over row-major [tokens, dim] sequences. With qk_norm
// enabled, per-head query/key rows are L2-normalized to unit vectors before
// the dot product and a learnable per-channel gain (init sqrt(head_dim))
// restores a usable score range.
struct MultiHeadAttention {
  int dim = 0, heads = 1, head_dim = 0;
  bool qk_norm = false;
  Linear wq, wk, wv, wo;
  Tensor qk_gain;  // [dim], only registered when qk_norm

  MultiHeadAttention() = default;
  MultiHeadAttention(nd::ParamStore& ps, const std::string& prefix, int dim, int heads,
                     bool qk_norm, nd::Rng& rng);

  struct Projected {
    Tensor q, k, v;
  };
  // q from x_q, k/v from x_kv (self-attention when both are the same tensor)
  Projected project(const Tensor& x_q, const Tensor& x_kv) const;
  // head split + (optional) qk normalization + masked softmax + output proj
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
                std::shared_ptr<const std::vector<uint8_t>> mask) const;

  Tensor operator()(const Tensor& x_q, const Tensor& x_kv,
                    std::shared_ptr<const std::vector<uint8_t>> mask = nullptr) const {
    Projected p = project(x_q, x_kv);
    return attend(p.q, p.k, p.v, std::move(mask));
  }
};

// Pre-norm self-attention block: x + attn(ln1(x)), then x + mlp(ln2(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;

  TransformerBlock() = default;
  TransformerBlock(nd::ParamStore& ps, const std::string& prefix, int dim, int heads,
                   int mlp_hidden, bool qk_norm, nd::Rng& rng);

  Tensor operator()(const Tensor& x,
                    std::shared_ptr<const std::vector<uint8_t>> mask = nullptr) const;
};

// Pre-norm cross-attention + MLP: queries read from a fixed context.
struct CrossAttentionLayer {
  LayerNorm ln_q, ln_kv, ln2;
  MultiHeadAttention attn;
  Mlp mlp;

  CrossAttentionLayer() = default;
  CrossAttentionLayer(nd::ParamStore& ps, const std::string& prefix, int dim, int heads,
                      int mlp_hidden, nd::Rng& rng);

  Tensor operator()(const Tensor& queries, const Tensor& context) const;
};

// Condition-modulated block: layernorm without affine, then shift/scale/gate
// from a per-sequence condition row. The modulation head is zero-initialized,
// so an untrained block is the identity map.
struct AdaLnBlock {
  int dim = 0;
  MultiHeadAttention attn;
  Mlp mlp;
  Linear mod;  // cond [1, c] -> [1, 6c]: shift1, scale1, gate1, shift2, scale2, gate2

  AdaLnBlock() = default;
  AdaLnBlock(nd::ParamStore& ps, const std::string& prefix, int dim, int heads, int mlp_hidden,
             int cond_dim, bool qk_norm, nd::Rng& rng);

  struct Modulation {
    Tensor shift1, scale1, gate1, shift2, scale2, gate2;  // each [dim]
  };
  Modulation modulation(const Tensor& cond) const;  // cond: [1, cond_dim]

  Tensor operator()(const Tensor& x, const Tensor& cond,
                    std::shared_ptr<const std::vector<uint8_t>> mask) const;

  // Generation path: projects k/v for x_new, appends them to the caller's
  // running cache rows, and attends over the full cache (everything cached is
  // attendable from the new rows).
  Tensor forward_cached(const Tensor& x_new, const Tensor& cond, Tensor& k_cache,
                        Tensor& v_cache) const;
};

// y * (1 + scale) + shift, with [dim] vectors broadcast over rows
Tensor modulate(const Tensor& y, const Tensor& shift, const Tensor& scale);

}  // namespace vat::nn
