#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "vat/nd/tensor.hpp"

// Differentiable operations over Tensor. Every op writes its output buffer
// once during the forward pass and, when autograd is enabled and any input
// requires gradients, attaches a Node whose backward lambda accumulates
// (+=) into the parents' grad buffers.
namespace vat::nd {

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh form
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1 + e^x), numerically stable

// ---- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& x, const std::vector<int>& shape);
Tensor transpose2d(const Tensor& x);                     // [r,c] -> [c,r]
Tensor slice_rows(const Tensor& x, int r0, int r1);      // rows [r0, r1)
Tensor slice_cols(const Tensor& x, int c0, int c1);      // cols [c0, c1)
Tensor concat_rows(const std::vector<Tensor>& parts);    // same col count
Tensor concat_cols(const std::vector<Tensor>& parts);    // same row count

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);         // [m,k]x[k,n] -> [m,n]
Tensor add_rowvec(const Tensor& x, const Tensor& b);     // [r,c] + [c] per row
Tensor mul_rowvec(const Tensor& x, const Tensor& s);     // [r,c] * [c] per row

// ---- normalization / softmax -----------------------------------------------
Tensor layernorm_rows(const Tensor& x, float eps = 1e-5f);  // per-row, no affine
Tensor l2norm_rows(const Tensor& x, float eps = 1e-6f);
Tensor softmax_rows(const Tensor& x);
// allow[r*cols + c] != 0 means position c is attendable from row r. Rows with
// nothing allowed produce exact zeros (and propagate zero gradient).
Tensor masked_softmax_rows(const Tensor& x,
                           std::shared_ptr<const std::vector<uint8_t>> allow);

// softmax(q kᵀ / sqrt(d) with mask) v; rows whose keys are all masked yield
// zero vectors.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::shared_ptr<const std::vector<uint8_t>> mask = nullptr);

// ---- reductions / losses ---------------------------------------------------
Tensor sum_all(const Tensor& x);   // -> [1]
Tensor mean_all(const Tensor& x);  // -> [1]
Tensor mse_mean(const Tensor& a, const Tensor& b);
// mean over elements of max(z,0) - z*t + log(1 + e^(-|z|)); targets may be soft
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets);
Tensor cross_entropy_mean(const Tensor& logits, std::vector<int> targets);
// KL( N(mu, sigma^2) || N(0,1) ) summed over elements:
// 0.5 * sum(mu^2 + sigma^2 - 1 - 2*log(sigma))
Tensor kl_standard_normal_sum(const Tensor& mu, const Tensor& sigma);

// ---- indexing / quantization plumbing ---------------------------------------
Tensor gather_rows(const Tensor& table, std::vector<int> idx);  // -> [N, cols]
// Forward takes the values of `hard`; gradient flows to `soft` unchanged
// (straight-through estimator: soft + stop_grad(hard - soft)).
Tensor straight_through(const Tensor& soft, const Tensor& hard);
Tensor stop_grad(const Tensor& x);

// ---- sequence resampling ([rows, cols], resampled along rows) ---------------
// Adaptive mean pooling: output row j averages input rows
// [floor(j*r/out), ceil((j+1)*r/out)). Exact-window for integer ratios.
Tensor avgpool_rows(const Tensor& x, int out_rows);
// Half-pixel-aligned linear interpolation with edge clamping; identity when
// out_rows == rows, and mean-preserving for integer upsampling ratios.
Tensor lininterp_rows(const Tensor& x, int out_rows);

// ---- image ops ([channels, height, width]) -----------------------------------
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride = 1, int pad = 1);  // w: [filters, c, kh, kw]
Tensor upsample2x_nearest(const Tensor& x);
// uv holds n (u, v) pairs in [0,1]^2 with align-corners mapping; -> [n, c].
Tensor bilinear_sample(const Tensor& plane, std::vector<float> uv);

}  // namespace vat::nd
