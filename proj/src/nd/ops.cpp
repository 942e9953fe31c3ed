#include "vat/nd/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace vat::nd {

namespace {

// Pin BLAS to one thread so reductions have a fixed order and results are
// reproducible bit-for-bit across runs.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init_once;

void sgemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
              n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

Tensor make_out(std::vector<int> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<float>>(Tensor::numel_of(t.shape), 0.0f);
  return t;
}

bool any_requires(const std::vector<Tensor>& parents) {
  for (const Tensor& p : parents) {
    if (p.requires_grad) return true;
  }
  return false;
}

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void(Tensor&)> backward,
            const char* op) {
  if (!grad_enabled() || !any_requires(parents)) return;
  out.requires_grad = true;
  out.ensure_grad();
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(backward);
  out.node->op = op;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::runtime_error(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                             " vs " + shape_str(b.shape));
  }
}

void require_rank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw std::runtime_error(std::string(op) + ": expected rank-2 tensor, got " +
                             shape_str(x.shape));
  }
}

float sigmoid_scalar(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor elementwise_unary(const Tensor& x, const char* op, float (*fwd)(float),
                         float (*dfdx)(float, float) /* (x, y) -> dy/dx */) {
  Tensor out = make_out(x.shape);
  const size_t n = x.numel();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = fwd((*x.data)[i]);
  attach(
      out, {x},
      [dfdx](Tensor& o) {
        Tensor& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < o.numel(); ++i) {
          (*p.grad)[i] += (*o.grad)[i] * dfdx((*p.data)[i], (*o.data)[i]);
        }
      },
      op);
  return out;
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_out(a.shape);
  for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  attach(
      out, {a, b},
      [](Tensor& o) {
        for (int pi = 0; pi < 2; ++pi) {
          Tensor& p = o.node->parents[static_cast<size_t>(pi)];
          if (!p.requires_grad) continue;
          for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
        }
      },
      "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape);
  for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  attach(
      out, {a, b},
      [](Tensor& o) {
        Tensor& pa = o.node->parents[0];
        Tensor& pb = o.node->parents[1];
        for (size_t i = 0; i < o.numel(); ++i) {
          float g = (*o.grad)[i];
          if (pa.requires_grad) (*pa.grad)[i] += g;
          if (pb.requires_grad) (*pb.grad)[i] -= g;
        }
      },
      "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape);
  for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  attach(
      out, {a, b},
      [](Tensor& o) {
        Tensor& pa = o.node->parents[0];
        Tensor& pb = o.node->parents[1];
        for (size_t i = 0; i < o.numel(); ++i) {
          float g = (*o.grad)[i];
          if (pa.requires_grad) (*pa.grad)[i] += g * (*pb.data)[i];
          if (pb.requires_grad) (*pb.grad)[i] += g * (*pa.data)[i];
        }
      },
      "mul");
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = make_out(a.shape);
  for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * s;
  attach(
      out, {a},
      [s](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i] * s;
      },
      "scale");
  return out;
}

Tensor add_scalar(const Tensor& a, float s) {
  Tensor out = make_out(a.shape);
  for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] + s;
  attach(
      out, {a},
      [](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
      },
      "add_scalar");
  return out;
}

Tensor relu(const Tensor& x) {
  return elementwise_unary(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& x) {
  return elementwise_unary(
      x, "gelu",
      [](float v) {
        const float k = 0.7978845608028654f;  // sqrt(2/pi)
        float u = k * (v + 0.044715f * v * v * v);
        return 0.5f * v * (1.0f + std::tanh(u));
      },
      [](float v, float) {
        const float k = 0.7978845608028654f;
        float u = k * (v + 0.044715f * v * v * v);
        float t = std::tanh(u);
        float du = k * (1.0f + 3.0f * 0.044715f * v * v);
        return 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
      });
}

Tensor sigmoid(const Tensor& x) {
  return elementwise_unary(
      x, "sigmoid", [](float v) { return sigmoid_scalar(v); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh_act(const Tensor& x) {
  return elementwise_unary(
      x, "tanh", [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor softplus(const Tensor& x) {
  return elementwise_unary(
      x, "softplus",
      [](float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v))); },
      [](float v, float) { return sigmoid_scalar(v); });
}

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, const std::vector<int>& shape) {
  if (Tensor::numel_of(shape) != x.numel()) {
    throw std::runtime_error("reshape: cannot view " + shape_str(x.shape) + " as " +
                             shape_str(shape));
  }
  Tensor out;
  out.shape = shape;
  out.data = x.data;  // values are read-only once produced, sharing is safe
  attach(
      out, {x},
      [](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
      },
      "reshape");
  return out;
}

Tensor transpose2d(const Tensor& x) {
  require_rank2(x, "transpose2d");
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out({c, r});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      (*out.data)[static_cast<size_t>(j) * r + i] = (*x.data)[static_cast<size_t>(i) * c + j];
    }
  }
  attach(
      out, {x},
      [r, c](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            (*p.grad)[static_cast<size_t>(i) * c + j] +=
                (*o.grad)[static_cast<size_t>(j) * r + i];
          }
        }
      },
      "transpose2d");
  return out;
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  require_rank2(x, "slice_rows");
  const int r = x.dim(0), c = x.dim(1);
  if (r0 < 0 || r1 > r || r0 >= r1) {
    throw std::runtime_error("slice_rows: range [" + std::to_string(r0) + "," +
                             std::to_string(r1) + ") invalid for " + shape_str(x.shape));
  }
  Tensor out = make_out({r1 - r0, c});
  std::copy_n(x.data->begin() + static_cast<size_t>(r0) * c,
              static_cast<size_t>(r1 - r0) * c, out.data->begin());
  attach(
      out, {x},
      [r0, c](Tensor& o) {
        Tensor& p = o.node->parents[0];
        size_t off = static_cast<size_t>(r0) * c;
        for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[off + i] += (*o.grad)[i];
      },
      "slice_rows");
  return out;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  require_rank2(x, "slice_cols");
  const int r = x.dim(0), c = x.dim(1);
  if (c0 < 0 || c1 > c || c0 >= c1) {
    throw std::runtime_error("slice_cols: range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") invalid for " + shape_str(x.shape));
  }
  const int w = c1 - c0;
  Tensor out = make_out({r, w});
  for (int i = 0; i < r; ++i) {
    std::copy_n(x.data->begin() + static_cast<size_t>(i) * c + c0, w,
                out.data->begin() + static_cast<size_t>(i) * w);
  }
  attach(
      out, {x},
      [r, c, c0, w](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < w; ++j) {
            (*p.grad)[static_cast<size_t>(i) * c + c0 + j] +=
                (*o.grad)[static_cast<size_t>(i) * w + j];
          }
        }
      },
      "slice_cols");
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: no inputs");
  const int c = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
  int rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != c) {
      throw std::runtime_error("concat_rows: column mismatch " + shape_str(parts[0].shape) +
                               " vs " + shape_str(p.shape));
    }
    rows += p.dim(0);
  }
  Tensor out = make_out({rows, c});
  size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.data->begin(), p.numel(), out.data->begin() + off);
    off += p.numel();
  }
  attach(
      out, parts,
      [](Tensor& o) {
        size_t off = 0;
        for (Tensor& p : o.node->parents) {
          if (p.requires_grad) {
            for (size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += (*o.grad)[off + i];
          }
          off += p.numel();
        }
      },
      "concat_rows");
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: no inputs");
  const int r = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
  int cols = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) {
      throw std::runtime_error("concat_cols: row mismatch " + shape_str(parts[0].shape) +
                               " vs " + shape_str(p.shape));
    }
    cols += p.dim(1);
  }
  Tensor out = make_out({r, cols});
  int c_off = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < r; ++i) {
      std::copy_n(p.data->begin() + static_cast<size_t>(i) * w, w,
                  out.data->begin() + static_cast<size_t>(i) * cols + c_off);
    }
    c_off += w;
  }
  attach(
      out, parts,
      [r, cols](Tensor& o) {
        int c_off = 0;
        for (Tensor& p : o.node->parents) {
          const int w = p.dim(1);
          if (p.requires_grad) {
            for (int i = 0; i < r; ++i) {
              for (int j = 0; j < w; ++j) {
                (*p.grad)[static_cast<size_t>(i) * w + j] +=
                    (*o.grad)[static_cast<size_t>(i) * cols + c_off + j];
              }
            }
          }
          c_off += w;
        }
      },
      "concat_cols");
  return out;
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw std::runtime_error("matmul: inner dimension mismatch " + shape_str(a.shape) + " x " +
                             shape_str(b.shape));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_out({m, n});
  sgemm(false, false, m, n, k, 1.0f, a.data->data(), k, b.data->data(), n, 0.0f,
        out.data->data(), n);
  attach(
      out, {a, b},
      [m, k, n](Tensor& o) {
        Tensor& pa = o.node->parents[0];
        Tensor& pb = o.node->parents[1];
        if (pa.requires_grad) {
          // dA += G * B^T
          sgemm(false, true, m, k, n, 1.0f, o.grad->data(), n, pb.data->data(), n, 1.0f,
                pa.grad->data(), k);
        }
        if (pb.requires_grad) {
          // dB += A^T * G
          sgemm(true, false, k, n, m, 1.0f, pa.data->data(), k, o.grad->data(), n, 1.0f,
                pb.grad->data(), n);
        }
      },
      "matmul");
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  require_rank2(x, "add_rowvec");
  if (b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw std::runtime_error("add_rowvec: vector " + shape_str(b.shape) +
                             " does not match columns of " + shape_str(x.shape));
  }
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out(x.shape);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      (*out.data)[static_cast<size_t>(i) * c + j] =
          (*x.data)[static_cast<size_t>(i) * c + j] + (*b.data)[static_cast<size_t>(j)];
    }
  }
  attach(
      out, {x, b},
      [r, c](Tensor& o) {
        Tensor& px = o.node->parents[0];
        Tensor& pb = o.node->parents[1];
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            float g = (*o.grad)[static_cast<size_t>(i) * c + j];
            if (px.requires_grad) (*px.grad)[static_cast<size_t>(i) * c + j] += g;
            if (pb.requires_grad) (*pb.grad)[static_cast<size_t>(j)] += g;
          }
        }
      },
      "add_rowvec");
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& s) {
  require_rank2(x, "mul_rowvec");
  if (s.rank() != 1 || s.dim(0) != x.dim(1)) {
    throw std::runtime_error("mul_rowvec: vector " + shape_str(s.shape) +
                             " does not match columns of " + shape_str(x.shape));
  }
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out(x.shape);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      (*out.data)[static_cast<size_t>(i) * c + j] =
          (*x.data)[static_cast<size_t>(i) * c + j] * (*s.data)[static_cast<size_t>(j)];
    }
  }
  attach(
      out, {x, s},
      [r, c](Tensor& o) {
        Tensor& px = o.node->parents[0];
        Tensor& ps = o.node->parents[1];
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) {
            size_t ij = static_cast<size_t>(i) * c + j;
            float g = (*o.grad)[ij];
            if (px.requires_grad) (*px.grad)[ij] += g * (*ps.data)[static_cast<size_t>(j)];
            if (ps.requires_grad) (*ps.grad)[static_cast<size_t>(j)] += g * (*px.data)[ij];
          }
        }
      },
      "mul_rowvec");
  return out;
}

// ---- normalization / softmax -----------------------------------------------

Tensor layernorm_rows(const Tensor& x, float eps) {
  require_rank2(x, "layernorm_rows");
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out(x.shape);
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const float* row = x.data->data() + static_cast<size_t>(i) * c;
    float m = 0.0f;
    for (int j = 0; j < c; ++j) m += row[j];
    m /= static_cast<float>(c);
    float v = 0.0f;
    for (int j = 0; j < c; ++j) v += (row[j] - m) * (row[j] - m);
    v /= static_cast<float>(c);
    float inv = 1.0f / std::sqrt(v + eps);
    (*inv_std)[static_cast<size_t>(i)] = inv;
    float* orow = out.data->data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) orow[j] = (row[j] - m) * inv;
  }
  attach(
      out, {x},
      [r, c, inv_std](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          const float* y = o.data->data() + static_cast<size_t>(i) * c;
          const float* g = o.grad->data() + static_cast<size_t>(i) * c;
          float* dx = p.grad->data() + static_cast<size_t>(i) * c;
          float mg = 0.0f, mgy = 0.0f;
          for (int j = 0; j < c; ++j) {
            mg += g[j];
            mgy += g[j] * y[j];
          }
          mg /= static_cast<float>(c);
          mgy /= static_cast<float>(c);
          float inv = (*inv_std)[static_cast<size_t>(i)];
          for (int j = 0; j < c; ++j) dx[j] += inv * (g[j] - mg - y[j] * mgy);
        }
      },
      "layernorm_rows");
  return out;
}

Tensor l2norm_rows(const Tensor& x, float eps) {
  require_rank2(x, "l2norm_rows");
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out(x.shape);
  auto norms = std::make_shared<std::vector<float>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const float* row = x.data->data() + static_cast<size_t>(i) * c;
    float s = 0.0f;
    for (int j = 0; j < c; ++j) s += row[j] * row[j];
    float n = std::sqrt(s + eps);
    (*norms)[static_cast<size_t>(i)] = n;
    float* orow = out.data->data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) orow[j] = row[j] / n;
  }
  attach(
      out, {x},
      [r, c, norms](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          const float* y = o.data->data() + static_cast<size_t>(i) * c;
          const float* g = o.grad->data() + static_cast<size_t>(i) * c;
          float* dx = p.grad->data() + static_cast<size_t>(i) * c;
          float dot = 0.0f;
          for (int j = 0; j < c; ++j) dot += g[j] * y[j];
          float n = (*norms)[static_cast<size_t>(i)];
          for (int j = 0; j < c; ++j) dx[j] += (g[j] - y[j] * dot) / n;
        }
      },
      "l2norm_rows");
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const int r = x.dim(0), c = x.dim(1);
  Tensor out = make_out(x.shape);
  for (int i = 0; i < r; ++i) {
    const float* row = x.data->data() + static_cast<size_t>(i) * c;
    float* orow = out.data->data() + static_cast<size_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    float sum = 0.0f;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= sum;
  }
  attach(
      out, {x},
      [r, c](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          const float* y = o.data->data() + static_cast<size_t>(i) * c;
          const float* g = o.grad->data() + static_cast<size_t>(i) * c;
          float* dx = p.grad->data() + static_cast<size_t>(i) * c;
          float dot = 0.0f;
          for (int j = 0; j < c; ++j) dot += g[j] * y[j];
          for (int j = 0; j < c; ++j) dx[j] += y[j] * (g[j] - dot);
        }
      },
      "softmax_rows");
  return out;
}

Tensor masked_softmax_rows(const Tensor& x,
                           std::shared_ptr<const std::vector<uint8_t>> allow) {
  require_rank2(x, "masked_softmax_rows");
  const int r = x.dim(0), c = x.dim(1);
  if (!allow || allow->size() != x.numel()) {
    throw std::runtime_error("masked_softmax_rows: mask size does not match " +
                             shape_str(x.shape));
  }
  Tensor out = make_out(x.shape);
  for (int i = 0; i < r; ++i) {
    const float* row = x.data->data() + static_cast<size_t>(i) * c;
    const uint8_t* al = allow->data() + static_cast<size_t>(i) * c;
    float* orow = out.data->data() + static_cast<size_t>(i) * c;
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < c; ++j) {
      if (al[j]) mx = std::max(mx, row[j]);
    }
    if (!std::isfinite(mx)) continue;  // fully masked row stays exactly zero
    float sum = 0.0f;
    for (int j = 0; j < c; ++j) {
      if (al[j]) {
        orow[j] = std::exp(row[j] - mx);
        sum += orow[j];
      }
    }
    for (int j = 0; j < c; ++j) {
      if (al[j]) orow[j] /= sum;
    }
  }
  attach(
      out, {x},
      [r, c, allow](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < r; ++i) {
          const float* y = o.data->data() + static_cast<size_t>(i) * c;
          const float* g = o.grad->data() + static_cast<size_t>(i) * c;
          const uint8_t* al = allow->data() + static_cast<size_t>(i) * c;
          float* dx = p.grad->data() + static_cast<size_t>(i) * c;
          float dot = 0.0f;
          for (int j = 0; j < c; ++j) {
            if (al[j]) dot += g[j] * y[j];
          }
          for (int j = 0; j < c; ++j) {
            if (al[j]) dx[j] += y[j] * (g[j] - dot);
          }
        }
      },
      "masked_softmax_rows");
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::shared_ptr<const std::vector<uint8_t>> mask) {
  require_rank2(q, "attention");
  require_rank2(k, "attention");
  require_rank2(v, "attention");
  if (q.dim(1) != k.dim(1)) {
    throw std::runtime_error("attention: q/k feature mismatch " + shape_str(q.shape) + " vs " +
                             shape_str(k.shape));
  }
  if (k.dim(0) != v.dim(0)) {
    throw std::runtime_error("attention: k/v length mismatch " + shape_str(k.shape) + " vs " +
                             shape_str(v.shape));
  }
  Tensor scores = scale(matmul(q, transpose2d(k)),
                        1.0f / std::sqrt(static_cast<float>(q.dim(1))));
  Tensor probs = mask ? masked_softmax_rows(scores, std::move(mask)) : softmax_rows(scores);
  return matmul(probs, v);
}

// ---- reductions / losses ---------------------------------------------------

Tensor sum_all(const Tensor& x) {
  Tensor out = make_out({1});
  float s = 0.0f;
  for (float v : *x.data) s += v;
  (*out.data)[0] = s;
  attach(
      out, {x},
      [](Tensor& o) {
        Tensor& p = o.node->parents[0];
        float g = (*o.grad)[0];
        for (size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += g;
      },
      "sum_all");
  return out;
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw std::runtime_error("mean_all: empty tensor");
  Tensor out = make_out({1});
  float s = 0.0f;
  for (float v : *x.data) s += v;
  (*out.data)[0] = s / static_cast<float>(x.numel());
  attach(
      out, {x},
      [](Tensor& o) {
        Tensor& p = o.node->parents[0];
        float g = (*o.grad)[0] / static_cast<float>(p.numel());
        for (size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += g;
      },
      "mean_all");
  return out;
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_mean");
  if (a.numel() == 0) throw std::runtime_error("mse_mean: empty tensor");
  Tensor out = make_out({1});
  float s = 0.0f;
  for (size_t i = 0; i < a.numel(); ++i) {
    float d = (*a.data)[i] - (*b.data)[i];
    s += d * d;
  }
  (*out.data)[0] = s / static_cast<float>(a.numel());
  attach(
      out, {a, b},
      [](Tensor& o) {
        Tensor& pa = o.node->parents[0];
        Tensor& pb = o.node->parents[1];
        float g = (*o.grad)[0] * 2.0f / static_cast<float>(pa.numel());
        for (size_t i = 0; i < pa.numel(); ++i) {
          float d = (*pa.data)[i] - (*pb.data)[i];
          if (pa.requires_grad) (*pa.grad)[i] += g * d;
          if (pb.requires_grad) (*pb.grad)[i] -= g * d;
        }
      },
      "mse_mean");
  return out;
}

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits_mean");
  if (logits.numel() == 0) throw std::runtime_error("bce_with_logits_mean: empty tensor");
  Tensor out = make_out({1});
  double s = 0.0;
  for (size_t i = 0; i < logits.numel(); ++i) {
    float z = (*logits.data)[i], t = (*targets.data)[i];
    s += std::max(z, 0.0f) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  (*out.data)[0] = static_cast<float>(s / static_cast<double>(logits.numel()));
  attach(
      out, {logits, targets},
      [](Tensor& o) {
        Tensor& pz = o.node->parents[0];
        Tensor& pt = o.node->parents[1];
        float g = (*o.grad)[0] / static_cast<float>(pz.numel());
        for (size_t i = 0; i < pz.numel(); ++i) {
          float z = (*pz.data)[i], t = (*pt.data)[i];
          if (pz.requires_grad) (*pz.grad)[i] += g * (sigmoid_scalar(z) - t);
          if (pt.requires_grad) (*pt.grad)[i] += g * (-z);
        }
      },
      "bce_with_logits_mean");
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, std::vector<int> targets) {
  require_rank2(logits, "cross_entropy_mean");
  const int n = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != n) {
    throw std::runtime_error("cross_entropy_mean: " + std::to_string(targets.size()) +
                             " targets for " + shape_str(logits.shape));
  }
  for (int t : targets) {
    if (t < 0 || t >= v) {
      throw std::runtime_error("cross_entropy_mean: target " + std::to_string(t) +
                               " outside vocabulary of size " + std::to_string(v));
    }
  }
  Tensor out = make_out({1});
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data->data() + static_cast<size_t>(i) * v;
    float mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    loss += mx + std::log(sum) - row[targets[static_cast<size_t>(i)]];
  }
  (*out.data)[0] = static_cast<float>(loss / n);
  attach(
      out, {logits},
      [n, v, targets = std::move(targets)](Tensor& o) {
        Tensor& p = o.node->parents[0];
        float g = (*o.grad)[0] / static_cast<float>(n);
        for (int i = 0; i < n; ++i) {
          const float* row = p.data->data() + static_cast<size_t>(i) * v;
          float* dx = p.grad->data() + static_cast<size_t>(i) * v;
          float mx = row[0];
          for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
          float sum = 0.0f;
          for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
          for (int j = 0; j < v; ++j) {
            float p_ij = std::exp(row[j] - mx) / sum;
            dx[j] += g * (p_ij - (j == targets[static_cast<size_t>(i)] ? 1.0f : 0.0f));
          }
        }
      },
      "cross_entropy_mean");
  return out;
}

Tensor kl_standard_normal_sum(const Tensor& mu, const Tensor& sigma) {
  require_same_shape(mu, sigma, "kl_standard_normal_sum");
  Tensor out = make_out({1});
  double s = 0.0;
  for (size_t i = 0; i < mu.numel(); ++i) {
    float m = (*mu.data)[i], sd = (*sigma.data)[i];
    if (!(sd > 0.0f)) {
      throw std::runtime_error("kl_standard_normal_sum: non-positive sigma " +
                               std::to_string(sd));
    }
    s += 0.5 * (static_cast<double>(m) * m + static_cast<double>(sd) * sd - 1.0 -
                2.0 * std::log(static_cast<double>(sd)));
  }
  (*out.data)[0] = static_cast<float>(s);
  attach(
      out, {mu, sigma},
      [](Tensor& o) {
        Tensor& pm = o.node->parents[0];
        Tensor& ps = o.node->parents[1];
        float g = (*o.grad)[0];
        for (size_t i = 0; i < pm.numel(); ++i) {
          if (pm.requires_grad) (*pm.grad)[i] += g * (*pm.data)[i];
          if (ps.requires_grad) {
            float sd = (*ps.data)[i];
            (*ps.grad)[i] += g * (sd - 1.0f / sd);
          }
        }
      },
      "kl_standard_normal_sum");
  return out;
}

// ---- indexing / quantization plumbing ---------------------------------------

Tensor gather_rows(const Tensor& table, std::vector<int> idx) {
  require_rank2(table, "gather_rows");
  const int v = table.dim(0), c = table.dim(1);
  for (int i : idx) {
    if (i < 0 || i >= v) {
      throw std::runtime_error("gather_rows: index " + std::to_string(i) +
                               " outside table of " + std::to_string(v) + " rows");
    }
  }
  const int n = static_cast<int>(idx.size());
  Tensor out = make_out({n, c});
  for (int i = 0; i < n; ++i) {
    std::copy_n(table.data->begin() + static_cast<size_t>(idx[static_cast<size_t>(i)]) * c, c,
                out.data->begin() + static_cast<size_t>(i) * c);
  }
  attach(
      out, {table},
      [n, c, idx = std::move(idx)](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < n; ++i) {
          const float* g = o.grad->data() + static_cast<size_t>(i) * c;
          float* dst = p.grad->data() + static_cast<size_t>(idx[static_cast<size_t>(i)]) * c;
          for (int j = 0; j < c; ++j) dst[j] += g[j];
        }
      },
      "gather_rows");
  return out;
}

Tensor straight_through(const Tensor& soft, const Tensor& hard) {
  require_same_shape(soft, hard, "straight_through");
  Tensor out = make_out(soft.shape);
  std::copy(hard.data->begin(), hard.data->end(), out.data->begin());
  attach(
      out, {soft},
      [](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
      },
      "straight_through");
  return out;
}

Tensor stop_grad(const Tensor& x) {
  Tensor out;
  out.shape = x.shape;
  out.data = x.data;
  return out;
}

// ---- sequence resampling -----------------------------------------------------

Tensor avgpool_rows(const Tensor& x, int out_rows) {
  require_rank2(x, "avgpool_rows");
  const int r = x.dim(0), c = x.dim(1);
  if (out_rows <= 0 || out_rows > r) {
    throw std::runtime_error("avgpool_rows: cannot pool " + shape_str(x.shape) + " to " +
                             std::to_string(out_rows) + " rows");
  }
  Tensor out = make_out({out_rows, c});
  for (int j = 0; j < out_rows; ++j) {
    int s = static_cast<int>((static_cast<int64_t>(j) * r) / out_rows);
    int e = static_cast<int>((static_cast<int64_t>(j + 1) * r + out_rows - 1) / out_rows);
    float inv = 1.0f / static_cast<float>(e - s);
    float* orow = out.data->data() + static_cast<size_t>(j) * c;
    for (int i = s; i < e; ++i) {
      const float* row = x.data->data() + static_cast<size_t>(i) * c;
      for (int k = 0; k < c; ++k) orow[k] += row[k] * inv;
    }
  }
  attach(
      out, {x},
      [r, c, out_rows](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int j = 0; j < out_rows; ++j) {
          int s = static_cast<int>((static_cast<int64_t>(j) * r) / out_rows);
          int e = static_cast<int>((static_cast<int64_t>(j + 1) * r + out_rows - 1) / out_rows);
          float inv = 1.0f / static_cast<float>(e - s);
          const float* g = o.grad->data() + static_cast<size_t>(j) * c;
          for (int i = s; i < e; ++i) {
            float* dx = p.grad->data() + static_cast<size_t>(i) * c;
            for (int k = 0; k < c; ++k) dx[k] += g[k] * inv;
          }
        }
      },
      "avgpool_rows");
  return out;
}

Tensor lininterp_rows(const Tensor& x, int out_rows) {
  require_rank2(x, "lininterp_rows");
  const int r = x.dim(0), c = x.dim(1);
  if (out_rows <= 0) throw std::runtime_error("lininterp_rows: out_rows must be positive");
  // Precompute (i0, i1, weight) per output row; shared with the backward pass.
  struct Mix {
    int i0, i1;
    float f;
  };
  auto plan = std::make_shared<std::vector<Mix>>(static_cast<size_t>(out_rows));
  for (int j = 0; j < out_rows; ++j) {
    float p = (static_cast<float>(j) + 0.5f) * static_cast<float>(r) /
                  static_cast<float>(out_rows) -
              0.5f;
    p = std::min(std::max(p, 0.0f), static_cast<float>(r - 1));
    int i0 = std::min(static_cast<int>(p), r - 1);
    int i1 = std::min(i0 + 1, r - 1);
    (*plan)[static_cast<size_t>(j)] = {i0, i1, p - static_cast<float>(i0)};
  }
  Tensor out = make_out({out_rows, c});
  for (int j = 0; j < out_rows; ++j) {
    const Mix& m = (*plan)[static_cast<size_t>(j)];
    const float* a = x.data->data() + static_cast<size_t>(m.i0) * c;
    const float* b = x.data->data() + static_cast<size_t>(m.i1) * c;
    float* orow = out.data->data() + static_cast<size_t>(j) * c;
    for (int k = 0; k < c; ++k) orow[k] = (1.0f - m.f) * a[k] + m.f * b[k];
  }
  attach(
      out, {x},
      [c, out_rows, plan](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int j = 0; j < out_rows; ++j) {
          const Mix& m = (*plan)[static_cast<size_t>(j)];
          const float* g = o.grad->data() + static_cast<size_t>(j) * c;
          float* da = p.grad->data() + static_cast<size_t>(m.i0) * c;
          float* db = p.grad->data() + static_cast<size_t>(m.i1) * c;
          for (int k = 0; k < c; ++k) {
            da[k] += (1.0f - m.f) * g[k];
            db[k] += m.f * g[k];
          }
        }
      },
      "lininterp_rows");
  return out;
}

// ---- image ops ---------------------------------------------------------------

namespace {

struct ConvDims {
  int c, h, w, f, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.rank() != 3) {
    throw std::runtime_error("conv2d: input must be [c,h,w], got " + shape_str(x.shape));
  }
  if (w.rank() != 4) {
    throw std::runtime_error("conv2d: weight must be [f,c,kh,kw], got " + shape_str(w.shape));
  }
  if (w.dim(1) != x.dim(0)) {
    throw std::runtime_error("conv2d: channel mismatch " + shape_str(x.shape) + " vs " +
                             shape_str(w.shape));
  }
  ConvDims d;
  d.c = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.f = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh <= 0 || d.ow <= 0) {
    throw std::runtime_error("conv2d: kernel " + shape_str(w.shape) +
                             " does not fit input " + shape_str(x.shape));
  }
  return d;
}

void im2col(const float* x, const ConvDims& d, int stride, int pad, float* col) {
  const int ohw = d.oh * d.ow;
  for (int ci = 0; ci < d.c; ++ci) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        float* dst = col + static_cast<size_t>((ci * d.kh + ki) * d.kw + kj) * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          int iy = oy * stride - pad + ki;
          for (int ox = 0; ox < d.ow; ++ox) {
            int ix = ox * stride - pad + kj;
            bool in = iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
            dst[oy * d.ow + ox] =
                in ? x[(static_cast<size_t>(ci) * d.h + iy) * d.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvDims& d, int stride, int pad, float* dx) {
  const int ohw = d.oh * d.ow;
  for (int ci = 0; ci < d.c; ++ci) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* src = col + static_cast<size_t>((ci * d.kh + ki) * d.kw + kj) * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.ow; ++ox) {
            int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= d.w) continue;
            dx[(static_cast<size_t>(ci) * d.h + iy) * d.w + ix] += src[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  ConvDims d = conv_dims(x, w, stride, pad);
  if (b.rank() != 1 || b.dim(0) != d.f) {
    throw std::runtime_error("conv2d: bias " + shape_str(b.shape) + " does not match " +
                             std::to_string(d.f) + " filters");
  }
  const int ckk = d.c * d.kh * d.kw;
  const int ohw = d.oh * d.ow;
  auto col = std::make_shared<std::vector<float>>(static_cast<size_t>(ckk) * ohw);
  im2col(x.data->data(), d, stride, pad, col->data());
  Tensor out = make_out({d.f, d.oh, d.ow});
  sgemm(false, false, d.f, ohw, ckk, 1.0f, w.data->data(), ckk, col->data(), ohw, 0.0f,
        out.data->data(), ohw);
  for (int fi = 0; fi < d.f; ++fi) {
    float bias = (*b.data)[static_cast<size_t>(fi)];
    float* orow = out.data->data() + static_cast<size_t>(fi) * ohw;
    for (int j = 0; j < ohw; ++j) orow[j] += bias;
  }
  attach(
      out, {x, w, b},
      [d, stride, pad, col, ckk, ohw](Tensor& o) {
        Tensor& px = o.node->parents[0];
        Tensor& pw = o.node->parents[1];
        Tensor& pb = o.node->parents[2];
        if (pw.requires_grad) {
          sgemm(false, true, d.f, ckk, ohw, 1.0f, o.grad->data(), ohw, col->data(), ohw, 1.0f,
                pw.grad->data(), ckk);
        }
        if (pb.requires_grad) {
          for (int fi = 0; fi < d.f; ++fi) {
            const float* g = o.grad->data() + static_cast<size_t>(fi) * ohw;
            float s = 0.0f;
            for (int j = 0; j < ohw; ++j) s += g[j];
            (*pb.grad)[static_cast<size_t>(fi)] += s;
          }
        }
        if (px.requires_grad) {
          std::vector<float> dcol(static_cast<size_t>(ckk) * ohw);
          sgemm(true, false, ckk, ohw, d.f, 1.0f, pw.data->data(), ckk, o.grad->data(), ohw,
                0.0f, dcol.data(), ohw);
          col2im_add(dcol.data(), d, stride, pad, px.grad->data());
        }
      },
      "conv2d");
  return out;
}

Tensor upsample2x_nearest(const Tensor& x) {
  if (x.rank() != 3) {
    throw std::runtime_error("upsample2x_nearest: expected [c,h,w], got " + shape_str(x.shape));
  }
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out = make_out({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        float v = (*x.data)[(static_cast<size_t>(ci) * h + i) * w + j];
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            (*out.data)[(static_cast<size_t>(ci) * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj] = v;
          }
        }
      }
    }
  }
  attach(
      out, {x},
      [c, h, w](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int ci = 0; ci < c; ++ci) {
          for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
              float s = 0.0f;
              for (int di = 0; di < 2; ++di) {
                for (int dj = 0; dj < 2; ++dj) {
                  s += (*o.grad)[(static_cast<size_t>(ci) * 2 * h + 2 * i + di) * 2 * w +
                                 2 * j + dj];
                }
              }
              (*p.grad)[(static_cast<size_t>(ci) * h + i) * w + j] += s;
            }
          }
        }
      },
      "upsample2x_nearest");
  return out;
}

Tensor bilinear_sample(const Tensor& plane, std::vector<float> uv) {
  if (plane.rank() != 3) {
    throw std::runtime_error("bilinear_sample: expected [c,h,w], got " +
                             shape_str(plane.shape));
  }
  if (uv.size() % 2 != 0) throw std::runtime_error("bilinear_sample: odd uv list");
  const int c = plane.dim(0), h = plane.dim(1), w = plane.dim(2);
  const int n = static_cast<int>(uv.size() / 2);
  struct Tap {
    int x0, x1, y0, y1;
    float fx, fy;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    float px = uv[static_cast<size_t>(2 * i)] * static_cast<float>(w - 1);
    float py = uv[static_cast<size_t>(2 * i) + 1] * static_cast<float>(h - 1);
    px = std::min(std::max(px, 0.0f), static_cast<float>(w - 1));
    py = std::min(std::max(py, 0.0f), static_cast<float>(h - 1));
    Tap t;
    t.x0 = std::min(static_cast<int>(px), w - 1);
    t.y0 = std::min(static_cast<int>(py), h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.fx = px - static_cast<float>(t.x0);
    t.fy = py - static_cast<float>(t.y0);
    (*taps)[static_cast<size_t>(i)] = t;
  }
  Tensor out = make_out({n, c});
  for (int i = 0; i < n; ++i) {
    const Tap& t = (*taps)[static_cast<size_t>(i)];
    for (int ci = 0; ci < c; ++ci) {
      const float* pl = plane.data->data() + static_cast<size_t>(ci) * h * w;
      float top = (1.0f - t.fx) * pl[t.y0 * w + t.x0] + t.fx * pl[t.y0 * w + t.x1];
      float bot = (1.0f - t.fx) * pl[t.y1 * w + t.x0] + t.fx * pl[t.y1 * w + t.x1];
      (*out.data)[static_cast<size_t>(i) * c + ci] = (1.0f - t.fy) * top + t.fy * bot;
    }
  }
  attach(
      out, {plane},
      [c, h, w, n, taps](Tensor& o) {
        Tensor& p = o.node->parents[0];
        for (int i = 0; i < n; ++i) {
          const Tap& t = (*taps)[static_cast<size_t>(i)];
          for (int ci = 0; ci < c; ++ci) {
            float g = (*o.grad)[static_cast<size_t>(i) * c + ci];
            float* dp = p.grad->data() + static_cast<size_t>(ci) * h * w;
            dp[t.y0 * w + t.x0] += g * (1.0f - t.fx) * (1.0f - t.fy);
            dp[t.y0 * w + t.x1] += g * t.fx * (1.0f - t.fy);
            dp[t.y1 * w + t.x0] += g * (1.0f - t.fx) * t.fy;
            dp[t.y1 * w + t.x1] += g * t.fx * t.fy;
          }
        }
      },
      "bilinear_sample");
  return out;
}

}  // namespace vat::nd
