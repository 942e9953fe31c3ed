#include "vat/tok/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vat/nd/ops.hpp"
#include "vat/nd/parallel.hpp"

namespace vat::tok {

namespace {

// Squared L2 between a float row and a float entry, accumulated in double so
// exact value ties stay exact and comparisons are reproducible.
double row_dist2(const float* a, const float* b, int dim) {
  double acc = 0.0;
  for (int k = 0; k < dim; ++k) {
    double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

Codebook::Codebook(nd::ParamStore& store, const std::string& name, int size, int dim,
                   nd::Rng& rng)
    : size_(size), dim_(dim) {
  if (size < 2) throw std::invalid_argument("Codebook: size must be >= 2");
  if (dim < 1) throw std::invalid_argument("Codebook: dim must be >= 1");
  float stddev = 1.0f / std::sqrt(static_cast<float>(dim));
  entries_ = store.add(name, nd::Tensor::randn({size, dim}, rng, stddev,
                                               /*requires_grad=*/true));
  usage_.assign(static_cast<size_t>(size), 0);
  ema_size_.assign(static_cast<size_t>(size), 0.0);
  ema_sum_.assign(static_cast<size_t>(size) * dim, 0.0);
}

void Codebook::check_rows(const nd::Tensor& rows, const char* op) const {
  if (size_ == 0) throw std::logic_error(std::string(op) + ": codebook is default-constructed");
  if (rows.rank() != 2 || rows.dim(1) != dim_) {
    throw std::invalid_argument(std::string(op) + ": expected [N, " + std::to_string(dim_) +
                                "] rows");
  }
  if (rows.dim(0) < 1) throw std::invalid_argument(std::string(op) + ": no rows given");
}

void Codebook::record_usage(const std::vector<int>& indices) const {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  for (int idx : indices) ++usage_[static_cast<size_t>(idx)];
}

std::vector<int> Codebook::nearest(const nd::Tensor& z) const {
  check_rows(z, "Codebook::nearest");
  const int n = z.dim(0);
  const float* zd = z.data->data();
  const float* cd = entries_.data->data();
  std::vector<int> indices(static_cast<size_t>(n), 0);
  nd::parallel_for(n, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const float* row = zd + i * dim_;
      double best = std::numeric_limits<double>::infinity();
      int best_j = 0;
      for (int j = 0; j < size_; ++j) {
        double d2 = row_dist2(row, cd + static_cast<size_t>(j) * dim_, dim_);
        if (d2 < best) {  // strict: exact ties keep the lowest index
          best = d2;
          best_j = j;
        }
      }
      indices[static_cast<size_t>(i)] = best_j;
    }
  });
  record_usage(indices);
  return indices;
}

std::vector<int> Codebook::sample(const nd::Tensor& z, float tau, nd::Rng& rng) const {
  check_rows(z, "Codebook::sample");
  if (tau <= 0.0f) throw std::invalid_argument("Codebook::sample: tau must be positive");
  const int n = z.dim(0);
  const float* zd = z.data->data();
  const float* cd = entries_.data->data();
  std::vector<int> indices(static_cast<size_t>(n), 0);
  std::vector<double> weight(static_cast<size_t>(size_));
  for (int i = 0; i < n; ++i) {  // sequential: RNG draws stay reproducible
    const float* row = zd + static_cast<size_t>(i) * dim_;
    double min_d2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < size_; ++j) {
      double d2 = row_dist2(row, cd + static_cast<size_t>(j) * dim_, dim_);
      weight[static_cast<size_t>(j)] = d2;
      min_d2 = std::min(min_d2, d2);
    }
    double total = 0.0;
    for (int j = 0; j < size_; ++j) {
      double w = std::exp(-(weight[static_cast<size_t>(j)] - min_d2) / tau);
      weight[static_cast<size_t>(j)] = w;
      total += w;
    }
    double u = rng.uniform() * total;
    double cum = 0.0;
    int pick = size_ - 1;
    for (int j = 0; j < size_; ++j) {
      cum += weight[static_cast<size_t>(j)];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    indices[static_cast<size_t>(i)] = pick;
  }
  record_usage(indices);
  return indices;
}

nd::Tensor Codebook::lookup(const std::vector<int>& indices) const {
  if (size_ == 0) throw std::logic_error("Codebook::lookup: codebook is default-constructed");
  for (int idx : indices) {
    if (idx < 0 || idx >= size_) {
      throw std::invalid_argument("Codebook::lookup: index " + std::to_string(idx) +
                                  " out of range [0, " + std::to_string(size_) + ")");
    }
  }
  return nd::gather_rows(entries_, indices);
}

std::vector<int64_t> Codebook::usage() const {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  return usage_;
}

int64_t Codebook::total_assignments() const {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  return std::accumulate(usage_.begin(), usage_.end(), int64_t{0});
}

void Codebook::reset_usage() {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  std::fill(usage_.begin(), usage_.end(), int64_t{0});
}

void Codebook::init_kmeans(const nd::Tensor& rows, nd::Rng& rng, int iterations) {
  check_rows(rows, "Codebook::init_kmeans");
  const int n = rows.dim(0);
  const float* rd = rows.data->data();

  // Greedy D^2-weighted seeding: each new center is drawn with probability
  // proportional to the squared distance from the nearest center chosen so
  // far, so well-separated clusters each receive a seed. Once every row is
  // covered exactly (more entries than distinct rows), fall back to jittered
  // copies of random rows.
  std::vector<double> centers(static_cast<size_t>(size_) * dim_);
  std::vector<double> d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  int first = rng.uniform_int(n);
  for (int k = 0; k < dim_; ++k) {
    centers[static_cast<size_t>(k)] = static_cast<double>(rd[static_cast<size_t>(first) * dim_ + k]);
  }
  for (int j = 1; j < size_; ++j) {
    const double* prev = centers.data() + static_cast<size_t>(j - 1) * dim_;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* row = rd + static_cast<size_t>(i) * dim_;
      double acc = 0.0;
      for (int k = 0; k < dim_; ++k) {
        double diff = static_cast<double>(row[k]) - prev[k];
        acc += diff * diff;
      }
      d2[static_cast<size_t>(i)] = std::min(d2[static_cast<size_t>(i)], acc);
      total += d2[static_cast<size_t>(i)];
    }
    double* c = centers.data() + static_cast<size_t>(j) * dim_;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      double cum = 0.0;
      int pick = n - 1;
      for (int i = 0; i < n; ++i) {
        cum += d2[static_cast<size_t>(i)];
        if (u < cum) {
          pick = i;
          break;
        }
      }
      const float* src = rd + static_cast<size_t>(pick) * dim_;
      for (int k = 0; k < dim_; ++k) c[k] = static_cast<double>(src[k]);
    } else {
      const float* src = rd + static_cast<size_t>(rng.uniform_int(n)) * dim_;
      for (int k = 0; k < dim_; ++k) c[k] = static_cast<double>(src[k]) + 0.01 * rng.normal();
    }
  }

  std::vector<double> sums(static_cast<size_t>(size_) * dim_);
  std::vector<int> counts(static_cast<size_t>(size_));
  std::vector<int> assign(static_cast<size_t>(n));
  for (int it = 0; it < iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const float* row = rd + static_cast<size_t>(i) * dim_;
      double best = std::numeric_limits<double>::infinity();
      int best_j = 0;
      for (int j = 0; j < size_; ++j) {
        double acc = 0.0;
        const double* c = centers.data() + static_cast<size_t>(j) * dim_;
        for (int k = 0; k < dim_; ++k) {
          double diff = static_cast<double>(row[k]) - c[k];
          acc += diff * diff;
        }
        if (acc < best) {
          best = acc;
          best_j = j;
        }
      }
      assign[static_cast<size_t>(i)] = best_j;
      ++counts[static_cast<size_t>(best_j)];
      double* s = sums.data() + static_cast<size_t>(best_j) * dim_;
      for (int k = 0; k < dim_; ++k) s[k] += static_cast<double>(row[k]);
    }
    for (int j = 0; j < size_; ++j) {
      double* c = centers.data() + static_cast<size_t>(j) * dim_;
      if (counts[static_cast<size_t>(j)] > 0) {
        double inv = 1.0 / counts[static_cast<size_t>(j)];
        const double* s = sums.data() + static_cast<size_t>(j) * dim_;
        for (int k = 0; k < dim_; ++k) c[k] = s[k] * inv;
      } else {
        // Empty cluster: restart from a random row.
        const float* src = rd + static_cast<size_t>(rng.uniform_int(n)) * dim_;
        for (int k = 0; k < dim_; ++k) c[k] = static_cast<double>(src[k]);
      }
    }
  }

  float* ed = entries_.data->data();
  for (size_t i = 0; i < centers.size(); ++i) {
    float v = static_cast<float>(centers[i]);
    if (!std::isfinite(v)) throw std::runtime_error("Codebook::init_kmeans: non-finite center");
    ed[i] = v;
  }
  for (int j = 0; j < size_; ++j) {
    ema_size_[static_cast<size_t>(j)] = 1.0;
    for (int k = 0; k < dim_; ++k) {
      ema_sum_[static_cast<size_t>(j) * dim_ + k] = centers[static_cast<size_t>(j) * dim_ + k];
    }
  }
  initialized_ = true;
}

int Codebook::reseed_dead(const nd::Tensor& rows, nd::Rng& rng) {
  check_rows(rows, "Codebook::reseed_dead");
  const int n = rows.dim(0);
  const float* rd = rows.data->data();
  float* ed = entries_.data->data();
  std::vector<int64_t> counters = usage();
  int reseeded = 0;
  for (int j = 0; j < size_; ++j) {
    if (counters[static_cast<size_t>(j)] != 0) continue;
    const float* src = rd + static_cast<size_t>(rng.uniform_int(n)) * dim_;
    for (int k = 0; k < dim_; ++k) {
      float v = src[k];
      if (!std::isfinite(v)) throw std::runtime_error("Codebook::reseed_dead: non-finite row");
      ed[static_cast<size_t>(j) * dim_ + k] = v;
      ema_sum_[static_cast<size_t>(j) * dim_ + k] = static_cast<double>(v);
    }
    ema_size_[static_cast<size_t>(j)] = 1.0;
    ++reseeded;
  }
  return reseeded;
}

void Codebook::ema_update(const nd::Tensor& rows, const std::vector<int>& indices,
                          float decay) {
  check_rows(rows, "Codebook::ema_update");
  if (indices.size() != static_cast<size_t>(rows.dim(0))) {
    throw std::invalid_argument("Codebook::ema_update: one index per row required");
  }
  if (decay <= 0.0f || decay >= 1.0f) {
    throw std::invalid_argument("Codebook::ema_update: decay must lie in (0, 1)");
  }
  const int n = rows.dim(0);
  const float* rd = rows.data->data();
  std::vector<double> batch_sum(static_cast<size_t>(size_) * dim_, 0.0);
  std::vector<double> batch_count(static_cast<size_t>(size_), 0.0);
  for (int i = 0; i < n; ++i) {
    int j = indices[static_cast<size_t>(i)];
    if (j < 0 || j >= size_) {
      throw std::invalid_argument("Codebook::ema_update: index out of range");
    }
    batch_count[static_cast<size_t>(j)] += 1.0;
    const float* row = rd + static_cast<size_t>(i) * dim_;
    double* s = batch_sum.data() + static_cast<size_t>(j) * dim_;
    for (int k = 0; k < dim_; ++k) s[k] += static_cast<double>(row[k]);
  }
  const double a = static_cast<double>(decay);
  float* ed = entries_.data->data();
  for (int j = 0; j < size_; ++j) {
    ema_size_[static_cast<size_t>(j)] =
        a * ema_size_[static_cast<size_t>(j)] + (1.0 - a) * batch_count[static_cast<size_t>(j)];
    for (int k = 0; k < dim_; ++k) {
      size_t at = static_cast<size_t>(j) * dim_ + k;
      ema_sum_[at] = a * ema_sum_[at] + (1.0 - a) * batch_sum[at];
    }
    if (ema_size_[static_cast<size_t>(j)] > 1e-6) {
      double inv = 1.0 / ema_size_[static_cast<size_t>(j)];
      for (int k = 0; k < dim_; ++k) {
        float v = static_cast<float>(ema_sum_[static_cast<size_t>(j) * dim_ + k] * inv);
        if (!std::isfinite(v)) throw std::runtime_error("Codebook::ema_update: non-finite entry");
        ed[static_cast<size_t>(j) * dim_ + k] = v;
      }
    }
  }
}

QuantizeResult quantize(const nd::Tensor& z, const Codebook& codebook) {
  QuantizeResult result;
  result.indices = codebook.nearest(z);
  result.table_codes = codebook.lookup(result.indices);
  result.codes = nd::straight_through(z, result.table_codes);
  return result;
}

}  // namespace vat::tok
