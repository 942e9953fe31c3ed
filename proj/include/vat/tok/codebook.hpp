#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "vat/nd/adam.hpp"
#include "vat/nd/rng.hpp"
#include "vat/nd/tensor.hpp"

namespace vat::tok {

// Learned table of V code vectors of dimension d. The entries are registered
// as a trainable parameter; index selection itself is non-differentiable and
// gradients reach the table only through lookup().
//
// Thread safety: nearest()/sample()/lookup() are safe to call concurrently on
// a frozen instance (usage counters are guarded internally); initialization,
// reseeding, and EMA updates are single-writer operations.
class Codebook {
 public:
  // A default-constructed codebook is an empty placeholder; assign a properly
  // constructed one before use.
  Codebook() = default;
  Codebook(nd::ParamStore& store, const std::string& name, int size, int dim,
           nd::Rng& rng);

  int size() const { return size_; }
  int dim() const { return dim_; }
  const nd::Tensor& entries() const { return entries_; }

  // Index of the nearest entry (squared L2) per row of z ([N, d]). Distances
  // accumulate in double precision and comparisons are strict, so exact ties
  // resolve to the lowest index. Advances the usage counters.
  std::vector<int> nearest(const nd::Tensor& z) const;

  // Samples an index per row from softmax(-||z - c_j||^2 / tau). As tau -> 0
  // this concentrates on the argmin. Advances the usage counters.
  std::vector<int> sample(const nd::Tensor& z, float tau, nd::Rng& rng) const;

  // Differentiable row gather: [N, d] with gradients into the table.
  nd::Tensor lookup(const std::vector<int>& indices) const;

  // Usage accounting. The counters sum to the number of rows processed by
  // nearest()/sample() since the last reset.
  std::vector<int64_t> usage() const;
  int64_t total_assignments() const;
  void reset_usage();

  // Lloyd k-means over the given rows ([N, d]) to seed the table; when N is
  // smaller than the table, the remaining centers start from perturbed
  // copies of random rows. Also primes the EMA accumulators.
  void init_kmeans(const nd::Tensor& rows, nd::Rng& rng, int iterations = 10);
  bool initialized() const { return initialized_; }
  // Checkpoints carry the entries but not this flag; call after restoring a
  // trained table so downstream guards accept it.
  void mark_initialized() { initialized_ = true; }

  // Overwrites every entry whose usage counter is zero with a random row of
  // `rows`; returns how many entries were reseeded. Call at epoch boundaries
  // (after inspecting usage, before reset_usage) to revive dead codes.
  int reseed_dead(const nd::Tensor& rows, nd::Rng& rng);

  // Exponential-moving-average update toward the rows assigned to each entry
  // (alternative to gradient-based codebook training).
  void ema_update(const nd::Tensor& rows, const std::vector<int>& indices,
                  float decay);

 private:
  void check_rows(const nd::Tensor& rows, const char* op) const;
  void record_usage(const std::vector<int>& indices) const;

  int size_ = 0;
  int dim_ = 0;
  nd::Tensor entries_;  // [V, d]
  bool initialized_ = false;
  mutable std::mutex usage_mutex_;
  mutable std::vector<int64_t> usage_;
  std::vector<double> ema_size_;  // per-entry assignment mass
  std::vector<double> ema_sum_;   // per-entry coordinate sums, V*d
};

// Nearest-code quantization of every row of z with straight-through
// gradients: `codes` forward-evaluates to the selected table rows while
// routing gradients to z; `table_codes` carries the same values but routes
// gradients into the codebook entries instead.
struct QuantizeResult {
  std::vector<int> indices;
  nd::Tensor codes;
  nd::Tensor table_codes;
};

QuantizeResult quantize(const nd::Tensor& z, const Codebook& codebook);

}  // namespace vat::tok
