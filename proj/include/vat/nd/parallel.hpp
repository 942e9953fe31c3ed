#pragma once

#include <cstdint>
#include <functional>

namespace vat::nd {

// Worker count from the VAT_THREADS environment variable (default 1).
int thread_count();

// Splits [0, n) into one contiguous chunk per worker and runs chunk_fn(begin,
// end) on each. Every index belongs to exactly one chunk, so per-index writes
// are race-free and results are identical at any thread count; callers doing
// reductions combine per-chunk partials in chunk order.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& chunk_fn);

}  // namespace vat::nd
