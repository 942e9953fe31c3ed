#include "vat/nd/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace vat::nd {

int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("VAT_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    return v > 0 ? std::min(v, 64) : 1;
  }();
  return n;
}

namespace {
// Calls made from inside a worker run serially: one level of parallelism is
// enough, and nested fan-out would oversubscribe without changing results
// (chunk boundaries depend only on n and the configured worker count).
thread_local bool in_parallel_worker = false;
}  // namespace

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& chunk_fn) {
  if (n <= 0) return;
  const int workers =
      in_parallel_worker ? 1 : static_cast<int>(std::min<int64_t>(thread_count(), n));
  if (workers == 1) {
    chunk_fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    int64_t begin = n * w / workers;
    int64_t end = n * (w + 1) / workers;
    pool.emplace_back([&chunk_fn, begin, end] {
      in_parallel_worker = true;
      chunk_fn(begin, end);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace vat::nd
