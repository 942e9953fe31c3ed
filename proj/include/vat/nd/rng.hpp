#pragma once

#include <cmath>
#include <cstdint>

namespace vat::nd {

// Counter-based generator: output i is splitmix64_mix(seed ^ golden*(i+1)).
// No hidden state beyond (seed, counter), so streams can be split and
// replayed independently of call-site interleaving on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return mix(seed_, ++counter_); }

  // [0,1), 53-bit mantissa
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one value per call (the sine branch is discarded so a draw
  // never depends on a cached spare).
  float normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return static_cast<float>(r * std::cos(6.283185307179586 * u2));
  }

  // unbiased integer in [0, n)
  int uniform_int(int n) {
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  // Independent stream derived from (seed, salt); used for per-chunk
  // reproducible parallel sampling.
  Rng split(uint64_t salt) const { return Rng(mix(seed_, 0x5851f42d4c957f2dULL ^ salt)); }

  uint64_t seed() const { return seed_; }

  static uint64_t mix(uint64_t seed, uint64_t ctr) {
    uint64_t z = seed ^ (ctr * 0x9e3779b97f4a7c15ULL);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace vat::nd
