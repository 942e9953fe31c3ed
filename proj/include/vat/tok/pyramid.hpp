#pragma once

#include <vector>

namespace vat::tok {

// Discrete tokenization of one shape: one index sequence per scale, coarse to
// fine. scales[s] has the length given by the schedule entry s, and every
// index addresses a codebook entry.
struct TokenPyramid {
  std::vector<std::vector<int>> scales;

  int total_tokens() const;

  // Throws std::invalid_argument unless the per-scale lengths match
  // `schedule` exactly and every index lies in [0, codebook_size).
  void validate(const std::vector<int>& schedule, int codebook_size) const;
};

}  // namespace vat::tok
