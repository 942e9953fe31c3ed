#include "vat/tok/pyramid.hpp"

#include <stdexcept>
#include <string>

namespace vat::tok {

int TokenPyramid::total_tokens() const {
  int total = 0;
  for (const auto& scale : scales) total += static_cast<int>(scale.size());
  return total;
}

void TokenPyramid::validate(const std::vector<int>& schedule, int codebook_size) const {
  if (scales.size() != schedule.size()) {
    throw std::invalid_argument("TokenPyramid: " + std::to_string(scales.size()) +
                                " scales but the schedule has " +
                                std::to_string(schedule.size()));
  }
  for (size_t s = 0; s < scales.size(); ++s) {
    if (static_cast<int>(scales[s].size()) != schedule[s]) {
      throw std::invalid_argument("TokenPyramid: scale " + std::to_string(s) + " has " +
                                  std::to_string(scales[s].size()) + " tokens, expected " +
                                  std::to_string(schedule[s]));
    }
    for (int idx : scales[s]) {
      if (idx < 0 || idx >= codebook_size) {
        throw std::invalid_argument("TokenPyramid: index " + std::to_string(idx) +
                                    " out of range [0, " + std::to_string(codebook_size) +
                                    ") at scale " + std::to_string(s));
      }
    }
  }
}

}  // namespace vat::tok
