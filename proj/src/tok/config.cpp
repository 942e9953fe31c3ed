#include "vat/tok/config.hpp"

#include <cmath>
#include <stdexcept>

namespace vat::tok {

Strategy strategy_from_string(const std::string& name) {
  if (name == "vvq") return Strategy::kVvq;
  if (name == "none") return Strategy::kNone;
  if (name == "dropout") return Strategy::kDropout;
  if (name == "stochastic") return Strategy::kStochastic;
  throw std::invalid_argument("unknown training strategy \"" + name +
                              "\" (expected vvq|none|dropout|stochastic)");
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kVvq: return "vvq";
    case Strategy::kNone: return "none";
    case Strategy::kDropout: return "dropout";
    case Strategy::kStochastic: return "stochastic";
  }
  throw std::invalid_argument("invalid Strategy value");
}

int VatConfig::base_plane_res() const {
  int r = static_cast<int>(std::lround(std::sqrt(decoder_tokens / 3.0)));
  if (r < 1 || 3 * r * r != decoder_tokens) {
    throw std::invalid_argument(
        "decoder_tokens = " + std::to_string(decoder_tokens) +
        " does not split into 3 square planes (need 3*r*r)");
  }
  return r;
}

std::vector<std::string> VatConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("VatConfig: " + msg); };

  if (n_points < 1) fail("n_points must be >= 1");
  if (fourier_bands < 0) fail("fourier_bands must be >= 0");
  if (feature_len < 1) fail("feature_len must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (latent_count < 1) fail("latent_count must be >= 1");
  if (quant_dim < 1) fail("quant_dim must be >= 1");
  if (quant_dim > channels) fail("quant_dim must not exceed channels");
  if (encoder_depth < 1 || decoder_depth < 1) fail("depths must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (channels % heads != 0) fail("channels must be divisible by heads");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (codebook_size < 2) fail("codebook_size must be >= 2");
  if (head_hidden < 1) fail("head_hidden must be >= 1");

  if (scale_schedule.empty()) fail("scale_schedule must not be empty");
  int prev = 0;
  for (int len : scale_schedule) {
    if (len <= prev) fail("scale_schedule must be strictly increasing and positive");
    prev = len;
  }
  if (scale_schedule.back() > latent_count) {
    fail("last scale_schedule entry must not exceed latent_count");
  }

  base_plane_res();  // throws when decoder_tokens is not 3*r*r

  if (occupancy_weight < 0 || codebook_weight < 0 || commitment_beta < 0 || kl_weight < 0) {
    fail("loss weights must be non-negative");
  }
  if (dropout_p < 0.0f || dropout_p > 1.0f) fail("dropout_p must lie in [0, 1]");
  if (stochastic_tau <= 0.0f) fail("stochastic_tau must be positive");
  if (ema_decay <= 0.0f || ema_decay >= 1.0f) fail("ema_decay must lie in (0, 1)");

  std::vector<std::string> warnings;
  if (latent_count >= feature_len) {
    warnings.push_back("latent_count >= feature_len: in-context compression ratio is below 1");
  }
  return warnings;
}

}  // namespace vat::tok
