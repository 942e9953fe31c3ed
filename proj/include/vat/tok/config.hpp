#pragma once

#include <string>
#include <vector>

namespace vat::tok {

// Training-time quantization ablations. kVvq is the full pipeline; kNone
// disables the Gaussian reparameterization noise; kDropout truncates the
// token pyramid at a random scale before decoding; kStochastic samples code
// indices from a softmax over negative squared distances instead of argmin.
enum class Strategy { kVvq, kNone, kDropout, kStochastic };

// Parses "vvq" / "none" / "dropout" / "stochastic"; throws
// std::invalid_argument on anything else.
Strategy strategy_from_string(const std::string& name);
std::string to_string(Strategy strategy);

// Tokenizer hyperparameters. Defaults are the desk-scale profile: small
// enough to train on a laptop CPU while exercising every code path.
struct VatConfig {
  // Encoder input.
  int n_points = 2048;    // surface samples fed to the encoder per shape
  int fourier_bands = 6;  // frequency bands in the point positional encoding

  // Transformer widths.
  int feature_len = 128;  // L: learnable point-feature query tokens
  int channels = 64;      // D: transformer width
  int latent_count = 16;  // K: compressed latent tokens kept after encoding
  int quant_dim = 16;     // d: channel width of the quantized latent
  int encoder_depth = 4;  // self-attention blocks over [I; q]
  int decoder_depth = 4;  // self-attention blocks over the decoder tokens
  int heads = 4;
  int mlp_ratio = 4;  // hidden width multiplier inside transformer MLPs

  // Multi-scale residual quantization.
  int codebook_size = 256;  // V
  std::vector<int> scale_schedule{1, 4, 16};

  // Triplane decoder. decoder_tokens must equal 3*r*r for an integer plane
  // resolution r; each plane is then upsampled r -> 2r -> 4r to form the
  // three mipmap levels.
  int decoder_tokens = 192;
  int head_hidden = 256;  // hidden width of the per-point occupancy MLP

  // Loss weights.
  float occupancy_weight = 1.0f;
  float codebook_weight = 0.2f;
  float commitment_beta = 0.25f;  // encoder-side share of the codebook term
  float kl_weight = 1e-4f;

  // Training strategy and its knobs.
  Strategy strategy = Strategy::kVvq;
  float dropout_p = 0.5f;       // pyramid truncation probability (kDropout)
  float stochastic_tau = 1.0f;  // sampling temperature (kStochastic)

  // Codebook maintenance.
  bool use_ema = false;  // EMA codebook updates instead of gradient descent
  float ema_decay = 0.99f;

  // Side length r of the square decoder planes (decoder_tokens == 3*r*r).
  int base_plane_res() const;

  // Throws std::invalid_argument on hard violations (non-positive dims,
  // schedule not strictly increasing, last scale > latent_count,
  // quant_dim > channels, channels not divisible by heads, decoder_tokens
  // not 3*r*r, weights/probabilities out of range). Returns non-fatal
  // warnings, e.g. latent_count >= feature_len (compression ratio < 1).
  std::vector<std::string> validate() const;
};

}  // namespace vat::tok
