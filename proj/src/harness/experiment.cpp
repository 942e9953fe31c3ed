#include "vat/harness/experiment.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace vat::harness {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& item : j.items()) {
    if (known.find(item.key()) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

json vat_to_json(const tok::VatConfig& c) {
  return json{{"n_points", c.n_points},
              {"fourier_bands", c.fourier_bands},
              {"feature_len", c.feature_len},
              {"channels", c.channels},
              {"latent_count", c.latent_count},
              {"quant_dim", c.quant_dim},
              {"encoder_depth", c.encoder_depth},
              {"decoder_depth", c.decoder_depth},
              {"heads", c.heads},
              {"mlp_ratio", c.mlp_ratio},
              {"codebook_size", c.codebook_size},
              {"scale_schedule", c.scale_schedule},
              {"decoder_tokens", c.decoder_tokens},
              {"head_hidden", c.head_hidden},
              {"occupancy_weight", c.occupancy_weight},
              {"codebook_weight", c.codebook_weight},
              {"commitment_beta", c.commitment_beta},
              {"kl_weight", c.kl_weight},
              {"strategy", tok::to_string(c.strategy)},
              {"dropout_p", c.dropout_p},
              {"stochastic_tau", c.stochastic_tau},
              {"use_ema", c.use_ema},
              {"ema_decay", c.ema_decay}};
}

tok::VatConfig vat_from_json(const json& j) {
  tok::VatConfig c;
  reject_unknown_keys(j, {"n_points",        "fourier_bands",  "feature_len",
                          "channels",        "latent_count",   "quant_dim",
                          "encoder_depth",   "decoder_depth",  "heads",
                          "mlp_ratio",       "codebook_size",  "scale_schedule",
                          "decoder_tokens",  "head_hidden",    "occupancy_weight",
                          "codebook_weight", "commitment_beta", "kl_weight",
                          "strategy",        "dropout_p",      "stochastic_tau",
                          "use_ema",         "ema_decay"},
                      "tokenizer section");
  c.n_points = j.value("n_points", c.n_points);
  c.fourier_bands = j.value("fourier_bands", c.fourier_bands);
  c.feature_len = j.value("feature_len", c.feature_len);
  c.channels = j.value("channels", c.channels);
  c.latent_count = j.value("latent_count", c.latent_count);
  c.quant_dim = j.value("quant_dim", c.quant_dim);
  c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
  c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.scale_schedule = j.value("scale_schedule", c.scale_schedule);
  c.decoder_tokens = j.value("decoder_tokens", c.decoder_tokens);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.occupancy_weight = j.value("occupancy_weight", c.occupancy_weight);
  c.codebook_weight = j.value("codebook_weight", c.codebook_weight);
  c.commitment_beta = j.value("commitment_beta", c.commitment_beta);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  if (j.contains("strategy")) {
    c.strategy = tok::strategy_from_string(j["strategy"].get<std::string>());
  }
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.stochastic_tau = j.value("stochastic_tau", c.stochastic_tau);
  c.use_ema = j.value("use_ema", c.use_ema);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  return c;
}

json ar_to_json(const ar::ArConfig& c) {
  return json{{"channels", c.channels},
              {"depth", c.depth},
              {"heads", c.heads},
              {"mlp_ratio", c.mlp_ratio},
              {"condition_dim", c.condition_dim},
              {"latent_count", c.latent_count},
              {"quant_dim", c.quant_dim},
              {"codebook_size", c.codebook_size},
              {"scale_schedule", c.scale_schedule},
              {"temperature", c.temperature},
              {"top_k", c.top_k}};
}

ar::ArConfig ar_from_json(const json& j, const ar::ArConfig& defaults) {
  ar::ArConfig c = defaults;
  reject_unknown_keys(j, {"channels", "depth", "heads", "mlp_ratio", "condition_dim",
                          "latent_count", "quant_dim", "codebook_size", "scale_schedule",
                          "temperature", "top_k"},
                      "prior section");
  c.channels = j.value("channels", c.channels);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.condition_dim = j.value("condition_dim", c.condition_dim);
  c.latent_count = j.value("latent_count", c.latent_count);
  c.quant_dim = j.value("quant_dim", c.quant_dim);
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.scale_schedule = j.value("scale_schedule", c.scale_schedule);
  c.temperature = j.value("temperature", c.temperature);
  c.top_k = j.value("top_k", c.top_k);
  return c;
}

json experiment_to_json(const ExperimentConfig& c) {
  return json{{"tokenizer", vat_to_json(c.vat)},
              {"prior", ar_to_json(c.ar)},
              {"seed", c.seed},
              {"dataset_count", c.dataset_count},
              {"held_out", c.held_out},
              {"phase1_steps", c.phase1_steps},
              {"phase2_steps", c.phase2_steps},
              {"stage2_steps", c.stage2_steps},
              {"lr_vat", c.lr_vat},
              {"lr_ar", c.lr_ar},
              {"supervision_uniform", c.supervision_uniform},
              {"supervision_near", c.supervision_near},
              {"kmeans_shapes", c.kmeans_shapes},
              {"checkpoint_every", c.checkpoint_every},
              {"eval_resolution", c.eval_resolution},
              {"compare_points", c.compare_points},
              {"stage2_iou_filter", c.stage2_iou_filter},
              {"stage2_iou_threshold", c.stage2_iou_threshold}};
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  // The prior must speak the tokenizer's token language; conditioning is the
  // one-hot shape class.
  ar.condition_dim = kNumShapeClasses;
  ar.scale_schedule = vat.scale_schedule;
  ar.codebook_size = vat.codebook_size;
  ar.quant_dim = vat.quant_dim;
  ar.latent_count = vat.latent_count;
}

void ExperimentConfig::validate() const {
  vat.validate();  // throws on hard violations; warnings are advisory
  ar.validate();
  auto fail = [](const std::string& msg) { throw std::invalid_argument("experiment: " + msg); };
  if (ar.scale_schedule != vat.scale_schedule) {
    fail("tokenizer and prior scale schedules differ");
  }
  if (ar.codebook_size != vat.codebook_size) fail("tokenizer and prior codebook sizes differ");
  if (ar.quant_dim != vat.quant_dim) fail("tokenizer and prior quantizer widths differ");
  if (ar.latent_count != vat.latent_count) fail("tokenizer and prior latent counts differ");
  if (ar.condition_dim != kNumShapeClasses) {
    fail("condition_dim must equal the shape class count (" +
         std::to_string(kNumShapeClasses) + ")");
  }
  if (dataset_count < 1) fail("dataset_count must be positive");
  if (held_out < 0) fail("held_out must be non-negative");
  if (dataset_count <= held_out) fail("dataset_count must exceed held_out");
  if (phase1_steps < 0 || phase2_steps < 0 || stage2_steps < 0) {
    fail("step counts must be non-negative");
  }
  if (!(lr_vat > 0.0f) || !(lr_ar > 0.0f)) fail("learning rates must be positive");
  if (supervision_uniform < 1 || supervision_near < 0) {
    fail("supervision point counts invalid");
  }
  if (kmeans_shapes < 1) fail("kmeans_shapes must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (eval_resolution < 8) fail("eval_resolution must be at least 8");
  if (compare_points < 100) fail("compare_points must be at least 100");
  if (!(stage2_iou_threshold >= 0.0f && stage2_iou_threshold <= 1.0f)) {
    fail("stage2_iou_threshold must be in [0, 1]");
  }
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing config file " + path);
  json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config file " + path + " is not valid JSON: " + e.what());
  }
  reject_unknown_keys(j, {"tokenizer", "prior", "seed", "dataset_count", "held_out",
                          "phase1_steps", "phase2_steps", "stage2_steps", "lr_vat", "lr_ar",
                          "supervision_uniform", "supervision_near", "kmeans_shapes",
                          "checkpoint_every", "eval_resolution", "compare_points",
                          "stage2_iou_filter", "stage2_iou_threshold"},
                      "experiment config");
  ExperimentConfig c;
  if (j.contains("tokenizer")) c.vat = vat_from_json(j["tokenizer"]);
  // Re-derive the cross-stage defaults from the (possibly overridden)
  // tokenizer before applying explicit prior settings.
  ar::ArConfig ar_defaults = c.ar;
  ar_defaults.scale_schedule = c.vat.scale_schedule;
  ar_defaults.codebook_size = c.vat.codebook_size;
  ar_defaults.quant_dim = c.vat.quant_dim;
  ar_defaults.latent_count = c.vat.latent_count;
  c.ar = j.contains("prior") ? ar_from_json(j["prior"], ar_defaults) : ar_defaults;
  c.seed = j.value("seed", c.seed);
  c.dataset_count = j.value("dataset_count", c.dataset_count);
  c.held_out = j.value("held_out", c.held_out);
  c.phase1_steps = j.value("phase1_steps", c.phase1_steps);
  c.phase2_steps = j.value("phase2_steps", c.phase2_steps);
  c.stage2_steps = j.value("stage2_steps", c.stage2_steps);
  c.lr_vat = j.value("lr_vat", c.lr_vat);
  c.lr_ar = j.value("lr_ar", c.lr_ar);
  c.supervision_uniform = j.value("supervision_uniform", c.supervision_uniform);
  c.supervision_near = j.value("supervision_near", c.supervision_near);
  c.kmeans_shapes = j.value("kmeans_shapes", c.kmeans_shapes);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.eval_resolution = j.value("eval_resolution", c.eval_resolution);
  c.compare_points = j.value("compare_points", c.compare_points);
  c.stage2_iou_filter = j.value("stage2_iou_filter", c.stage2_iou_filter);
  c.stage2_iou_threshold = j.value("stage2_iou_threshold", c.stage2_iou_threshold);
  c.validate();
  return c;
}

void save_experiment(const ExperimentConfig& cfg, const std::string& path) {
  cfg.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << experiment_to_json(cfg).dump(2) << '\n';
  if (!f) throw std::runtime_error("failed writing config to " + path);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canonical = experiment_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64-bit
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace vat::harness
