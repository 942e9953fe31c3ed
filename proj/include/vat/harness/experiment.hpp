#pragma once

#include <cstdint>
#include <string>

#include "vat/ar/model.hpp"
#include "vat/harness/shapes.hpp"
#include "vat/tok/config.hpp"

namespace vat::harness {

// One experiment: tokenizer + prior architecture, dataset size and split,
// step counts for the three training phases, and evaluation settings. The
// defaults are the desk-scale recipe; paper-scale values (200k/100k steps,
// 12-scale schedule to 1024 tokens, V in the thousands) are listed in the
// shipped example config for reference.
struct ExperimentConfig {
  tok::VatConfig vat;
  ar::ArConfig ar;

  std::uint64_t seed = 1;
  int dataset_count = 200;
  int held_out = 16;  // trailing shapes reserved for evaluation

  int phase1_steps = 2000;  // tokenizer, quantization off
  int phase2_steps = 1000;  // tokenizer, quantization on
  int stage2_steps = 3000;  // prior
  float lr_vat = 1e-3f;
  float lr_ar = 1e-3f;

  int supervision_uniform = 512;  // occupancy queries per step, uniform
  int supervision_near = 512;     // occupancy queries per step, near-surface
  int kmeans_shapes = 32;         // latents collected to seed the codebook
  int checkpoint_every = 250;     // steps between periodic checkpoints

  int eval_resolution = 64;    // occupancy grid for metrics + meshing
  int compare_points = 20000;  // surface samples for chamfer / F-score
  bool stage2_iou_filter = false;  // drop shapes the tokenizer reconstructs badly
  float stage2_iou_threshold = 0.4f;

  ExperimentConfig();  // wires the cross-stage defaults together

  // Throws std::invalid_argument on violations, including any mismatch
  // between the tokenizer's and the prior's shared vocabulary/schedule.
  void validate() const;

  int train_count() const { return dataset_count - held_out; }
};

// JSON round trip; load validates. Unknown keys are rejected so typos fail
// loudly instead of silently using a default.
ExperimentConfig load_experiment(const std::string& path);
void save_experiment(const ExperimentConfig& cfg, const std::string& path);

// FNV-1a over the canonical JSON form, as 16 hex digits. Stable across runs
// and platforms; embedded in every report for provenance.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace vat::harness
