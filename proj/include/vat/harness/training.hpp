#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vat/ar/model.hpp"
#include "vat/harness/experiment.hpp"
#include "vat/harness/shapes.hpp"
#include "vat/nd/adam.hpp"
#include "vat/tok/tokenizer.hpp"

namespace vat::harness {

// Thrown for broken or missing input artifacts (maps to exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown when training or evaluation produces non-finite numbers (exit 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One training step's loss, with the tokenizer's raw components (zero for
// the prior, whose only term is cross-entropy).
struct StepRecord {
  int step = 0;
  float total = 0.0f;
  float occupancy = 0.0f;
  float codebook = 0.0f;
  float commitment = 0.0f;
  float kl = 0.0f;

  bool finite() const;
};

// Loss curves as one JSON object per line.
class CurveLog {
 public:
  CurveLog() = default;
  explicit CurveLog(const std::string& path);
  // Stamps a provenance line ({"config_hash":..., "seed":...}) before the
  // step records.
  CurveLog(const std::string& path, const std::string& config_hash, std::uint64_t seed);
  void append(const std::string& phase, const StepRecord& r);

 private:
  std::ofstream file_;
};

// Stream tags keeping every consumer of randomness on its own seed-derived
// stream. Steps draw only from (seed, tag, step index), so a resumed run
// replays the interrupted run exactly.
inline constexpr int kPhase1Tag = 1;
inline constexpr int kPhase2Tag = 2;
inline constexpr int kStage2Tag = 3;
inline constexpr int kCloudTag = 4;
inline constexpr int kEvalTag = 5;
inline constexpr int kGenerateTag = 6;
inline constexpr int kReseedTag = 7;
inline constexpr int kKmeansTag = 8;

nd::Rng step_rng(std::uint64_t seed, int tag, int step);

// The fixed encoder input cloud for dataset entry `index` (identical across
// training stages, encoding, and evaluation).
geom::PointSampleSet shape_cloud(const ShapeSpec& spec, const ExperimentConfig& cfg, int index);

// Tokenizer training. Phase 1 trains encoder/decoder without quantization;
// phase 2 turns on the configured quantization strategy. Step indices are
// absolute within their phase and fully determine the step's randomness.
class TokenizerTrainer {
 public:
  TokenizerTrainer(const ExperimentConfig& cfg, std::vector<ShapeSpec> train_shapes);

  StepRecord phase1_step(int step);
  StepRecord phase2_step(int step);

  // Seeds the codebook with k-means over latents of the first kmeans_shapes
  // training shapes. Call once, between the phases.
  void init_codebook();

  // Replaces codebook entries unused since the last usage reset and resets
  // the counters; returns how many were reseeded. Called at epoch bounds.
  int reseed_dead(int step);

  tok::VatTokenizer& tokenizer() { return tok_; }
  const tok::VatTokenizer& tokenizer() const { return tok_; }
  int shape_count() const { return static_cast<int>(shapes_.size()); }

 private:
  StepRecord run_step(int step, int tag, bool quantize);

  ExperimentConfig cfg_;
  std::vector<ShapeSpec> shapes_;
  std::vector<geom::SdfField> fields_;
  std::vector<geom::PointSampleSet> clouds_;
  tok::VatTokenizer tok_;
  nd::Adam opt_;
};

// One-hot class condition, shape [1, kNumShapeClasses].
ar::ConditionEmbedding one_hot_condition(int class_id);

// Prior training over pyramids produced by a frozen tokenizer. Construction
// encodes every training shape once (and applies the optional reconstruction
// IoU filter).
class ArTrainer {
 public:
  ArTrainer(const ExperimentConfig& cfg, const tok::VatTokenizer& tokenizer,
            const std::vector<ShapeSpec>& train_shapes);

  StepRecord step(int step);

  ar::ArModel& model() { return model_; }
  const ar::ArModel& model() const { return model_; }
  const std::vector<tok::TokenPyramid>& pyramids() const { return pyramids_; }
  const std::vector<int>& class_ids() const { return class_ids_; }

 private:
  ExperimentConfig cfg_;
  const tok::VatTokenizer& tok_;
  std::vector<tok::TokenPyramid> pyramids_;
  std::vector<int> class_ids_;
  ar::ArModel model_;
  nd::Adam opt_;
};

// Runs `steps` calls of step_fn with loss logging, periodic checkpoints, and
// NaN protection: a non-finite loss (or an optimizer abort) stops the phase
// immediately, leaving the last finite-loss checkpoint on disk. On success
// the final parameters are written to ckpt_path.
struct PhaseResult {
  int steps_completed = 0;
  bool nan_abort = false;
  std::string abort_message;
  float final_loss = 0.0f;
};

PhaseResult run_phase(const std::string& phase_name, int steps, int checkpoint_every,
                      nd::ParamStore& params, const std::string& ckpt_path, CurveLog* log,
                      const std::function<StepRecord(int)>& step_fn);

}  // namespace vat::harness
