#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vat/ar/model.hpp"
#include "vat/geom/marching_cubes.hpp"
#include "vat/geom/metrics.hpp"
#include "vat/geom/occupancy.hpp"
#include "vat/harness/experiment.hpp"
#include "vat/harness/shapes.hpp"
#include "vat/tok/tokenizer.hpp"

namespace vat::harness {

// Dense occupancy decode: the latent's triplanes are built once, then every
// grid corner is batch-queried. Values are sigmoid occupancies in (0, 1).
geom::OccupancyGrid decode_grid(const tok::VatTokenizer& tokenizer, const nd::Tensor& latent,
                                int resolution);

// Tokenize -> decode -> compare against the analytic shape. per_scale_iou[s]
// decodes from pyramid scales 0..s only; cs_iou is their mean.
struct ReconstructionEval {
  int shape_index = 0;
  int class_id = 0;
  std::string kind;
  float accuracy = 0.0f;
  float iou = 0.0f;
  std::vector<float> per_scale_iou;
  float cs_iou = 0.0f;
  float chamfer = 0.0f;
  float f_score = 0.0f;  // percent
  bool empty_mesh = false;
};

ReconstructionEval evaluate_reconstruction(const tok::VatTokenizer& tokenizer,
                                           const ShapeSpec& spec, const ExperimentConfig& cfg,
                                           int dataset_index);

// Sample a pyramid from the prior conditioned on a class, decode it, and
// compare against that class's canonical shape.
struct GenerationEval {
  int class_id = 0;
  std::string kind;
  float iou = 0.0f;
  float chamfer = 0.0f;
  float f_score = 0.0f;  // percent
  bool empty_mesh = false;
  tok::TokenPyramid pyramid;
};

GenerationEval evaluate_generation(const ar::ArModel& model, const tok::VatTokenizer& tokenizer,
                                   int class_id, const ExperimentConfig& cfg, nd::Rng& rng,
                                   float temperature = -1.0f, int top_k = -1);

// Storage accounting for one shape: ground-truth mesh bytes (OBJ) against the
// packed token payload in both codec modes, plus the reconstruction IoU the
// tokens achieve.
struct CompressionStat {
  int shape_index = 0;
  std::string kind;
  int total_tokens = 0;
  std::uint64_t mesh_bytes = 0;
  std::uint64_t byte_mode_bytes = 0;  // full stream: header + payload
  std::uint64_t bit_mode_bytes = 0;
  double byte_mode_ratio = 0.0;
  double bit_mode_ratio = 0.0;
  float iou = 0.0f;
};

// Uses `scratch_obj_path` to materialize the mesh for honest byte counts; the
// file is left in place as a command artifact.
CompressionStat compression_stat(const tok::VatTokenizer& tokenizer, const ShapeSpec& spec,
                                 const ExperimentConfig& cfg, int dataset_index,
                                 const std::string& scratch_obj_path);

// Plain-text reports. Fixed-width %.4f formatting, one row per entry plus a
// mean row, a key=value block for machine consumption, and the config
// hash/seed stamp; byte-identical across reruns with equal config and seeds.
std::string reconstruction_report(const std::vector<ReconstructionEval>& rows,
                                  const ExperimentConfig& cfg);
std::string generation_report(const std::vector<GenerationEval>& rows,
                              const ExperimentConfig& cfg);
std::string compression_report(const std::vector<CompressionStat>& rows,
                               const ExperimentConfig& cfg);

// The same content as structured JSON (stable key order).
std::string reconstruction_report_json(const std::vector<ReconstructionEval>& rows,
                                       const ExperimentConfig& cfg);
std::string generation_report_json(const std::vector<GenerationEval>& rows,
                                   const ExperimentConfig& cfg);
std::string compression_report_json(const std::vector<CompressionStat>& rows,
                                    const ExperimentConfig& cfg);

}  // namespace vat::harness
