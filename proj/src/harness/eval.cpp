#include "vat/harness/eval.hpp"

#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <utility>

#include "json.hpp"

#include "vat/codec/stream.hpp"
#include "vat/geom/mesh.hpp"
#include "vat/harness/training.hpp"
#include "vat/nd/ops.hpp"
#include "vat/nd/parallel.hpp"

namespace vat::harness {

namespace {

constexpr float kFScoreThreshold = 0.01f;

std::string fmt(const char* format, ...) {
  char buffer[256];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buffer, sizeof(buffer), format, args);
  va_end(args);
  return buffer;
}

std::string stamp(const char* title, const ExperimentConfig& cfg) {
  std::string s(title);
  s += "\nconfig_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed) + "\n";
  return s;
}

// Minimal byte width covering the vocabulary (1 byte for V <= 256).
int byte_width(int codebook_size) { return codebook_size <= 256 ? 1 : 2; }

}  // namespace

geom::OccupancyGrid decode_grid(const tok::VatTokenizer& tokenizer, const nd::Tensor& latent,
                                int resolution) {
  if (resolution < 1) throw std::invalid_argument("decode_grid: resolution must be >= 1");
  const tok::TriplaneFeatures tri = tokenizer.build_triplanes(latent);

  geom::OccupancyGrid grid;
  grid.resolution = resolution;
  const int side = resolution + 1;
  const std::int64_t total = static_cast<std::int64_t>(side) * side * side;
  grid.values.assign(static_cast<size_t>(total), 0.0f);

  // Corners are queried in storage-order batches (x-major, z-fastest), in
  // parallel across batches: every batch shares the read-only triplanes,
  // writes a disjoint slice, and drops its graph on exit.
  constexpr std::int64_t kBatch = 8192;
  const std::int64_t batches = (total + kBatch - 1) / kBatch;
  nd::parallel_for(batches, [&](std::int64_t b0, std::int64_t b1) {
    std::vector<geom::Vec3> queries;
    for (std::int64_t b = b0; b < b1; ++b) {
      const std::int64_t begin = b * kBatch;
      const std::int64_t end = std::min(total, begin + kBatch);
      queries.clear();
      queries.reserve(static_cast<size_t>(end - begin));
      for (std::int64_t i = begin; i < end; ++i) {
        const int iz = static_cast<int>(i % side);
        const int iy = static_cast<int>((i / side) % side);
        const int ix = static_cast<int>(i / (static_cast<std::int64_t>(side) * side));
        queries.push_back(grid.corner(ix, iy, iz));
      }
      nd::Tensor probs = nd::sigmoid(tokenizer.sample_occupancy_logits(tri, queries));
      for (std::int64_t i = begin; i < end; ++i) {
        grid.values[static_cast<size_t>(i)] = probs.at(static_cast<size_t>(i - begin));
      }
    }
  });
  return grid;
}

ReconstructionEval evaluate_reconstruction(const tok::VatTokenizer& tokenizer,
                                           const ShapeSpec& spec, const ExperimentConfig& cfg,
                                           int dataset_index) {
  spec.validate();
  const geom::PointSampleSet cloud = shape_cloud(spec, cfg, dataset_index);
  const tok::TokenPyramid pyramid = tokenizer.encode_points(cloud.positions, cloud.normals);
  const geom::OccupancyGrid truth = geom::grid_from_sdf(spec.field(), cfg.eval_resolution);

  ReconstructionEval out;
  out.shape_index = dataset_index;
  out.class_id = spec.class_id;
  out.kind = spec.kind;

  const auto& schedule = cfg.vat.scale_schedule;
  nd::Tensor partial;
  geom::OccupancyGrid pred;
  for (size_t s = 0; s < schedule.size(); ++s) {
    nd::Tensor level = tok::up(tokenizer.codebook().lookup(pyramid.scales[s]),
                               cfg.vat.latent_count);
    partial = partial.defined() ? nd::add(partial, level) : level;
    geom::OccupancyGrid decoded = decode_grid(tokenizer, partial, cfg.eval_resolution);
    out.per_scale_iou.push_back(geom::occupancy_iou(decoded.values, truth.values));
    if (s + 1 == schedule.size()) pred = std::move(decoded);
  }
  out.cs_iou = geom::cs_iou(out.per_scale_iou);
  out.iou = out.per_scale_iou.back();
  out.accuracy = geom::occupancy_accuracy(pred.values, truth.values);

  const geom::TriangleMesh pred_mesh = geom::marching_cubes(pred);
  const geom::TriangleMesh truth_mesh = geom::marching_cubes(truth);
  nd::Rng rng = step_rng(cfg.seed, kEvalTag, dataset_index);
  const geom::MeshComparison cmp =
      geom::compare_meshes(pred_mesh, truth_mesh, rng, cfg.compare_points, kFScoreThreshold);
  out.chamfer = cmp.chamfer;
  out.f_score = cmp.f_score;
  out.empty_mesh = cmp.empty_prediction;
  return out;
}

GenerationEval evaluate_generation(const ar::ArModel& model, const tok::VatTokenizer& tokenizer,
                                   int class_id, const ExperimentConfig& cfg, nd::Rng& rng,
                                   float temperature, int top_k) {
  const ShapeSpec reference = canonical_shape(class_id);

  GenerationEval out;
  out.class_id = class_id;
  out.kind = reference.kind;
  out.pyramid = model.generate(one_hot_condition(class_id), tokenizer.codebook(), rng,
                               temperature, top_k);

  const nd::Tensor latent = tokenizer.pyramid_to_latent(out.pyramid);
  const geom::OccupancyGrid pred = decode_grid(tokenizer, latent, cfg.eval_resolution);
  const geom::OccupancyGrid truth = geom::grid_from_sdf(reference.field(), cfg.eval_resolution);
  out.iou = geom::occupancy_iou(pred.values, truth.values);

  const geom::TriangleMesh pred_mesh = geom::marching_cubes(pred);
  const geom::TriangleMesh truth_mesh = geom::marching_cubes(truth);
  const geom::MeshComparison cmp =
      geom::compare_meshes(pred_mesh, truth_mesh, rng, cfg.compare_points, kFScoreThreshold);
  out.chamfer = cmp.chamfer;
  out.f_score = cmp.f_score;
  out.empty_mesh = cmp.empty_prediction;
  return out;
}

CompressionStat compression_stat(const tok::VatTokenizer& tokenizer, const ShapeSpec& spec,
                                 const ExperimentConfig& cfg, int dataset_index,
                                 const std::string& scratch_obj_path) {
  spec.validate();
  const geom::PointSampleSet cloud = shape_cloud(spec, cfg, dataset_index);
  const tok::TokenPyramid pyramid = tokenizer.encode_points(cloud.positions, cloud.normals);
  const geom::OccupancyGrid truth = geom::grid_from_sdf(spec.field(), cfg.eval_resolution);
  const geom::OccupancyGrid pred =
      decode_grid(tokenizer, tokenizer.pyramid_to_latent(pyramid), cfg.eval_resolution);

  // The stored-size baseline is the ground-truth surface as a plain OBJ at
  // the evaluation resolution.
  geom::save_obj(geom::marching_cubes(truth), scratch_obj_path);
  const std::uint64_t mesh_bytes = std::filesystem::file_size(scratch_obj_path);

  const int v = cfg.vat.codebook_size;
  const auto byte_stream =
      codec::serialize(codec::pack(pyramid, v, codec::PackMode::kBytes, byte_width(v)));
  const auto bit_stream = codec::serialize(codec::pack(pyramid, v, codec::PackMode::kBits));

  CompressionStat out;
  out.shape_index = dataset_index;
  out.kind = spec.kind;
  out.total_tokens = pyramid.total_tokens();
  out.mesh_bytes = mesh_bytes;
  out.byte_mode_bytes = byte_stream.size();
  out.bit_mode_bytes = bit_stream.size();
  out.byte_mode_ratio = codec::compression_ratio(mesh_bytes, byte_stream.size());
  out.bit_mode_ratio = codec::compression_ratio(mesh_bytes, bit_stream.size());
  out.iou = geom::occupancy_iou(pred.values, truth.values);
  return out;
}

std::string reconstruction_report(const std::vector<ReconstructionEval>& rows,
                                  const ExperimentConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("reconstruction report needs at least one row");
  std::string s = stamp("reconstruction report", cfg);
  s += fmt("resolution=%d compare_points=%d shapes=%d\n\n", cfg.eval_resolution,
           cfg.compare_points, static_cast<int>(rows.size()));
  s += fmt("%5s %5s %-18s %8s %8s %8s %9s %9s\n", "idx", "class", "kind", "Acc", "IoU",
           "CS-IoU", "Chamfer", "F-score");
  double acc = 0, iou = 0, cs = 0, cd = 0, fs = 0, min_iou = 1e9;
  int empties = 0;
  for (const auto& r : rows) {
    s += fmt("%5d %5d %-18s %8.4f %8.4f %8.4f %9.4f %9.4f\n", r.shape_index, r.class_id,
             r.kind.c_str(), r.accuracy, r.iou, r.cs_iou, r.chamfer, r.f_score);
    acc += r.accuracy;
    iou += r.iou;
    cs += r.cs_iou;
    cd += r.chamfer;
    fs += r.f_score;
    min_iou = std::min<double>(min_iou, r.iou);
    empties += r.empty_mesh ? 1 : 0;
  }
  const double n = static_cast<double>(rows.size());
  s += fmt("%5s %5s %-18s %8.4f %8.4f %8.4f %9.4f %9.4f\n", "", "", "mean", acc / n, iou / n,
           cs / n, cd / n, fs / n);
  s += "\n";
  s += fmt("recon_shapes=%d\n", static_cast<int>(rows.size()));
  s += fmt("recon_mean_accuracy=%.4f\n", acc / n);
  s += fmt("recon_mean_iou=%.4f\n", iou / n);
  s += fmt("recon_mean_cs_iou=%.4f\n", cs / n);
  s += fmt("recon_mean_chamfer=%.4f\n", cd / n);
  s += fmt("recon_mean_f_score=%.4f\n", fs / n);
  s += fmt("recon_min_iou=%.4f\n", min_iou);
  s += fmt("recon_empty_meshes=%d\n", empties);
  return s;
}

std::string generation_report(const std::vector<GenerationEval>& rows,
                              const ExperimentConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("generation report needs at least one row");
  std::string s = stamp("generation report", cfg);
  s += fmt("resolution=%d compare_points=%d samples=%d\n\n", cfg.eval_resolution,
           cfg.compare_points, static_cast<int>(rows.size()));
  s += fmt("%5s %-18s %8s %9s %9s %7s\n", "class", "kind", "IoU", "Chamfer", "F-score",
           "tokens");
  double iou = 0, cd = 0, fs = 0, min_fs = 1e9;
  int empties = 0;
  for (const auto& r : rows) {
    s += fmt("%5d %-18s %8.4f %9.4f %9.4f %7d\n", r.class_id, r.kind.c_str(), r.iou, r.chamfer,
             r.f_score, r.pyramid.total_tokens());
    iou += r.iou;
    cd += r.chamfer;
    fs += r.f_score;
    min_fs = std::min<double>(min_fs, r.f_score);
    empties += r.empty_mesh ? 1 : 0;
  }
  const double n = static_cast<double>(rows.size());
  s += fmt("%5s %-18s %8.4f %9.4f %9.4f %7s\n", "", "mean", iou / n, cd / n, fs / n, "");
  s += "\n";
  s += fmt("gen_samples=%d\n", static_cast<int>(rows.size()));
  s += fmt("gen_mean_iou=%.4f\n", iou / n);
  s += fmt("gen_mean_chamfer=%.4f\n", cd / n);
  s += fmt("gen_mean_f_score=%.4f\n", fs / n);
  s += fmt("gen_min_f_score=%.4f\n", min_fs);
  s += fmt("gen_empty_meshes=%d\n", empties);
  return s;
}

std::string compression_report(const std::vector<CompressionStat>& rows,
                               const ExperimentConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("compression report needs at least one row");
  std::string s = stamp("compression report", cfg);
  s += fmt("resolution=%d codebook=%d shapes=%d\n\n", cfg.eval_resolution,
           cfg.vat.codebook_size, static_cast<int>(rows.size()));
  s += fmt("%5s %-18s %7s %10s %9s %9s %11s %10s %7s\n", "idx", "kind", "tokens", "mesh_B",
           "byte_B", "bit_B", "byte_ratio", "bit_ratio", "IoU");
  double br = 0, tr = 0, iou = 0;
  for (const auto& r : rows) {
    s += fmt("%5d %-18s %7d %10llu %9llu %9llu %11.2f %10.2f %7.4f\n", r.shape_index,
             r.kind.c_str(), r.total_tokens, static_cast<unsigned long long>(r.mesh_bytes),
             static_cast<unsigned long long>(r.byte_mode_bytes),
             static_cast<unsigned long long>(r.bit_mode_bytes), r.byte_mode_ratio,
             r.bit_mode_ratio, r.iou);
    br += r.byte_mode_ratio;
    tr += r.bit_mode_ratio;
    iou += r.iou;
  }
  const double n = static_cast<double>(rows.size());
  s += "\n";
  s += fmt("comp_shapes=%d\n", static_cast<int>(rows.size()));
  s += fmt("comp_mean_byte_ratio=%.2f\n", br / n);
  s += fmt("comp_mean_bit_ratio=%.2f\n", tr / n);
  s += fmt("comp_mean_iou=%.4f\n", iou / n);
  return s;
}

namespace {

nlohmann::json meta_json(const ExperimentConfig& cfg) {
  return {{"config_hash", config_hash(cfg)},
          {"seed", cfg.seed},
          {"resolution", cfg.eval_resolution},
          {"compare_points", cfg.compare_points}};
}

}  // namespace

std::string reconstruction_report_json(const std::vector<ReconstructionEval>& rows,
                                       const ExperimentConfig& cfg) {
  nlohmann::json j{{"meta", meta_json(cfg)}, {"shapes", nlohmann::json::array()}};
  for (const auto& r : rows) {
    j["shapes"].push_back({{"index", r.shape_index},
                           {"class", r.class_id},
                           {"kind", r.kind},
                           {"accuracy", r.accuracy},
                           {"iou", r.iou},
                           {"per_scale_iou", r.per_scale_iou},
                           {"cs_iou", r.cs_iou},
                           {"chamfer", r.chamfer},
                           {"f_score", r.f_score},
                           {"empty_mesh", r.empty_mesh}});
  }
  return j.dump(2);
}

std::string generation_report_json(const std::vector<GenerationEval>& rows,
                                   const ExperimentConfig& cfg) {
  nlohmann::json j{{"meta", meta_json(cfg)}, {"samples", nlohmann::json::array()}};
  for (const auto& r : rows) {
    j["samples"].push_back({{"class", r.class_id},
                            {"kind", r.kind},
                            {"iou", r.iou},
                            {"chamfer", r.chamfer},
                            {"f_score", r.f_score},
                            {"empty_mesh", r.empty_mesh},
                            {"tokens", r.pyramid.total_tokens()}});
  }
  return j.dump(2);
}

std::string compression_report_json(const std::vector<CompressionStat>& rows,
                                    const ExperimentConfig& cfg) {
  nlohmann::json j{{"meta", meta_json(cfg)}, {"shapes", nlohmann::json::array()}};
  for (const auto& r : rows) {
    j["shapes"].push_back({{"index", r.shape_index},
                           {"kind", r.kind},
                           {"tokens", r.total_tokens},
                           {"mesh_bytes", r.mesh_bytes},
                           {"byte_mode_bytes", r.byte_mode_bytes},
                           {"bit_mode_bytes", r.bit_mode_bytes},
                           {"byte_mode_ratio", r.byte_mode_ratio},
                           {"bit_mode_ratio", r.bit_mode_ratio},
                           {"iou", r.iou}});
  }
  return j.dump(2);
}

}  // namespace vat::harness
