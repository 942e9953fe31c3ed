// Command-line front end for the shape tokenization pipeline. Commands
// compose through files in the output directory:
//
//   gen-data        -> dataset.json
//   train-vat       -> vat_phase1.ckpt, vat.ckpt, vat_curves.jsonl, config.json
//   train-ar        -> ar.ckpt, ar_curves.jsonl
//   encode          -> tokens/shape_<i>.vatk
//   decode          -> meshes/shape_<i>.obj (+ grid files)
//   generate        -> gen/class_<c>.obj, gen/class_<c>.vatk
//   eval            -> recon_report.txt/.json (+ gen_report.txt/.json)
//   compress-stats  -> compress_report.txt/.json, compress/shape_<i>.obj
//
// Exit codes: 0 success, 1 usage error, 2 missing/invalid data, 3 numerical
// failure during training. The VAT_THREADS environment variable sets the
// worker thread count; every artifact carries the config hash and seed.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vat/codec/stream.hpp"
#include "vat/geom/marching_cubes.hpp"
#include "vat/geom/mesh.hpp"
#include "vat/geom/metrics.hpp"
#include "vat/geom/occupancy.hpp"
#include "vat/harness/eval.hpp"
#include "vat/harness/experiment.hpp"
#include "vat/harness/shapes.hpp"
#include "vat/harness/training.hpp"
#include "vat/nd/checkpoint.hpp"
#include "vat/nd/parallel.hpp"

namespace fs = std::filesystem;
using namespace vat;
using harness::DataError;
using harness::ExperimentConfig;
using harness::NumericalError;

namespace {

// Exclusive lock on the output directory: no two commands write the same
// path concurrently. Removed on destruction; a leftover file from a crashed
// run must be deleted by hand (the message says so).
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw DataError("output directory " + dir + " is locked (" + path_ +
                      " exists); if no other command is running, delete the lock file");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "runs/desk";
  std::int64_t seed = -1;  // <0: keep the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON (defaults when omitted)");
  cmd->add_option("--out", args.out_dir, "output directory the commands compose through");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = harness::load_experiment(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  cfg.validate();
  return cfg;
}

void write_meta(const std::string& path, const ExperimentConfig& cfg,
                const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j{{"config_hash", harness::config_hash(cfg)}, {"seed", cfg.seed}};
  j.update(extra);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << j.dump(2) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << text;
}

std::vector<harness::ShapeSpec> need_dataset(const ExperimentConfig& cfg,
                                             const std::string& out_dir) {
  std::vector<harness::ShapeSpec> shapes = harness::load_dataset(out_dir + "/dataset.json");
  if (static_cast<int>(shapes.size()) != cfg.dataset_count) {
    throw DataError("dataset " + out_dir + "/dataset.json holds " +
                    std::to_string(shapes.size()) + " shapes but the config expects " +
                    std::to_string(cfg.dataset_count) +
                    "; regenerate it or fix dataset_count");
  }
  return shapes;
}

void need_file(const std::string& path, const char* producer) {
  if (!fs::exists(path)) {
    throw DataError("missing " + path + " (run the " + producer + " command first)");
  }
}

void load_tokenizer(tok::VatTokenizer& tokenizer, const std::string& out_dir) {
  const std::string path = out_dir + "/vat.ckpt";
  need_file(path, "train-vat");
  nd::load_checkpoint(tokenizer.params(), path);
  tokenizer.codebook().mark_initialized();  // the flag itself is not checkpointed
}

void load_prior(ar::ArModel& model, const std::string& out_dir) {
  const std::string path = out_dir + "/ar.ckpt";
  need_file(path, "train-ar");
  nd::load_checkpoint(model.params(), path);
}

std::vector<harness::ShapeSpec> train_split(const ExperimentConfig& cfg,
                                            const std::vector<harness::ShapeSpec>& shapes) {
  return {shapes.begin(), shapes.end() - cfg.held_out};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Wraps a trainer step with coarse progress lines on stdout (wall times never
// reach report files, which must stay byte-reproducible).
template <typename StepFn>
auto with_progress(const char* phase, int total_steps, StepFn fn) {
  const int every = std::max(1, total_steps / 10);
  auto t0 = std::chrono::steady_clock::now();
  return [=](int step) {
    harness::StepRecord rec = fn(step);
    if ((step + 1) % every == 0 || step + 1 == total_steps) {
      std::printf("%s step %d/%d loss=%.4f (%.1fs)\n", phase, step + 1, total_steps, rec.total,
                  seconds_since(t0));
      std::fflush(stdout);
    }
    return rec;
  };
}

void abort_if_nan(const harness::PhaseResult& result) {
  if (result.nan_abort) {
    throw NumericalError(result.abort_message +
                         " (the last finite-loss checkpoint is retained on disk)");
  }
}

std::string shape_token_path(const std::string& out_dir, int index) {
  return out_dir + "/tokens/shape_" + std::to_string(index) + ".vatk";
}

// ---- commands ---------------------------------------------------------------

int cmd_gen_data(const CommonArgs& args, int count) {
  ExperimentConfig cfg = resolve_config(args);
  if (count > 0) cfg.dataset_count = count;
  cfg.validate();
  DirLock lock(args.out_dir);
  const std::vector<harness::ShapeSpec> shapes =
      harness::make_dataset(cfg.dataset_count, cfg.seed);
  harness::save_dataset(shapes, cfg.seed, args.out_dir + "/dataset.json");
  write_meta(args.out_dir + "/dataset.meta.json", cfg, {{"shapes", shapes.size()}});
  std::printf("wrote %zu shapes to %s/dataset.json (seed %llu)\n", shapes.size(),
              args.out_dir.c_str(), static_cast<unsigned long long>(cfg.seed));
  return 0;
}

int cmd_train_vat(const CommonArgs& args, const std::string& strategy, int phase1_steps,
                  int phase2_steps) {
  ExperimentConfig cfg = resolve_config(args);
  if (!strategy.empty()) cfg.vat.strategy = tok::strategy_from_string(strategy);
  if (phase1_steps >= 0) cfg.phase1_steps = phase1_steps;
  if (phase2_steps >= 0) cfg.phase2_steps = phase2_steps;
  cfg.validate();
  DirLock lock(args.out_dir);
  const auto shapes = need_dataset(cfg, args.out_dir);
  harness::TokenizerTrainer trainer(cfg, train_split(cfg, shapes));
  harness::CurveLog log(args.out_dir + "/vat_curves.jsonl", harness::config_hash(cfg), cfg.seed);

  harness::PhaseResult phase1 = harness::run_phase(
      "phase1", cfg.phase1_steps, cfg.checkpoint_every, trainer.tokenizer().params(),
      args.out_dir + "/vat_phase1.ckpt", &log,
      with_progress("phase1", cfg.phase1_steps, [&](int s) { return trainer.phase1_step(s); }));
  abort_if_nan(phase1);
  write_meta(args.out_dir + "/vat_phase1.ckpt.meta.json", cfg,
             {{"phase", "phase1"}, {"steps", phase1.steps_completed}});

  trainer.init_codebook();
  harness::PhaseResult phase2 = harness::run_phase(
      "phase2", cfg.phase2_steps, cfg.checkpoint_every, trainer.tokenizer().params(),
      args.out_dir + "/vat.ckpt", &log,
      with_progress("phase2", cfg.phase2_steps, [&](int s) {
        harness::StepRecord rec = trainer.phase2_step(s);
        if ((s + 1) % trainer.shape_count() == 0) trainer.reseed_dead(s);
        return rec;
      }));
  abort_if_nan(phase2);
  write_meta(args.out_dir + "/vat.ckpt.meta.json", cfg,
             {{"phase", "phase2"}, {"steps", phase2.steps_completed}});
  harness::save_experiment(cfg, args.out_dir + "/config.json");
  std::printf("tokenizer training done: phase1 %d steps (final loss %.4f), "
              "phase2 %d steps (final loss %.4f)\n",
              phase1.steps_completed, phase1.final_loss, phase2.steps_completed,
              phase2.final_loss);
  return 0;
}

int cmd_train_ar(const CommonArgs& args, int steps) {
  ExperimentConfig cfg = resolve_config(args);
  if (steps >= 0) cfg.stage2_steps = steps;
  cfg.validate();
  DirLock lock(args.out_dir);
  const auto shapes = need_dataset(cfg, args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);
  tokenizer.params().freeze_all();  // stage 2 consumes the tokenizer read-only

  std::printf("encoding %d training shapes...\n",
              static_cast<int>(shapes.size()) - cfg.held_out);
  std::fflush(stdout);
  harness::ArTrainer trainer(cfg, tokenizer, train_split(cfg, shapes));
  std::printf("%zu pyramids ready\n", trainer.pyramids().size());

  harness::CurveLog log(args.out_dir + "/ar_curves.jsonl", harness::config_hash(cfg), cfg.seed);
  harness::PhaseResult stage2 = harness::run_phase(
      "stage2", cfg.stage2_steps, cfg.checkpoint_every, trainer.model().params(),
      args.out_dir + "/ar.ckpt", &log,
      with_progress("stage2", cfg.stage2_steps, [&](int s) { return trainer.step(s); }));
  abort_if_nan(stage2);
  write_meta(args.out_dir + "/ar.ckpt.meta.json", cfg,
             {{"phase", "stage2"}, {"steps", stage2.steps_completed}});
  std::printf("prior training done: %d steps, final loss %.4f\n", stage2.steps_completed,
              stage2.final_loss);
  return 0;
}

int cmd_encode(const CommonArgs& args, int index, bool bit_mode) {
  ExperimentConfig cfg = resolve_config(args);
  DirLock lock(args.out_dir);
  const auto shapes = need_dataset(cfg, args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);
  fs::create_directories(args.out_dir + "/tokens");

  std::vector<int> indices;
  if (index >= 0) {
    if (index >= static_cast<int>(shapes.size())) {
      throw DataError("shape index " + std::to_string(index) + " outside the dataset (size " +
                      std::to_string(shapes.size()) + ")");
    }
    indices.push_back(index);
  } else {
    for (int i = 0; i < static_cast<int>(shapes.size()); ++i) indices.push_back(i);
  }

  const codec::PackMode mode = bit_mode ? codec::PackMode::kBits : codec::PackMode::kBytes;
  const int width = cfg.vat.codebook_size <= 256 ? 1 : 2;
  for (int i : indices) {
    const geom::PointSampleSet cloud = harness::shape_cloud(shapes[static_cast<size_t>(i)], cfg, i);
    const tok::TokenPyramid pyramid = tokenizer.encode_points(cloud.positions, cloud.normals);
    const codec::PackedPayload payload = codec::pack(pyramid, cfg.vat.codebook_size, mode, width);
    codec::write_stream(payload, shape_token_path(args.out_dir, i));
    std::printf("shape %d: %d tokens -> %llu bytes (%s)\n", i, pyramid.total_tokens(),
                static_cast<unsigned long long>(payload.header.stream_bytes()),
                bit_mode ? "bit mode" : "byte mode");
  }
  write_meta(args.out_dir + "/tokens/meta.json", cfg, {{"count", indices.size()}});
  return 0;
}

int cmd_decode(const CommonArgs& args, int index, bool save_grids) {
  ExperimentConfig cfg = resolve_config(args);
  DirLock lock(args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);
  fs::create_directories(args.out_dir + "/meshes");

  // Ground truth is optional at decode time; with the dataset present the
  // command reports reconstruction IoU per shape.
  std::vector<harness::ShapeSpec> shapes;
  if (fs::exists(args.out_dir + "/dataset.json")) {
    shapes = harness::load_dataset(args.out_dir + "/dataset.json");
  }

  std::vector<int> indices;
  if (index >= 0) {
    indices.push_back(index);
  } else {
    for (int i = 0;; ++i) {
      if (!fs::exists(shape_token_path(args.out_dir, i))) break;
      indices.push_back(i);
    }
    if (indices.empty()) {
      throw DataError("no token streams under " + args.out_dir +
                      "/tokens (run the encode command first)");
    }
  }

  for (int i : indices) {
    const std::string token_path = shape_token_path(args.out_dir, i);
    need_file(token_path, "encode");
    const codec::PackedPayload payload = codec::read_stream(token_path);
    if (payload.header.codebook_size != static_cast<std::uint32_t>(cfg.vat.codebook_size)) {
      throw DataError(token_path + " was packed for codebook size " +
                      std::to_string(payload.header.codebook_size) +
                      " but the config says " + std::to_string(cfg.vat.codebook_size));
    }
    const tok::TokenPyramid pyramid = codec::unpack(payload);
    pyramid.validate(cfg.vat.scale_schedule, cfg.vat.codebook_size);
    const geom::OccupancyGrid grid =
        harness::decode_grid(tokenizer, tokenizer.pyramid_to_latent(pyramid),
                             cfg.eval_resolution);
    const geom::TriangleMesh mesh = geom::marching_cubes(grid);
    geom::save_obj(mesh, args.out_dir + "/meshes/shape_" + std::to_string(i) + ".obj");
    if (save_grids) {
      geom::save_grid(grid, args.out_dir + "/meshes/shape_" + std::to_string(i) + ".vatg");
    }
    if (i < static_cast<int>(shapes.size())) {
      const geom::OccupancyGrid truth =
          geom::grid_from_sdf(shapes[static_cast<size_t>(i)].field(), cfg.eval_resolution);
      std::printf("shape %d: %zu triangles, iou=%.4f\n", i, mesh.triangles.size(),
                  geom::occupancy_iou(grid.values, truth.values));
    } else {
      std::printf("shape %d: %zu triangles\n", i, mesh.triangles.size());
    }
  }
  write_meta(args.out_dir + "/meshes/meta.json", cfg, {{"count", indices.size()}});
  return 0;
}

int cmd_generate(const CommonArgs& args, int class_id, float temperature, int top_k) {
  ExperimentConfig cfg = resolve_config(args);
  DirLock lock(args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);
  ar::ArModel model(cfg.ar, cfg.seed + 1);
  load_prior(model, args.out_dir);
  fs::create_directories(args.out_dir + "/gen");

  std::vector<int> classes;
  if (class_id >= 0) {
    classes.push_back(class_id);
  } else {
    for (int c = 0; c < harness::kNumShapeClasses; ++c) classes.push_back(c);
  }

  for (int c : classes) {
    nd::Rng rng = harness::step_rng(cfg.seed, harness::kGenerateTag, c);
    const tok::TokenPyramid pyramid =
        model.generate(harness::one_hot_condition(c), tokenizer.codebook(), rng, temperature,
                       top_k);
    const geom::OccupancyGrid grid = harness::decode_grid(
        tokenizer, tokenizer.pyramid_to_latent(pyramid), cfg.eval_resolution);
    const geom::TriangleMesh mesh = geom::marching_cubes(grid);
    const std::string base = args.out_dir + "/gen/class_" + std::to_string(c);
    geom::save_obj(mesh, base + ".obj");
    const int width = cfg.vat.codebook_size <= 256 ? 1 : 2;
    codec::write_stream(codec::pack(pyramid, cfg.vat.codebook_size,
                                     codec::PackMode::kBytes, width), base + ".vatk");
    std::printf("class %d (%s): %d tokens, %zu triangles\n", c,
                harness::class_kind(c), pyramid.total_tokens(), mesh.triangles.size());
  }
  write_meta(args.out_dir + "/gen/meta.json", cfg, {{"classes", classes.size()}});
  return 0;
}

int cmd_eval(const CommonArgs& args, int limit) {
  ExperimentConfig cfg = resolve_config(args);
  DirLock lock(args.out_dir);
  const auto shapes = need_dataset(cfg, args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);

  const int n_train = static_cast<int>(shapes.size()) - cfg.held_out;
  int n_eval = cfg.held_out > 0 ? cfg.held_out : static_cast<int>(shapes.size());
  const int first = cfg.held_out > 0 ? n_train : 0;
  if (limit > 0) n_eval = std::min(n_eval, limit);

  std::vector<harness::ReconstructionEval> recon;
  for (int j = 0; j < n_eval; ++j) {
    const int idx = first + j;
    recon.push_back(harness::evaluate_reconstruction(tokenizer, shapes[static_cast<size_t>(idx)],
                                                     cfg, idx));
    std::printf("recon shape %d: iou=%.4f f=%.2f\n", idx, recon.back().iou,
                recon.back().f_score);
    std::fflush(stdout);
  }
  const std::string recon_text = harness::reconstruction_report(recon, cfg);
  write_text(args.out_dir + "/recon_report.txt", recon_text);
  write_text(args.out_dir + "/recon_report.json",
             harness::reconstruction_report_json(recon, cfg));
  std::printf("\n%s\n", recon_text.c_str());

  if (fs::exists(args.out_dir + "/ar.ckpt")) {
    ar::ArModel model(cfg.ar, cfg.seed + 1);
    load_prior(model, args.out_dir);
    std::vector<harness::GenerationEval> gen;
    for (int c = 0; c < harness::kNumShapeClasses; ++c) {
      nd::Rng rng = harness::step_rng(cfg.seed, harness::kGenerateTag, c);
      gen.push_back(harness::evaluate_generation(model, tokenizer, c, cfg, rng));
      std::printf("gen class %d: iou=%.4f f=%.2f\n", c, gen.back().iou, gen.back().f_score);
      std::fflush(stdout);
    }
    const std::string gen_text = harness::generation_report(gen, cfg);
    write_text(args.out_dir + "/gen_report.txt", gen_text);
    write_text(args.out_dir + "/gen_report.json", harness::generation_report_json(gen, cfg));
    std::printf("\n%s\n", gen_text.c_str());
  } else {
    std::printf("no ar.ckpt found; skipping the generation section\n");
  }
  return 0;
}

int cmd_compress_stats(const CommonArgs& args, int count) {
  ExperimentConfig cfg = resolve_config(args);
  DirLock lock(args.out_dir);
  const auto shapes = need_dataset(cfg, args.out_dir);
  tok::VatTokenizer tokenizer(cfg.vat, cfg.seed);
  load_tokenizer(tokenizer, args.out_dir);
  fs::create_directories(args.out_dir + "/compress");

  const int n = std::min(count, static_cast<int>(shapes.size()));
  std::vector<harness::CompressionStat> stats;
  for (int i = 0; i < n; ++i) {
    stats.push_back(harness::compression_stat(
        tokenizer, shapes[static_cast<size_t>(i)], cfg, i,
        args.out_dir + "/compress/shape_" + std::to_string(i) + ".obj"));
  }
  const std::string text = harness::compression_report(stats, cfg);
  write_text(args.out_dir + "/compress_report.txt", text);
  write_text(args.out_dir + "/compress_report.json",
             harness::compression_report_json(stats, cfg));
  std::printf("%s\n", text.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational 3D shape tokenizer: dataset, training, codec, and evaluation"};
  app.require_subcommand(1);

  CommonArgs args;
  int gen_count = -1;
  std::string strategy;
  int phase1_steps = -1, phase2_steps = -1, ar_steps = -1;
  int shape_index = -1;
  bool bit_mode = false, save_grids = false;
  int class_id = -1, top_k = -1, eval_limit = -1, comp_count = 8;
  float temperature = -1.0f;

  CLI::App* gen_data = app.add_subcommand("gen-data", "generate the synthetic shape dataset");
  add_common(gen_data, args);
  gen_data->add_option("--count", gen_count, "override dataset_count");

  CLI::App* train_vat = app.add_subcommand("train-vat", "two-phase tokenizer training");
  add_common(train_vat, args);
  train_vat->add_option("--strategy", strategy, "vvq | none | dropout | stochastic");
  train_vat->add_option("--phase1-steps", phase1_steps, "override phase 1 step count");
  train_vat->add_option("--phase2-steps", phase2_steps, "override phase 2 step count");

  CLI::App* train_ar = app.add_subcommand("train-ar", "train the next-scale prior");
  add_common(train_ar, args);
  train_ar->add_option("--steps", ar_steps, "override stage 2 step count");

  CLI::App* encode = app.add_subcommand("encode", "tokenize dataset shapes to .vatk streams");
  add_common(encode, args);
  encode->add_option("--index", shape_index, "single shape index (default: all)");
  encode->add_flag("--bits", bit_mode, "pack with ceil(log2 V) bits per token");

  CLI::App* decode = app.add_subcommand("decode", "decode .vatk streams to meshes");
  add_common(decode, args);
  decode->add_option("--index", shape_index, "single shape index (default: all encoded)");
  decode->add_flag("--save-grids", save_grids, "also write occupancy grids");

  CLI::App* generate = app.add_subcommand("generate", "sample shapes from the trained prior");
  add_common(generate, args);
  generate->add_option("--class-id", class_id, "condition class (default: all)");
  generate->add_option("--temperature", temperature, "sampling temperature (default: config)");
  generate->add_option("--top-k", top_k, "top-k cutoff (default: config)");

  CLI::App* eval = app.add_subcommand("eval", "reconstruction (and generation) metric reports");
  add_common(eval, args);
  eval->add_option("--limit", eval_limit, "cap the number of evaluated shapes");

  CLI::App* compress = app.add_subcommand("compress-stats", "token versus mesh storage report");
  add_common(compress, args);
  compress->add_option("--count", comp_count, "shapes to include");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // --help exits 0; any parse problem is a usage error
  }

  try {
    if (gen_data->parsed()) return cmd_gen_data(args, gen_count);
    if (train_vat->parsed()) return cmd_train_vat(args, strategy, phase1_steps, phase2_steps);
    if (train_ar->parsed()) return cmd_train_ar(args, ar_steps);
    if (encode->parsed()) return cmd_encode(args, shape_index, bit_mode);
    if (decode->parsed()) return cmd_decode(args, shape_index, save_grids);
    if (generate->parsed()) return cmd_generate(args, class_id, temperature, top_k);
    if (eval->parsed()) return cmd_eval(args, eval_limit);
    if (compress->parsed()) return cmd_compress_stats(args, comp_count);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
