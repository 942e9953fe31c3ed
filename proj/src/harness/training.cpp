#include "vat/harness/training.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "json.hpp"

#include "vat/geom/occupancy.hpp"
#include "vat/harness/eval.hpp"
#include "vat/nd/checkpoint.hpp"
#include "vat/nd/ops.hpp"

namespace vat::harness {

namespace {

// Detached value copy: shares nothing with the source's autograd graph, so
// codebook-maintenance arithmetic never extends a training step's tape.
nd::Tensor detached(const nd::Tensor& t) {
  return nd::Tensor::from(std::vector<float>(*t.data), t.shape);
}

}  // namespace

bool StepRecord::finite() const {
  return std::isfinite(total) && std::isfinite(occupancy) && std::isfinite(codebook) &&
         std::isfinite(commitment) && std::isfinite(kl);
}

CurveLog::CurveLog(const std::string& path) : file_(path, std::ios::trunc) {
  if (!file_) throw DataError("cannot open loss log for writing: " + path);
}

CurveLog::CurveLog(const std::string& path, const std::string& config_hash, std::uint64_t seed)
    : CurveLog(path) {
  nlohmann::json stamp{{"config_hash", config_hash}, {"seed", seed}};
  file_ << stamp.dump() << '\n';
  file_.flush();
}

void CurveLog::append(const std::string& phase, const StepRecord& r) {
  if (!file_.is_open()) return;  // logging is optional
  nlohmann::json line{{"phase", phase},       {"step", r.step},
                      {"total", r.total},     {"occupancy", r.occupancy},
                      {"codebook", r.codebook}, {"commitment", r.commitment},
                      {"kl", r.kl}};
  file_ << line.dump() << '\n';
  file_.flush();
}

nd::Rng step_rng(std::uint64_t seed, int tag, int step) {
  const std::uint64_t salt =
      static_cast<std::uint64_t>(tag) * 0x100000000ull + static_cast<std::uint64_t>(step);
  return nd::Rng(seed).split(salt);
}

geom::PointSampleSet shape_cloud(const ShapeSpec& spec, const ExperimentConfig& cfg, int index) {
  nd::Rng rng = step_rng(cfg.seed, kCloudTag, index);
  return geom::sample_surface_points(spec.field(), cfg.vat.n_points, rng);
}

TokenizerTrainer::TokenizerTrainer(const ExperimentConfig& cfg, std::vector<ShapeSpec> train_shapes)
    : cfg_(cfg),
      shapes_(std::move(train_shapes)),
      tok_(cfg.vat, cfg.seed),
      opt_(tok_.params(), nd::AdamConfig{cfg.lr_vat, 0.9f, 0.99f, 1e-8f}) {
  cfg_.validate();
  if (shapes_.empty()) throw DataError("tokenizer training needs at least one shape");
  fields_.reserve(shapes_.size());
  clouds_.reserve(shapes_.size());
  for (size_t i = 0; i < shapes_.size(); ++i) {
    shapes_[i].validate();
    fields_.push_back(shapes_[i].field());
    clouds_.push_back(shape_cloud(shapes_[i], cfg_, static_cast<int>(i)));
  }
  if (cfg_.vat.use_ema) {
    // The table moves by EMA instead of gradient descent; freezing keeps the
    // graph (and every other parameter's update) identical either way.
    tok_.params().find("tok.codebook")->frozen = true;
  }
}

StepRecord TokenizerTrainer::phase1_step(int step) { return run_step(step, kPhase1Tag, false); }

StepRecord TokenizerTrainer::phase2_step(int step) { return run_step(step, kPhase2Tag, true); }

StepRecord TokenizerTrainer::run_step(int step, int tag, bool quantize) {
  if (step < 0) throw std::invalid_argument("training step index must be >= 0");
  const int idx = step % static_cast<int>(shapes_.size());
  nd::Rng rng = step_rng(cfg_.seed, tag, step);
  nd::Rng point_rng = rng.split(1);
  nd::Rng noise_rng = rng.split(2);
  nd::Rng strategy_rng = rng.split(3);

  geom::PointSampleSet sup = geom::sample_supervision(
      fields_[idx], cfg_.supervision_uniform, cfg_.supervision_near, point_rng);
  nd::Tensor target =
      nd::Tensor::from(sup.occupancy, {static_cast<int>(sup.size()), 1});

  nd::Tensor features = tok_.featurize(clouds_[idx]);
  nd::Tensor compressed = tok_.compress(features);
  tok::LatentDistribution dist = tok_.latent_distribution(compressed);
  const bool noise_on = cfg_.vat.strategy != tok::Strategy::kNone;
  nd::Tensor z0 = tok_.reparameterize(dist, noise_rng, noise_on);

  nd::Tensor decoder_input = z0;
  nd::Tensor zhat_codebook;
  const nd::Tensor* codebook_term = nullptr;
  tok::TokenPyramid assignment;  // kept for the EMA replay below

  if (quantize) {
    tok::VvqResult result = cfg_.vat.strategy == tok::Strategy::kStochastic
                                ? tok_.vvq_encode_stochastic(z0, strategy_rng)
                                : tok_.vvq_encode(z0);
    decoder_input = result.zhat;
    if (cfg_.vat.strategy == tok::Strategy::kDropout &&
        strategy_rng.uniform() < cfg_.vat.dropout_p) {
      const int scales = static_cast<int>(cfg_.vat.scale_schedule.size());
      decoder_input = tok::partial_zhat(result, 1 + strategy_rng.uniform_int(scales));
    }
    // Codebook/commitment terms always see the full reconstruction.
    zhat_codebook = result.zhat_codebook;
    codebook_term = &zhat_codebook;
    assignment = std::move(result.pyramid);
  }

  nd::Tensor logits = tok_.decode_logits(decoder_input, sup.positions);
  tok::TokenizerLoss loss =
      tok::tokenizer_loss(cfg_.vat, logits, target, z0, codebook_term, dist);

  tok_.params().zero_grad();
  nd::backward(loss.total);
  opt_.step();

  if (quantize && cfg_.vat.use_ema) {
    // Move each entry toward the mean of the downsampled residual rows that
    // selected it. The rows are replayed with the pre-update table so they
    // match the assignments the forward pass actually made.
    const auto& schedule = cfg_.vat.scale_schedule;
    std::vector<nd::Tensor> scale_rows;
    nd::Tensor residual = detached(z0);
    for (size_t s = 0; s < schedule.size(); ++s) {
      nd::Tensor x = tok::down(residual, schedule[s]);
      scale_rows.push_back(x);
      nd::Tensor quantized = tok_.codebook().lookup(assignment.scales[s]);
      residual = nd::sub(residual, tok::up(quantized, cfg_.vat.latent_count));
    }
    for (size_t s = 0; s < schedule.size(); ++s) {
      tok_.codebook().ema_update(scale_rows[s], assignment.scales[s], cfg_.vat.ema_decay);
    }
  }

  StepRecord record;
  record.step = step;
  record.total = loss.total.item();
  record.occupancy = loss.occupancy;
  record.codebook = loss.codebook;
  record.commitment = loss.commitment;
  record.kl = loss.kl;
  return record;
}

void TokenizerTrainer::init_codebook() {
  const int count = std::min(cfg_.kmeans_shapes, shape_count());
  std::vector<nd::Tensor> rows;
  rows.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    nd::Tensor compressed = tok_.compress(tok_.featurize(clouds_[static_cast<size_t>(i)]));
    rows.push_back(detached(tok_.latent_distribution(compressed).mu));
  }
  nd::Tensor pool = nd::concat_rows(rows);
  nd::Rng rng = step_rng(cfg_.seed, kKmeansTag, 0);
  tok_.codebook().init_kmeans(pool, rng);
  tok_.codebook().reset_usage();
}

int TokenizerTrainer::reseed_dead(int step) {
  // Pool the vectors the quantizer actually sees: per-scale downsampled
  // residuals of a few noise-free encodings.
  const int count = std::min(shape_count(), 8);
  const auto& schedule = cfg_.vat.scale_schedule;
  std::vector<nd::Tensor> rows;
  for (int i = 0; i < count; ++i) {
    nd::Tensor compressed = tok_.compress(tok_.featurize(clouds_[static_cast<size_t>(i)]));
    nd::Tensor residual = detached(tok_.latent_distribution(compressed).mu);
    for (int target_len : schedule) {
      nd::Tensor x = tok::down(residual, target_len);
      rows.push_back(x);
      nd::Tensor quantized = tok_.codebook().lookup(tok_.codebook().nearest(x));
      residual = nd::sub(residual, tok::up(quantized, cfg_.vat.latent_count));
    }
  }
  nd::Rng rng = step_rng(cfg_.seed, kReseedTag, step);
  const int reseeded = tok_.codebook().reseed_dead(nd::concat_rows(rows), rng);
  tok_.codebook().reset_usage();
  return reseeded;
}

ar::ConditionEmbedding one_hot_condition(int class_id) {
  if (class_id < 0 || class_id >= kNumShapeClasses) {
    throw std::invalid_argument("class id " + std::to_string(class_id) +
                                " outside [0, " + std::to_string(kNumShapeClasses) + ")");
  }
  nd::Tensor features = nd::Tensor::zeros({1, kNumShapeClasses});
  features.at(static_cast<size_t>(class_id)) = 1.0f;
  return ar::ConditionEmbedding{features};
}

ArTrainer::ArTrainer(const ExperimentConfig& cfg, const tok::VatTokenizer& tokenizer,
                     const std::vector<ShapeSpec>& train_shapes)
    : cfg_(cfg),
      tok_(tokenizer),
      model_(cfg.ar, cfg.seed + 1),
      opt_(model_.params(), nd::AdamConfig{cfg.lr_ar, 0.9f, 0.99f, 1e-8f}) {
  cfg_.validate();
  if (train_shapes.empty()) throw DataError("prior training needs at least one shape");
  if (!tok_.codebook().initialized()) {
    throw DataError("the tokenizer codebook is uninitialized; train the tokenizer first");
  }
  const int filter_res = std::min(cfg_.eval_resolution, 32);
  for (size_t i = 0; i < train_shapes.size(); ++i) {
    train_shapes[i].validate();
    geom::PointSampleSet cloud = shape_cloud(train_shapes[i], cfg_, static_cast<int>(i));
    tok::TokenPyramid pyramid = tok_.encode_points(cloud.positions, cloud.normals);
    if (cfg_.stage2_iou_filter) {
      geom::OccupancyGrid pred =
          decode_grid(tok_, tok_.pyramid_to_latent(pyramid), filter_res);
      geom::OccupancyGrid truth = geom::grid_from_sdf(train_shapes[i].field(), filter_res);
      if (geom::occupancy_iou(pred.values, truth.values) < cfg_.stage2_iou_threshold) continue;
    }
    pyramids_.push_back(std::move(pyramid));
    class_ids_.push_back(train_shapes[i].class_id);
  }
  if (pyramids_.empty()) {
    throw DataError("the reconstruction filter rejected every training shape; "
                    "lower stage2_iou_threshold or retrain the tokenizer");
  }
}

StepRecord ArTrainer::step(int step) {
  if (step < 0) throw std::invalid_argument("training step index must be >= 0");
  const size_t idx = static_cast<size_t>(step) % pyramids_.size();
  ar::ConditionEmbedding condition = one_hot_condition(class_ids_[idx]);
  nd::Tensor loss = model_.loss(pyramids_[idx], tok_.codebook(), condition);

  model_.params().zero_grad();
  nd::backward(loss);
  opt_.step();

  StepRecord record;
  record.step = step;
  record.total = loss.item();
  return record;
}

PhaseResult run_phase(const std::string& phase_name, int steps, int checkpoint_every,
                      nd::ParamStore& params, const std::string& ckpt_path, CurveLog* log,
                      const std::function<StepRecord(int)>& step_fn) {
  if (steps < 0) throw std::invalid_argument("run_phase: negative step count");
  PhaseResult result;
  // Start with a pre-phase snapshot so an abort on the very first step still
  // leaves loadable parameters behind.
  if (!ckpt_path.empty()) nd::save_checkpoint(params, ckpt_path);
  for (int step = 0; step < steps; ++step) {
    StepRecord record;
    try {
      record = step_fn(step);
    } catch (const std::runtime_error& e) {  // optimizer non-finite-gradient abort
      result.nan_abort = true;
      result.abort_message = phase_name + ": " + e.what();
      return result;
    }
    if (!record.finite()) {
      result.nan_abort = true;
      result.abort_message =
          phase_name + ": non-finite loss at step " + std::to_string(step);
      return result;
    }
    ++result.steps_completed;
    result.final_loss = record.total;
    if (log) log->append(phase_name, record);
    if (!ckpt_path.empty() && checkpoint_every > 0 && (step + 1) % checkpoint_every == 0) {
      nd::save_checkpoint(params, ckpt_path);
    }
  }
  if (!ckpt_path.empty() && steps > 0) nd::save_checkpoint(params, ckpt_path);
  return result;
}

}  // namespace vat::harness
