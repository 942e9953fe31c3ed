#include "vat/geom/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vat/geom/icp.hpp"
#include "vat/geom/point_index.hpp"
#include "vat/nd/parallel.hpp"

namespace vat::geom {

namespace {

void check_matched(const std::vector<float>& pred, const std::vector<float>& target) {
  if (pred.empty()) throw std::invalid_argument("occupancy metrics: empty inputs");
  if (pred.size() != target.size()) {
    throw std::invalid_argument("occupancy metrics: prediction/target size mismatch");
  }
}

// For every point of `from`, distance to the nearest point of `index`.
std::vector<float> nn_distances(const std::vector<Vec3>& from, const PointIndex& index) {
  std::vector<float> out(from.size());
  vat::nd::parallel_for(static_cast<int64_t>(from.size()), [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      float d2 = 0.0f;
      index.nearest(from[static_cast<std::size_t>(i)], &d2);
      out[static_cast<std::size_t>(i)] = std::sqrt(d2);
    }
  });
  return out;
}

double mean_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

double fraction_below(const std::vector<float>& v, float threshold) {
  int64_t n = 0;
  for (float x : v) {
    if (x <= threshold) ++n;
  }
  return static_cast<double>(n) / static_cast<double>(v.size());
}

}  // namespace

float occupancy_accuracy(const std::vector<float>& pred, const std::vector<float>& target,
                         float threshold) {
  check_matched(pred, target);
  int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] >= threshold, t = target[i] >= threshold;
    if (p == t) ++correct;
  }
  return static_cast<float>(static_cast<double>(correct) / static_cast<double>(pred.size()));
}

float occupancy_iou(const std::vector<float>& pred, const std::vector<float>& target,
                    float threshold) {
  check_matched(pred, target);
  int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] >= threshold, t = target[i] >= threshold;
    inter += (p && t) ? 1 : 0;
    uni += (p || t) ? 1 : 0;
  }
  if (uni == 0) return 1.0f;  // both sets empty: perfect agreement
  return static_cast<float>(static_cast<double>(inter) / static_cast<double>(uni));
}

float cs_iou(const std::vector<float>& per_scale_iou) {
  if (per_scale_iou.empty()) throw std::invalid_argument("cs_iou: no scales");
  double s = 0.0;
  for (float v : per_scale_iou) s += v;
  return static_cast<float>(s / static_cast<double>(per_scale_iou.size()));
}

float chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_distance: empty cloud");
  PointIndex ia(a), ib(b);
  double da = mean_of(nn_distances(a, ib));
  double db = mean_of(nn_distances(b, ia));
  return static_cast<float>(0.5 * (da + db));
}

float f_score(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
              float threshold) {
  if (pred.empty() || target.empty()) throw std::invalid_argument("f_score: empty cloud");
  PointIndex ip(pred), it(target);
  double precision = fraction_below(nn_distances(pred, it), threshold);
  double recall = fraction_below(nn_distances(target, ip), threshold);
  if (precision + recall == 0.0) return 0.0f;
  return static_cast<float>(100.0 * 2.0 * precision * recall / (precision + recall));
}

MeshComparison compare_meshes(const TriangleMesh& predicted, const TriangleMesh& target,
                              vat::nd::Rng& rng, int n_points, float f_score_threshold) {
  if (n_points < 1) throw std::invalid_argument("compare_meshes: n_points < 1");
  if (target.empty()) throw std::invalid_argument("compare_meshes: empty target mesh");
  MeshComparison out;
  if (predicted.empty()) {
    out.empty_prediction = true;
    out.chamfer = kChamferSentinel;
    out.f_score = kFScoreSentinel;
    return out;
  }

  std::vector<Vec3> pred_pts, tgt_pts, normals;
  sample_surface(predicted, n_points, rng, pred_pts, normals);
  sample_surface(target, n_points, rng, tgt_pts, normals);

  IcpResult icp = icp_align(pred_pts, tgt_pts);
  out.icp_residual = icp.residual;
  out.icp_iterations = icp.iterations;
  out.chamfer = chamfer_distance(icp.aligned, tgt_pts);
  out.f_score = f_score(icp.aligned, tgt_pts, f_score_threshold);
  return out;
}

}  // namespace vat::geom
