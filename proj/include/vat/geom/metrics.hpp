#pragma once

#include <vector>

#include "vat/geom/mesh.hpp"
#include "vat/nd/rng.hpp"

namespace vat::geom {

// --- Occupancy metrics (pointwise, binarized at `threshold`) ---

// Fraction of entries whose binarized prediction matches the binarized target.
float occupancy_accuracy(const std::vector<float>& pred, const std::vector<float>& target,
                         float threshold = 0.5f);

// Intersection-over-union of the binarized occupied sets. When both sets are
// empty there is nothing to disagree about, so the result is defined as 1.0.
float occupancy_iou(const std::vector<float>& pred, const std::vector<float>& target,
                    float threshold = 0.5f);

// Cross-scale IoU: mean of per-scale IoUs, ordered coarse to fine. The last
// entry is expected to be the full-token IoU, making the final-scale value
// coincide with the plain IoU.
float cs_iou(const std::vector<float>& per_scale_iou);

// --- Point-cloud metrics ---

// Symmetric mean closest-point distance: 0.5 * (mean_a min_b |a-b| +
// mean_b min_a |a-b|). Callers align the clouds first (see compare_meshes).
float chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Harmonic mean of precision (predicted points within `threshold` of the
// target cloud) and recall (target points within `threshold` of the
// prediction), as a percentage in [0, 100].
float f_score(const std::vector<Vec3>& pred, const std::vector<Vec3>& target,
              float threshold = 0.01f);

// --- Mesh-level comparison ---

struct MeshComparison {
  float chamfer = 0.0f;
  float f_score = 0.0f;          // percent
  bool empty_prediction = false; // true -> chamfer/f_score are sentinels
  float icp_residual = 0.0f;
  int icp_iterations = 0;
};

// Worst-case sentinels for an empty predicted mesh: no point of the unit
// cube is farther than its diagonal sqrt(3) from any target, and no
// predicted point lands near the target surface.
inline constexpr float kChamferSentinel = 1.7320508f;
inline constexpr float kFScoreSentinel = 0.0f;

// Samples n_points from each surface, aligns the prediction onto the target
// with ICP, then reports chamfer and F-score on the aligned clouds. An empty
// predicted mesh yields the sentinel values with empty_prediction set.
MeshComparison compare_meshes(const TriangleMesh& predicted, const TriangleMesh& target,
                              vat::nd::Rng& rng, int n_points = 10000,
                              float f_score_threshold = 0.01f);

}  // namespace vat::geom
