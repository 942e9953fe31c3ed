#pragma once

#include <vector>

#include "vat/geom/vec3.hpp"

namespace vat::geom {

// Uniform-grid nearest-neighbor index over a fixed point set. Queries are
// const and safe to issue from multiple threads.
class PointIndex {
 public:
  // resolution 0 picks a grid close to cbrt(n) cells per axis.
  explicit PointIndex(std::vector<Vec3> points, int resolution = 0);

  // Index of the closest point to q; if dist2 is non-null it receives the
  // squared distance.
  int nearest(const Vec3& q, float* dist2 = nullptr) const;

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  int cell_of(float x, float lo, float inv_dim, int res) const;

  std::vector<Vec3> points_;
  std::vector<std::vector<int>> cells_;
  Vec3 lo_{0, 0, 0};
  Vec3 dim_{1, 1, 1};   // cell extents per axis
  float min_dim_ = 1.0f;
  int res_ = 1;
};

}  // namespace vat::geom
