#include "vat/geom/point_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vat::geom {

PointIndex::PointIndex(std::vector<Vec3> points, int resolution)
    : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("PointIndex: empty point set");
  if (resolution < 0) throw std::invalid_argument("PointIndex: negative resolution");
  res_ = resolution;
  if (res_ == 0) {
    res_ = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(points_.size()))));
    res_ = std::min(res_, 64);
  }

  Vec3 hi = points_[0];
  lo_ = points_[0];
  for (const Vec3& p : points_) {
    lo_ = cwise_min(lo_, p);
    hi = cwise_max(hi, p);
  }
  Vec3 ext = hi - lo_;
  float pad = 1e-5f + 1e-4f * std::max({ext.x, ext.y, ext.z});
  lo_ -= Vec3{pad, pad, pad};
  hi += Vec3{pad, pad, pad};
  ext = hi - lo_;
  dim_ = ext / static_cast<float>(res_);
  min_dim_ = std::min({dim_.x, dim_.y, dim_.z});

  cells_.resize(static_cast<std::size_t>(res_) * res_ * res_);
  for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
    const Vec3& p = points_[static_cast<std::size_t>(i)];
    int cx = cell_of(p.x, lo_.x, 1.0f / dim_.x, res_);
    int cy = cell_of(p.y, lo_.y, 1.0f / dim_.y, res_);
    int cz = cell_of(p.z, lo_.z, 1.0f / dim_.z, res_);
    cells_[(static_cast<std::size_t>(cx) * res_ + cy) * res_ + cz].push_back(i);
  }
}

int PointIndex::cell_of(float x, float lo, float inv_dim, int res) const {
  int c = static_cast<int>((x - lo) * inv_dim);
  return std::clamp(c, 0, res - 1);
}

int PointIndex::nearest(const Vec3& q, float* dist2) const {
  // distance from q to the padded bounding box (0 if inside)
  Vec3 hi = lo_ + dim_ * static_cast<float>(res_);
  Vec3 clamped{std::clamp(q.x, lo_.x, hi.x), std::clamp(q.y, lo_.y, hi.y),
               std::clamp(q.z, lo_.z, hi.z)};
  float outside = norm(q - clamped);

  int cx = cell_of(q.x, lo_.x, 1.0f / dim_.x, res_);
  int cy = cell_of(q.y, lo_.y, 1.0f / dim_.y, res_);
  int cz = cell_of(q.z, lo_.z, 1.0f / dim_.z, res_);

  float best2 = std::numeric_limits<float>::max();
  int best = -1;
  auto scan_cell = [&](int x, int y, int z) {
    const auto& bucket = cells_[(static_cast<std::size_t>(x) * res_ + y) * res_ + z];
    for (int i : bucket) {
      float d2 = norm2(q - points_[static_cast<std::size_t>(i)]);
      if (d2 < best2) {
        best2 = d2;
        best = i;
      }
    }
  };

  int max_ring = res_;  // rings beyond the grid are clipped away below
  for (int ring = 0; ring <= max_ring; ++ring) {
    // Any point in a cell at Chebyshev ring distance `ring` from the query
    // cell is at least (ring-1)*min_dim - outside away from q, so once that
    // lower bound exceeds the best hit we can stop.
    if (best >= 0 && ring >= 1) {
      float bound = static_cast<float>(ring - 1) * min_dim_ - outside;
      if (bound > 0 && bound * bound > best2) break;
    }
    int x0 = std::max(0, cx - ring), x1 = std::min(res_ - 1, cx + ring);
    int y0 = std::max(0, cy - ring), y1 = std::min(res_ - 1, cy + ring);
    int z0 = std::max(0, cz - ring), z1 = std::min(res_ - 1, cz + ring);
    for (int x = x0; x <= x1; ++x) {
      for (int y = y0; y <= y1; ++y) {
        for (int z = z0; z <= z1; ++z) {
          int cheb = std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)});
          if (cheb != ring) continue;  // shell only; inner rings already done
          scan_cell(x, y, z);
        }
      }
    }
  }
  if (dist2) *dist2 = best2;
  return best;
}

}  // namespace vat::geom
