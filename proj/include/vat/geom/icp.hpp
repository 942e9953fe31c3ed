#pragma once

#include <array>
#include <vector>

#include "vat/geom/vec3.hpp"

namespace vat::geom {

// Rigid motion p -> R p + t with R row-major.
struct RigidTransform {
  std::array<std::array<float, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation{0, 0, 0};

  Vec3 apply(const Vec3& p) const {
    return Vec3{rotation[0][0] * p.x + rotation[0][1] * p.y + rotation[0][2] * p.z,
                rotation[1][0] * p.x + rotation[1][1] * p.y + rotation[1][2] * p.z,
                rotation[2][0] * p.x + rotation[2][1] * p.y + rotation[2][2] * p.z} +
           translation;
  }

  static RigidTransform identity() { return RigidTransform{}; }

  // Rotation angle in radians, from the trace.
  float angle() const;
};

struct IcpResult {
  RigidTransform transform;
  float residual = 0.0f;        // mean closest-point distance after alignment
  int iterations = 0;
  std::vector<Vec3> aligned;    // source points under the final transform
};

// Aligns source onto target by iterating nearest-neighbor correspondences
// and best-fit rigid motions. Iterations that would increase the mean
// closest-point distance are rejected and stop the loop, so the residual is
// non-increasing across accepted iterations. All-identical source or target
// points yield the identity transform.
IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                    int max_iter = 50, float tol = 1e-6f);

}  // namespace vat::geom
