#pragma once

#include <memory>

#include "vat/geom/mesh.hpp"
#include "vat/geom/sdf.hpp"
#include "vat/geom/vec3.hpp"

namespace vat::geom {

// Squared distance from a point to a triangle (region classification).
float point_triangle_dist2(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Unsigned closest-distance queries against a fixed triangle set. Two
// implementations behind one interface: exhaustive scan (reference, fine
// below ~50k triangles) and a uniform-grid accelerator for dense queries.
class TriangleDistanceIndex {
 public:
  virtual ~TriangleDistanceIndex() = default;
  virtual float unsigned_distance(const Vec3& p) const = 0;
};

std::unique_ptr<TriangleDistanceIndex> make_brute_force_index(
    std::shared_ptr<const TriangleMesh> mesh);
std::unique_ptr<TriangleDistanceIndex> make_grid_index(
    std::shared_ptr<const TriangleMesh> mesh, int resolution = 32);

// Signed distance for a watertight mesh: unsigned distance with ray-parity
// sign (odd crossing count = inside). Accelerator choice: exhaustive below
// `grid_threshold` triangles, uniform grid at or above it.
SdfField sdf_from_mesh(TriangleMesh mesh, int grid_threshold = 50000);

}  // namespace vat::geom
