#pragma once

#include <array>
#include <string>
#include <vector>

#include "vat/geom/vec3.hpp"
#include "vat/nd/rng.hpp"

namespace vat::geom {

// Indexed triangle mesh. Positions live in the unit cube [-0.5, 0.5]^3 after
// normalize_to_unit_cube(); triangle winding is counter-clockwise seen from
// outside (outward normals by the right-hand rule).
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> normals;  // optional per-vertex normals; empty if absent

  bool empty() const { return triangles.empty(); }

  // Throws std::runtime_error on out-of-range indices or triangles of area
  // <= 1e-12 (degenerate).
  void validate() const;

  void bounds(Vec3& lo, Vec3& hi) const;

  // Uniformly rescales and recenters so the bounding box fits inside
  // [-0.5, 0.5]^3 with the given extent for the largest axis (1.0 = touching).
  void normalize_to_unit_cube(float target_extent = 1.0f);

  double surface_area() const;
  Vec3 face_normal(int tri) const;

  // Signed volume by divergence theorem; positive for outward winding on a
  // closed mesh.
  double signed_volume() const;
};

// Area-weighted uniform surface sampling; returns positions and face normals.
void sample_surface(const TriangleMesh& mesh, int count, vat::nd::Rng& rng,
                    std::vector<Vec3>& positions, std::vector<Vec3>& normals);

// ASCII OBJ. Reader accepts v/f lines (faces may carry /vt/vn suffixes and
// more than 3 vertices, which are fan-triangulated); writer emits vertices and
// faces only, 1-based indices.
TriangleMesh load_obj(const std::string& path);
void save_obj(const TriangleMesh& mesh, const std::string& path);

}  // namespace vat::geom
