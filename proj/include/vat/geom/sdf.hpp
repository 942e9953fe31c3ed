#pragma once

#include <functional>

#include "vat/geom/vec3.hpp"

namespace vat::geom {

// Signed distance field: negative strictly inside, positive strictly outside.
// Analytic primitives are exact (1-Lipschitz); CSG combinations are the usual
// min/max bounds, still 1-Lipschitz and sign-correct.
struct SdfField {
  std::function<float(const Vec3&)> eval;

  float operator()(const Vec3& p) const { return eval(p); }
  explicit operator bool() const { return static_cast<bool>(eval); }
};

SdfField sdf_sphere(float radius);
SdfField sdf_box(const Vec3& half_extents);
// Ring around the z axis: circle of radius `major` in the xy plane, tube
// radius `minor`.
SdfField sdf_torus(float major, float minor);
SdfField sdf_capsule(const Vec3& a, const Vec3& b, float radius);

SdfField sdf_union(SdfField a, SdfField b);
SdfField sdf_intersection(SdfField a, SdfField b);
SdfField sdf_difference(SdfField a, SdfField b);

SdfField sdf_translate(SdfField f, const Vec3& offset);
// Uniform scale by s > 0; reported distances scale accordingly (exactness
// preserved).
SdfField sdf_scale(SdfField f, float s);
SdfField sdf_rotate_z(SdfField f, float angle_rad);

// Central-difference gradient; unit length near smooth regions of an exact
// field.
Vec3 sdf_gradient(const SdfField& f, const Vec3& p, float h = 1e-4f);

}  // namespace vat::geom
