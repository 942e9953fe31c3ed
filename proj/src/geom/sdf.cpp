#include "vat/geom/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace vat::geom {

SdfField sdf_sphere(float radius) {
  if (radius <= 0.0f) throw std::invalid_argument("sdf_sphere: radius must be positive");
  return {[radius](const Vec3& p) { return norm(p) - radius; }};
}

SdfField sdf_box(const Vec3& half_extents) {
  if (half_extents.x <= 0.0f || half_extents.y <= 0.0f || half_extents.z <= 0.0f) {
    throw std::invalid_argument("sdf_box: half extents must be positive");
  }
  return {[b = half_extents](const Vec3& p) {
    Vec3 q = cwise_abs(p) - b;
    Vec3 outside = cwise_max(q, Vec3{0, 0, 0});
    float inside = std::min(0.0f, std::max({q.x, q.y, q.z}));
    return norm(outside) + inside;
  }};
}

SdfField sdf_torus(float major, float minor) {
  if (major <= 0.0f || minor <= 0.0f || minor >= major) {
    throw std::invalid_argument("sdf_torus: need 0 < minor < major");
  }
  return {[major, minor](const Vec3& p) {
    float ring = std::sqrt(p.x * p.x + p.y * p.y) - major;
    return std::sqrt(ring * ring + p.z * p.z) - minor;
  }};
}

SdfField sdf_capsule(const Vec3& a, const Vec3& b, float radius) {
  if (radius <= 0.0f) throw std::invalid_argument("sdf_capsule: radius must be positive");
  return {[a, b, radius](const Vec3& p) {
    Vec3 ab = b - a;
    float denom = norm2(ab);
    float t = denom > 0.0f ? std::clamp(dot(p - a, ab) / denom, 0.0f, 1.0f) : 0.0f;
    return norm(p - (a + ab * t)) - radius;
  }};
}

SdfField sdf_union(SdfField a, SdfField b) {
  return {[fa = std::move(a.eval), fb = std::move(b.eval)](const Vec3& p) {
    return std::min(fa(p), fb(p));
  }};
}

SdfField sdf_intersection(SdfField a, SdfField b) {
  return {[fa = std::move(a.eval), fb = std::move(b.eval)](const Vec3& p) {
    return std::max(fa(p), fb(p));
  }};
}

SdfField sdf_difference(SdfField a, SdfField b) {
  return {[fa = std::move(a.eval), fb = std::move(b.eval)](const Vec3& p) {
    return std::max(fa(p), -fb(p));
  }};
}

SdfField sdf_translate(SdfField f, const Vec3& offset) {
  return {[fn = std::move(f.eval), offset](const Vec3& p) { return fn(p - offset); }};
}

SdfField sdf_scale(SdfField f, float s) {
  if (s <= 0.0f) throw std::invalid_argument("sdf_scale: scale must be positive");
  return {[fn = std::move(f.eval), s](const Vec3& p) { return fn(p / s) * s; }};
}

SdfField sdf_rotate_z(SdfField f, float angle_rad) {
  float c = std::cos(angle_rad), s = std::sin(angle_rad);
  // evaluate the field in the frame rotated by -angle (inverse transform)
  return {[fn = std::move(f.eval), c, s](const Vec3& p) {
    return fn(Vec3{c * p.x + s * p.y, -s * p.x + c * p.y, p.z});
  }};
}

Vec3 sdf_gradient(const SdfField& f, const Vec3& p, float h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    g[a] = (f(hi) - f(lo)) / (2.0f * h);
  }
  return g;
}

}  // namespace vat::geom
