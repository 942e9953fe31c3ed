#include "vat/geom/sampling.hpp"

#include <cmath>
#include <stdexcept>

#include "vat/geom/occupancy.hpp"

namespace vat::geom {

void PointSampleSet::validate() const {
  if (!normals.empty() && normals.size() != positions.size()) {
    throw std::runtime_error("PointSampleSet: normal count does not match position count");
  }
  if (occupancy.size() != positions.size()) {
    throw std::runtime_error("PointSampleSet: occupancy count does not match position count");
  }
  const float pad = 1e-6f;
  for (const Vec3& p : positions) {
    if (std::fabs(p.x) > 0.5f + pad || std::fabs(p.y) > 0.5f + pad ||
        std::fabs(p.z) > 0.5f + pad) {
      throw std::runtime_error("PointSampleSet: position outside the unit cube");
    }
  }
  for (const Vec3& n : normals) {
    if (std::fabs(norm(n) - 1.0f) > 1e-4f) {
      throw std::runtime_error("PointSampleSet: non-unit normal");
    }
  }
  for (float o : occupancy) {
    if (!(o >= 0.0f && o <= 1.0f)) {
      throw std::runtime_error("PointSampleSet: occupancy outside [0,1]");
    }
  }
}

int fourier_feature_size(int n_freq) { return 3 + 6 * n_freq; }

std::vector<float> fourier_features(const Vec3& p, int n_freq) {
  if (n_freq < 0) throw std::invalid_argument("fourier_features: n_freq must be >= 0");
  std::vector<float> out;
  out.reserve(static_cast<size_t>(fourier_feature_size(n_freq)));
  out.push_back(p.x);
  out.push_back(p.y);
  out.push_back(p.z);
  float freq = static_cast<float>(M_PI);
  for (int k = 0; k < n_freq; ++k) {
    out.push_back(std::sin(freq * p.x));
    out.push_back(std::sin(freq * p.y));
    out.push_back(std::sin(freq * p.z));
    out.push_back(std::cos(freq * p.x));
    out.push_back(std::cos(freq * p.y));
    out.push_back(std::cos(freq * p.z));
    freq *= 2.0f;
  }
  return out;
}

bool project_to_surface(const SdfField& field, Vec3& p, int max_iter, float tol) {
  Vec3 q = p;
  for (int it = 0; it < max_iter; ++it) {
    float d = field(q);
    if (std::fabs(d) <= tol) {
      if (std::fabs(q.x) > 0.5f || std::fabs(q.y) > 0.5f || std::fabs(q.z) > 0.5f) return false;
      p = q;
      return true;
    }
    Vec3 g = sdf_gradient(field, q);
    float gn = norm(g);
    if (gn < 1e-6f) return false;  // flat spot; cannot make progress
    q -= g * (d / (gn * gn));      // Newton step along the numeric gradient
  }
  return false;
}

namespace {

Vec3 uniform_cube_point(vat::nd::Rng& rng) {
  return {static_cast<float>(rng.uniform()) - 0.5f, static_cast<float>(rng.uniform()) - 0.5f,
          static_cast<float>(rng.uniform()) - 0.5f};
}

// Draws one surface point by projecting uniform seeds; counts failures
// against a shared budget so a surface-free field terminates with an error.
Vec3 draw_surface_point(const SdfField& field, vat::nd::Rng& rng, int& budget) {
  while (budget > 0) {
    Vec3 p = uniform_cube_point(rng);
    if (project_to_surface(field, p)) return p;
    --budget;
  }
  throw std::runtime_error(
      "sample_supervision: no surface found inside the unit cube (projection budget "
      "exhausted)");
}

}  // namespace

PointSampleSet sample_supervision(const SdfField& field, int n_uniform, int n_near,
                                  vat::nd::Rng& rng, float sigma_near, float band) {
  if (n_uniform < 0 || n_near < 0) {
    throw std::invalid_argument("sample_supervision: negative sample count");
  }
  PointSampleSet set;
  set.positions.reserve(static_cast<size_t>(n_uniform + n_near));
  set.occupancy.reserve(static_cast<size_t>(n_uniform + n_near));
  for (int i = 0; i < n_uniform; ++i) {
    Vec3 p = uniform_cube_point(rng);
    set.positions.push_back(p);
    set.occupancy.push_back(semi_continuous_occupancy(field(p), band));
  }
  int budget = std::max(10000, 100 * n_near);
  for (int i = 0; i < n_near; ++i) {
    Vec3 sp = draw_surface_point(field, rng, budget);
    Vec3 p = sp + Vec3{static_cast<float>(rng.normal()) * sigma_near,
                       static_cast<float>(rng.normal()) * sigma_near,
                       static_cast<float>(rng.normal()) * sigma_near};
    p = clamp_unit_cube(p);
    set.positions.push_back(p);
    set.occupancy.push_back(semi_continuous_occupancy(field(p), band));
  }
  return set;
}

PointSampleSet sample_surface_points(const SdfField& field, int count, vat::nd::Rng& rng) {
  if (count <= 0) throw std::invalid_argument("sample_surface_points: count must be positive");
  PointSampleSet set;
  set.positions.reserve(static_cast<size_t>(count));
  set.normals.reserve(static_cast<size_t>(count));
  set.occupancy.assign(static_cast<size_t>(count), 0.5f);
  int budget = std::max(10000, 100 * count);
  for (int i = 0; i < count; ++i) {
    Vec3 sp = draw_surface_point(field, rng, budget);
    set.positions.push_back(sp);
    set.normals.push_back(normalized(sdf_gradient(field, sp)));
  }
  return set;
}

}  // namespace vat::geom
