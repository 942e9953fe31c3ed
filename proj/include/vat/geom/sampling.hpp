#pragma once

#include <vector>

#include "vat/geom/sdf.hpp"
#include "vat/geom/vec3.hpp"
#include "vat/nd/rng.hpp"

namespace vat::geom {

// Query/supervision point set. Positions always lie in [-0.5, 0.5]^3; normals
// are unit length and present only for surface-derived samples (empty
// otherwise); occupancy holds semi-continuous targets in [0,1].
struct PointSampleSet {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<float> occupancy;

  size_t size() const { return positions.size(); }
  void validate() const;  // throws on violated invariants
};

// Positional encoding: [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin/cos at
// 2^(n_freq-1) pi], each band covering all three axes; total size
// 3 + 6*n_freq.
std::vector<float> fourier_features(const Vec3& p, int n_freq);
int fourier_feature_size(int n_freq);

// Projects a point onto the zero level set by damped Newton steps along the
// numeric gradient. Returns false if it fails to converge inside the cube.
bool project_to_surface(const SdfField& field, Vec3& p, int max_iter = 16,
                        float tol = 1e-4f);

// Supervision sampler: n_uniform i.i.d. points in the unit cube plus n_near
// surface points perturbed by N(0, sigma_near) per axis (clamped to the
// cube), each with a semi-continuous occupancy target. Surface points come
// from Newton projection of uniform seeds. Supervision sets carry no normals
// (use sample_surface_points for oriented clouds). Throws if n_near > 0 and
// the field has no surface inside the cube.
PointSampleSet sample_supervision(const SdfField& field, int n_uniform, int n_near,
                                  vat::nd::Rng& rng, float sigma_near = 0.02f,
                                  float band = 1.0f / 128.0f);

// Surface point cloud for encoder input: positions on the zero level set,
// unit normals from the field gradient, occupancy 0.5 (on-surface value).
// Throws if the field has no surface inside the cube.
PointSampleSet sample_surface_points(const SdfField& field, int count, vat::nd::Rng& rng);

}  // namespace vat::geom
