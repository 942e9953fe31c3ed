#include "vat/geom/mesh_sdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vat::geom {

float point_triangle_dist2(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // region classification over the triangle's Voronoi features
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  float d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0f && d2 <= 0.0f) return norm2(ap);  // vertex a

  Vec3 bp = p - b;
  float d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0f && d4 <= d3) return norm2(bp);  // vertex b

  float vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0f && d1 >= 0.0f && d3 <= 0.0f) {  // edge ab
    float v = d1 / (d1 - d3);
    return norm2(ap - ab * v);
  }

  Vec3 cp = p - c;
  float d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0f && d5 <= d6) return norm2(cp);  // vertex c

  float vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0f && d2 >= 0.0f && d6 <= 0.0f) {  // edge ac
    float w = d2 / (d2 - d6);
    return norm2(ap - ac * w);
  }

  float va = d3 * d6 - d5 * d4;
  if (va <= 0.0f && d4 - d3 >= 0.0f && d5 - d6 >= 0.0f) {  // edge bc
    float w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return norm2(p - (b + (c - b) * w));
  }

  float denom = 1.0f / (va + vb + vc);  // face interior
  float v = vb * denom, w = vc * denom;
  return norm2(p - (a + ab * v + ac * w));
}

namespace {

class BruteForceIndex : public TriangleDistanceIndex {
 public:
  explicit BruteForceIndex(std::shared_ptr<const TriangleMesh> mesh) : mesh_(std::move(mesh)) {}

  float unsigned_distance(const Vec3& p) const override {
    float best = std::numeric_limits<float>::max();
    for (const auto& t : mesh_->triangles) {
      best = std::min(best, point_triangle_dist2(p, mesh_->vertices[static_cast<size_t>(t[0])],
                                                 mesh_->vertices[static_cast<size_t>(t[1])],
                                                 mesh_->vertices[static_cast<size_t>(t[2])]));
    }
    return std::sqrt(best);
  }

 private:
  std::shared_ptr<const TriangleMesh> mesh_;
};

class GridIndex : public TriangleDistanceIndex {
 public:
  GridIndex(std::shared_ptr<const TriangleMesh> mesh, int res)
      : mesh_(std::move(mesh)), res_(res) {
    if (res_ < 1) throw std::invalid_argument("GridIndex: resolution must be >= 1");
    mesh_->bounds(lo_, hi_);
    // pad so boundary triangles land strictly inside
    Vec3 pad = (hi_ - lo_) * 1e-4f + Vec3{1e-5f, 1e-5f, 1e-5f};
    lo_ -= pad;
    hi_ += pad;
    cell_ = (hi_ - lo_) / static_cast<float>(res_);
    cells_.assign(static_cast<size_t>(res_) * res_ * res_, {});
    for (size_t ti = 0; ti < mesh_->triangles.size(); ++ti) {
      const auto& t = mesh_->triangles[ti];
      Vec3 tlo = mesh_->vertices[static_cast<size_t>(t[0])];
      Vec3 thi = tlo;
      for (int k = 1; k < 3; ++k) {
        tlo = cwise_min(tlo, mesh_->vertices[static_cast<size_t>(t[k])]);
        thi = cwise_max(thi, mesh_->vertices[static_cast<size_t>(t[k])]);
      }
      int c0[3], c1[3];
      cell_of(tlo, c0);
      cell_of(thi, c1);
      for (int ix = c0[0]; ix <= c1[0]; ++ix) {
        for (int iy = c0[1]; iy <= c1[1]; ++iy) {
          for (int iz = c0[2]; iz <= c1[2]; ++iz) {
            cells_[cell_index(ix, iy, iz)].push_back(static_cast<int>(ti));
          }
        }
      }
    }
  }

  float unsigned_distance(const Vec3& p) const override {
    Vec3 q{std::clamp(p.x, lo_.x, hi_.x), std::clamp(p.y, lo_.y, hi_.y),
           std::clamp(p.z, lo_.z, hi_.z)};
    float outside = norm(p - q);
    int base[3];
    cell_of(q, base);
    float min_dim = std::min({cell_.x, cell_.y, cell_.z});
    float best2 = std::numeric_limits<float>::max();
    for (int ring = 0; ring < res_; ++ring) {
      // cells at Chebyshev ring k are at least (k-1)*min_dim from q, so any
      // triangle there is at least that minus |p-q| from p
      if (best2 < std::numeric_limits<float>::max()) {
        float bound = static_cast<float>(ring - 1) * min_dim - outside;
        if (bound > 0.0f && bound * bound > best2) break;
      }
      scan_ring(p, base, ring, best2);
    }
    return std::sqrt(best2);
  }

 private:
  void cell_of(const Vec3& p, int out[3]) const {
    for (int a = 0; a < 3; ++a) {
      float rel = (p[a] - lo_[a]) / cell_[a];
      out[a] = std::clamp(static_cast<int>(rel), 0, res_ - 1);
    }
  }

  size_t cell_index(int ix, int iy, int iz) const {
    return (static_cast<size_t>(ix) * res_ + iy) * res_ + iz;
  }

  void scan_cell(const Vec3& p, int ix, int iy, int iz, float& best2) const {
    for (int ti : cells_[cell_index(ix, iy, iz)]) {
      const auto& t = mesh_->triangles[static_cast<size_t>(ti)];
      best2 = std::min(best2,
                       point_triangle_dist2(p, mesh_->vertices[static_cast<size_t>(t[0])],
                                            mesh_->vertices[static_cast<size_t>(t[1])],
                                            mesh_->vertices[static_cast<size_t>(t[2])]));
    }
  }

  void scan_ring(const Vec3& p, const int base[3], int ring, float& best2) const {
    int x0 = base[0] - ring, x1 = base[0] + ring;
    int y0 = base[1] - ring, y1 = base[1] + ring;
    int z0 = base[2] - ring, z1 = base[2] + ring;
    for (int ix = std::max(0, x0); ix <= std::min(res_ - 1, x1); ++ix) {
      for (int iy = std::max(0, y0); iy <= std::min(res_ - 1, y1); ++iy) {
        for (int iz = std::max(0, z0); iz <= std::min(res_ - 1, z1); ++iz) {
          // shell only: skip interior cells already scanned in earlier rings
          if (ix != x0 && ix != x1 && iy != y0 && iy != y1 && iz != z0 && iz != z1) continue;
          scan_cell(p, ix, iy, iz, best2);
        }
      }
    }
  }

  std::shared_ptr<const TriangleMesh> mesh_;
  int res_;
  Vec3 lo_, hi_, cell_;
  std::vector<std::vector<int>> cells_;
};

// Ray-triangle intersection classified into safe hit / safe miss / grazing.
enum class RayHit { kMiss, kHit, kUnreliable };

RayHit classify_ray_hit(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                        const Vec3& c) {
  const float eps = 1e-6f;
  Vec3 e1 = b - a, e2 = c - a;
  Vec3 pv = cross(d, e2);
  float det = dot(e1, pv);
  if (std::fabs(det) < 1e-12f) {
    // ray parallel to the triangle plane: a miss unless the origin is close
    // to that plane, in which case grazing contact is possible
    Vec3 n = cross(e1, e2);
    float nn = norm(n);
    if (nn == 0.0f) return RayHit::kMiss;
    float plane_dist = std::fabs(dot(o - a, n)) / nn;
    return plane_dist < 1e-6f ? RayHit::kUnreliable : RayHit::kMiss;
  }
  float inv = 1.0f / det;
  Vec3 tv = o - a;
  float u = dot(tv, pv) * inv;
  Vec3 qv = cross(tv, e1);
  float v = dot(d, qv) * inv;
  float t = dot(e2, qv) * inv;
  bool safe_hit = u > eps && v > eps && u + v < 1.0f - eps && t > eps;
  bool safe_miss = u < -eps || v < -eps || u + v > 1.0f + eps || t < -eps;
  if (safe_hit) return RayHit::kHit;
  if (safe_miss) return RayHit::kMiss;
  return RayHit::kUnreliable;
}

// Inside test by crossing parity; retries along alternate directions when a
// ray grazes an edge, vertex, or coplanar face.
bool inside_by_parity(const TriangleMesh& mesh, const Vec3& p) {
  static const Vec3 kDirections[] = {
      normalized({0.5424f, 0.7812f, 0.3089f}),
      normalized({-0.3815f, 0.6623f, 0.6447f}),
      normalized({0.7354f, -0.2189f, 0.6413f}),
      normalized({-0.5732f, -0.4829f, 0.6617f}),
      normalized({0.2157f, 0.5411f, -0.8128f}),
  };
  for (const Vec3& dir : kDirections) {
    int crossings = 0;
    bool reliable = true;
    for (const auto& t : mesh.triangles) {
      RayHit h = classify_ray_hit(p, dir, mesh.vertices[static_cast<size_t>(t[0])],
                                  mesh.vertices[static_cast<size_t>(t[1])],
                                  mesh.vertices[static_cast<size_t>(t[2])]);
      if (h == RayHit::kUnreliable) {
        reliable = false;
        break;
      }
      if (h == RayHit::kHit) ++crossings;
    }
    if (reliable) return (crossings % 2) == 1;
  }
  return false;  // every probe grazed; treat as outside
}

}  // namespace

std::unique_ptr<TriangleDistanceIndex> make_brute_force_index(
    std::shared_ptr<const TriangleMesh> mesh) {
  if (!mesh || mesh->triangles.empty()) {
    throw std::invalid_argument("make_brute_force_index: empty mesh");
  }
  return std::make_unique<BruteForceIndex>(std::move(mesh));
}

std::unique_ptr<TriangleDistanceIndex> make_grid_index(std::shared_ptr<const TriangleMesh> mesh,
                                                       int resolution) {
  if (!mesh || mesh->triangles.empty()) {
    throw std::invalid_argument("make_grid_index: empty mesh");
  }
  return std::make_unique<GridIndex>(std::move(mesh), resolution);
}

SdfField sdf_from_mesh(TriangleMesh mesh, int grid_threshold) {
  mesh.validate();
  if (mesh.triangles.empty()) throw std::invalid_argument("sdf_from_mesh: empty mesh");
  auto shared = std::make_shared<const TriangleMesh>(std::move(mesh));
  std::shared_ptr<TriangleDistanceIndex> index;
  if (static_cast<int>(shared->triangles.size()) >= grid_threshold) {
    index = make_grid_index(shared);
  } else {
    index = make_brute_force_index(shared);
  }
  return {[shared, index](const Vec3& p) {
    float d = index->unsigned_distance(p);
    return inside_by_parity(*shared, p) ? -d : d;
  }};
}

}  // namespace vat::geom
