#include "vat/geom/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vat::geom {

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int i : t) {
      if (i < 0 || i >= n) {
        throw std::runtime_error("TriangleMesh: vertex index " + std::to_string(i) +
                                 " out of range [0, " + std::to_string(n) + ")");
      }
    }
    const Vec3& a = vertices[static_cast<size_t>(t[0])];
    const Vec3& b = vertices[static_cast<size_t>(t[1])];
    const Vec3& c = vertices[static_cast<size_t>(t[2])];
    if (0.5 * static_cast<double>(norm(cross(b - a, c - a))) <= 1e-12) {
      throw std::runtime_error("TriangleMesh: degenerate triangle (area <= 1e-12)");
    }
  }
  if (!normals.empty() && normals.size() != vertices.size()) {
    throw std::runtime_error("TriangleMesh: normal count does not match vertex count");
  }
}

void TriangleMesh::bounds(Vec3& lo, Vec3& hi) const {
  if (vertices.empty()) {
    lo = hi = Vec3{0, 0, 0};
    return;
  }
  lo = hi = vertices[0];
  for (const Vec3& v : vertices) {
    lo = cwise_min(lo, v);
    hi = cwise_max(hi, v);
  }
}

void TriangleMesh::normalize_to_unit_cube(float target_extent) {
  if (vertices.empty()) return;
  Vec3 lo, hi;
  bounds(lo, hi);
  Vec3 center = (lo + hi) * 0.5f;
  Vec3 ext = hi - lo;
  float max_ext = std::max({ext.x, ext.y, ext.z});
  float s = max_ext > 0.0f ? target_extent / max_ext : 1.0f;
  for (Vec3& v : vertices) v = (v - center) * s;
}

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    const Vec3& a = vertices[static_cast<size_t>(t[0])];
    const Vec3& b = vertices[static_cast<size_t>(t[1])];
    const Vec3& c = vertices[static_cast<size_t>(t[2])];
    area += 0.5 * static_cast<double>(norm(cross(b - a, c - a)));
  }
  return area;
}

Vec3 TriangleMesh::face_normal(int tri) const {
  const auto& t = triangles[static_cast<size_t>(tri)];
  const Vec3& a = vertices[static_cast<size_t>(t[0])];
  const Vec3& b = vertices[static_cast<size_t>(t[1])];
  const Vec3& c = vertices[static_cast<size_t>(t[2])];
  return normalized(cross(b - a, c - a));
}

double TriangleMesh::signed_volume() const {
  double vol = 0.0;
  for (const auto& t : triangles) {
    const Vec3& a = vertices[static_cast<size_t>(t[0])];
    const Vec3& b = vertices[static_cast<size_t>(t[1])];
    const Vec3& c = vertices[static_cast<size_t>(t[2])];
    vol += static_cast<double>(dot(a, cross(b, c))) / 6.0;
  }
  return vol;
}

void sample_surface(const TriangleMesh& mesh, int count, vat::nd::Rng& rng,
                    std::vector<Vec3>& positions, std::vector<Vec3>& normals) {
  positions.clear();
  normals.clear();
  if (mesh.triangles.empty() || count <= 0) {
    if (count > 0) throw std::runtime_error("sample_surface: mesh has no triangles");
    return;
  }
  std::vector<double> cum(mesh.triangles.size());
  double acc = 0.0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    acc += 0.5 * static_cast<double>(norm(cross(b - a, c - a)));
    cum[i] = acc;
  }
  if (acc <= 0.0) throw std::runtime_error("sample_surface: mesh has zero total area");

  positions.reserve(static_cast<size_t>(count));
  normals.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    double pick = rng.uniform() * acc;
    size_t ti = static_cast<size_t>(
        std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    if (ti >= cum.size()) ti = cum.size() - 1;
    const auto& t = mesh.triangles[ti];
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    // uniform barycentric point
    float r1 = static_cast<float>(rng.uniform());
    float r2 = static_cast<float>(rng.uniform());
    float su = std::sqrt(r1);
    float u = 1.0f - su;
    float v = r2 * su;
    positions.push_back(a * u + b * v + c * (1.0f - u - v));
    normals.push_back(normalized(cross(b - a, c - a)));
  }
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_obj: cannot open '" + path + "'");
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) {
        throw std::runtime_error("load_obj: malformed vertex at line " + std::to_string(lineno));
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // token forms: i, i/t, i//n, i/t/n — only the vertex index is used
        size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int i = 0;
        try {
          i = std::stoi(head);
        } catch (const std::exception&) {
          throw std::runtime_error("load_obj: malformed face index at line " +
                                   std::to_string(lineno));
        }
        if (i < 0) i = static_cast<int>(mesh.vertices.size()) + i + 1;  // relative index
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) {
        throw std::runtime_error("load_obj: face with fewer than 3 vertices at line " +
                                 std::to_string(lineno));
      }
      for (size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
    // all other tags (vn, vt, o, g, s, #, usemtl, mtllib, ...) are skipped
  }
  mesh.validate();
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_obj: cannot open '" + path + "' for writing");
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", static_cast<double>(v.x),
                  static_cast<double>(v.y), static_cast<double>(v.z));
    out << buf;
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw std::runtime_error("save_obj: write failed for '" + path + "'");
}

}  // namespace vat::geom
