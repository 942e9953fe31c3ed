#include "vat/geom/marching_cubes.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vat::geom {

namespace {

// Cube corner c in [0,8) sits at offset ((c>>0)&1, (c>>1)&1, (c>>2)&1).
// The 12 cube edges are enumerated per axis over the four corners lacking
// that axis bit, in increasing corner order.
struct CubeTopo {
  std::array<std::array<int, 2>, 12> edge_corners;
  int edge_of[8][8];

  CubeTopo() {
    for (auto& row : edge_of) std::fill(std::begin(row), std::end(row), -1);
    int eid = 0;
    for (int axis = 0; axis < 3; ++axis) {
      int bit = 1 << axis;
      for (int c = 0; c < 8; ++c) {
        if (c & bit) continue;
        edge_corners[static_cast<size_t>(eid)] = {c, c | bit};
        edge_of[c][c | bit] = eid;
        edge_of[c | bit][c] = eid;
        ++eid;
      }
    }
  }
};

const CubeTopo& topo() {
  static const CubeTopo t;
  return t;
}

// Corners of face (axis, side) in counter-clockwise order seen from outside
// the cube.
std::array<int, 4> face_cycle(int axis, int side) {
  int u = (axis + 1) % 3, v = (axis + 2) % 3;
  constexpr int kUv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  std::array<int, 4> cyc{};
  for (int i = 0; i < 4; ++i) {
    cyc[static_cast<size_t>(i)] =
        (side << axis) | (kUv[i][0] << u) | (kUv[i][1] << v);
  }
  // (e_u x e_v) = +e_axis, so the cycle is CCW seen from the +axis side;
  // flip it for the -axis face.
  if (side == 0) std::reverse(cyc.begin(), cyc.end());
  return cyc;
}

// Marching squares on one face: directed segments between crossing points on
// the face's cube edges, oriented with the inside region on the left when
// viewed from outside the cube. The ambiguous two-diagonal case always
// separates the inside corners, which is intrinsic to the face (both
// adjacent cubes agree), keeping the surface crack-free.
void face_segments(uint8_t config, int axis, int side,
                   std::vector<std::pair<int, int>>& segs) {
  std::array<int, 4> q = face_cycle(axis, side);
  bool in[4];
  int e[4];
  int count = 0;
  for (int i = 0; i < 4; ++i) {
    in[i] = (config >> q[static_cast<size_t>(i)]) & 1;
    count += in[i] ? 1 : 0;
    e[i] = topo().edge_of[q[static_cast<size_t>(i)]][q[static_cast<size_t>((i + 1) % 4)]];
  }
  if (count == 0 || count == 4) return;
  if (count == 1) {
    for (int i = 0; i < 4; ++i) {
      if (in[i]) segs.emplace_back(e[i], e[(i + 3) & 3]);
    }
  } else if (count == 3) {
    for (int i = 0; i < 4; ++i) {
      if (!in[i]) segs.emplace_back(e[(i + 3) & 3], e[i]);
    }
  } else if (in[0] && in[2]) {
    segs.emplace_back(e[0], e[3]);
    segs.emplace_back(e[2], e[1]);
  } else if (in[1] && in[3]) {
    segs.emplace_back(e[1], e[0]);
    segs.emplace_back(e[3], e[2]);
  } else {
    for (int i = 0; i < 4; ++i) {
      if (in[i] && in[(i + 1) & 3]) {
        segs.emplace_back(e[(i + 1) & 3], e[(i + 3) & 3]);
        break;
      }
    }
  }
}

using CaseLoops = std::vector<std::vector<int>>;

// Builds the closed crossing loops (as cube-edge index cycles) for one
// corner configuration by chaining the per-face boundary segments. Loops are
// triangulated per cell, where vertex positions are known.
CaseLoops build_case(uint8_t config) {
  std::vector<std::pair<int, int>> segs;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) face_segments(config, axis, side, segs);
  }
  std::map<int, int> next;
  for (const auto& [from, to] : segs) {
    if (!next.emplace(from, to).second) {
      throw std::logic_error("marching cubes table: duplicate segment start");
    }
  }
  CaseLoops loops;
  while (!next.empty()) {
    int start = next.begin()->first;
    std::vector<int> loop;
    int cur = start;
    do {
      loop.push_back(cur);
      auto it = next.find(cur);
      if (it == next.end()) {
        throw std::logic_error("marching cubes table: open boundary loop");
      }
      cur = it->second;
      next.erase(it);
    } while (cur != start);
    if (loop.size() < 3) {
      throw std::logic_error("marching cubes table: loop shorter than 3");
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

const std::array<CaseLoops, 256>& case_table() {
  static const std::array<CaseLoops, 256> table = [] {
    std::array<CaseLoops, 256> t;
    for (int config = 0; config < 256; ++config) {
      t[static_cast<size_t>(config)] = build_case(static_cast<uint8_t>(config));
    }
    return t;
  }();
  return table;
}

double tri_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * static_cast<double>(norm(cross(b - a, c - a)));
}

constexpr double kDegenerateArea = 1e-12;

}  // namespace

TriangleMesh marching_cubes(const OccupancyGrid& grid, float iso) {
  grid.validate();
  const int r = grid.resolution;
  const float cell = 1.0f / static_cast<float>(r);
  TriangleMesh mesh;
  // one shared vertex per crossing grid edge, keyed by base corner and axis
  std::unordered_map<uint64_t, int> edge_vertex;
  const int side = grid.side();
  auto corner_key = [side](int ix, int iy, int iz) {
    return (static_cast<uint64_t>(ix) * side + static_cast<uint64_t>(iy)) * side +
           static_cast<uint64_t>(iz);
  };

  float v[8];
  int gx[8], gy[8], gz[8];
  for (int cx = 0; cx < r; ++cx) {
    for (int cy = 0; cy < r; ++cy) {
      for (int cz = 0; cz < r; ++cz) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          gx[c] = cx + (c & 1);
          gy[c] = cy + ((c >> 1) & 1);
          gz[c] = cz + ((c >> 2) & 1);
          v[c] = grid.at(gx[c], gy[c], gz[c]);
          if (v[c] >= iso) config |= 1 << c;  // tie at iso counts as inside
        }
        if (config == 0 || config == 255) continue;

        // one shared vertex per crossing edge, created on first use
        auto resolve = [&](int edge) {
          auto [c0, c1] = topo().edge_corners[static_cast<size_t>(edge)];
          uint64_t key = corner_key(gx[c0], gy[c0], gz[c0]) * 3 +
                         static_cast<uint64_t>(edge / 4);  // axis = edge/4
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            float t = (iso - v[c0]) / (v[c1] - v[c0]);
            t = std::clamp(t, 0.0f, 1.0f);
            Vec3 p0{-0.5f + static_cast<float>(gx[c0]) * cell,
                    -0.5f + static_cast<float>(gy[c0]) * cell,
                    -0.5f + static_cast<float>(gz[c0]) * cell};
            Vec3 p1{-0.5f + static_cast<float>(gx[c1]) * cell,
                    -0.5f + static_cast<float>(gy[c1]) * cell,
                    -0.5f + static_cast<float>(gz[c1]) * cell};
            it = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size())).first;
            mesh.vertices.push_back(p0 + (p1 - p0) * t);
          }
          return it->second;
        };

        for (const auto& loop : case_table()[static_cast<size_t>(config)]) {
          const size_t n = loop.size();
          std::vector<int> vid(n);
          for (size_t k = 0; k < n; ++k) vid[k] = resolve(loop[k]);
          auto pos = [&](size_t k) -> const Vec3& {
            return mesh.vertices[static_cast<size_t>(vid[k % n])];
          };

          // Chained loops run clockwise seen from outside; emitting each
          // triangle reversed gives counter-clockwise winding with normals
          // away from the inside region. Longer loops are triangulated from
          // a cell-local centroid vertex: a fan chord between two loop
          // crossings can lie inside a cube face and collide with the
          // neighbor cell's chord (a non-manifold pinch), while centroid
          // spokes belong to this cell alone. Degenerate slivers (crossings
          // coinciding because iso sits exactly on corner values) are
          // pruned.
          if (n == 3) {
            if (tri_area(pos(0), pos(2), pos(1)) > kDegenerateArea) {
              mesh.triangles.push_back({vid[0], vid[2], vid[1]});
            }
            continue;
          }
          Vec3 centroid{0, 0, 0};
          for (size_t k = 0; k < n; ++k) centroid += pos(k);
          centroid *= 1.0f / static_cast<float>(n);
          int cid = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(centroid);
          for (size_t k = 0; k < n; ++k) {
            if (tri_area(centroid, pos(k + 1), pos(k)) <= kDegenerateArea) continue;
            mesh.triangles.push_back({cid, vid[(k + 1) % n], vid[k]});
          }
        }
      }
    }
  }
  return mesh;
}

}  // namespace vat::geom
