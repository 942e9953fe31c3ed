#include "vat/geom/occupancy.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "vat/nd/parallel.hpp"

namespace vat::geom {

static_assert(std::endian::native == std::endian::little,
              "grid file format assumes a little-endian host");

float semi_continuous_occupancy(float sdf_value, float s) {
  if (s <= 0.0f) throw std::invalid_argument("semi_continuous_occupancy: s must be positive");
  if (sdf_value < -s) return 1.0f;
  if (sdf_value > s) return 0.0f;
  return 0.5f - 0.5f * sdf_value / s;
}

OccupancyGrid::OccupancyGrid(int res) : resolution(res) {
  if (res < 1) throw std::invalid_argument("OccupancyGrid: resolution must be >= 1");
  values.assign(static_cast<size_t>(side()) * side() * side(), 0.0f);
}

Vec3 OccupancyGrid::corner(int ix, int iy, int iz) const {
  float r = static_cast<float>(resolution);
  return {-0.5f + static_cast<float>(ix) / r, -0.5f + static_cast<float>(iy) / r,
          -0.5f + static_cast<float>(iz) / r};
}

void OccupancyGrid::validate() const {
  if (resolution < 1) throw std::runtime_error("OccupancyGrid: resolution must be >= 1");
  size_t want = static_cast<size_t>(side()) * side() * side();
  if (values.size() != want) {
    throw std::runtime_error("OccupancyGrid: value count " + std::to_string(values.size()) +
                             " != (r+1)^3 = " + std::to_string(want));
  }
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::runtime_error("OccupancyGrid: value outside [0,1]");
    }
  }
}

OccupancyGrid grid_from_function(const std::function<float(const Vec3&)>& occupancy,
                                 int resolution) {
  OccupancyGrid grid(resolution);
  const int side = grid.side();
  vat::nd::parallel_for(static_cast<int64_t>(side) * side * side, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) {
      int iz = static_cast<int>(i % side);
      int iy = static_cast<int>((i / side) % side);
      int ix = static_cast<int>(i / (static_cast<int64_t>(side) * side));
      grid.values[static_cast<size_t>(i)] =
          std::clamp(occupancy(grid.corner(ix, iy, iz)), 0.0f, 1.0f);
    }
  });
  return grid;
}

OccupancyGrid grid_from_sdf(const SdfField& field, int resolution, float s) {
  return grid_from_function(
      [&](const Vec3& p) { return semi_continuous_occupancy(field(p), s); }, resolution);
}

namespace {
constexpr char kMagic[4] = {'V', 'A', 'T', 'G'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_grid(const OccupancyGrid& grid, const std::string& path) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_grid: cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  uint32_t version = kVersion;
  uint32_t res = static_cast<uint32_t>(grid.resolution);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&res), sizeof(res));
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("save_grid: write failed for '" + path + "'");
}

OccupancyGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_grid: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_grid: bad magic in '" + path + "'");
  }
  uint32_t version = 0, res = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&res), sizeof(res));
  if (!in || version != kVersion) {
    throw std::runtime_error("load_grid: unsupported version in '" + path + "'");
  }
  if (res < 1 || res > 4096) {
    throw std::runtime_error("load_grid: implausible resolution in '" + path + "'");
  }
  OccupancyGrid grid(static_cast<int>(res));
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!in) throw std::runtime_error("load_grid: truncated file '" + path + "'");
  grid.validate();
  return grid;
}

}  // namespace vat::geom
