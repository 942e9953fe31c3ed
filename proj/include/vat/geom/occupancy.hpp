#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vat/geom/sdf.hpp"
#include "vat/geom/vec3.hpp"

namespace vat::geom {

// Semi-continuous occupancy target: 1 deep inside, 0 far outside, linear ramp
// across the band |sdf| <= s. Continuous everywhere, monotone non-increasing
// in the signed distance.
float semi_continuous_occupancy(float sdf_value, float s = 1.0f / 128.0f);

// Occupancy sampled at the corners of an r^3 cell grid over the unit cube
// [-0.5, 0.5]^3: (r+1)^3 values in [0,1], x-major / z-fastest layout.
struct OccupancyGrid {
  int resolution = 0;
  std::vector<float> values;  // (resolution+1)^3

  OccupancyGrid() = default;
  explicit OccupancyGrid(int res);

  int side() const { return resolution + 1; }
  size_t index(int ix, int iy, int iz) const {
    return (static_cast<size_t>(ix) * side() + iy) * side() + iz;
  }
  float& at(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }
  float at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }

  // World position of corner (ix, iy, iz).
  Vec3 corner(int ix, int iy, int iz) const;

  // Throws if the value count or any value's range is invalid.
  void validate() const;
};

// Evaluates semi-continuous occupancy of the field at every corner.
OccupancyGrid grid_from_sdf(const SdfField& field, int resolution, float s = 1.0f / 128.0f);

// Evaluates an arbitrary occupancy function at every corner (values are
// clamped to [0,1]).
OccupancyGrid grid_from_function(const std::function<float(const Vec3&)>& occupancy,
                                 int resolution);

// Binary grid file: magic "VATG", u32 version (=1), u32 resolution, then
// (resolution+1)^3 float32 values, little-endian.
void save_grid(const OccupancyGrid& grid, const std::string& path);
OccupancyGrid load_grid(const std::string& path);

}  // namespace vat::geom
