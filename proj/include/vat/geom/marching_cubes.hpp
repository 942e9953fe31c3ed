#pragma once

#include "vat/geom/mesh.hpp"
#include "vat/geom/occupancy.hpp"

namespace vat::geom {

// Extracts the iso-surface of an occupancy grid as a watertight triangle
// mesh. Corners with value >= iso count as inside (ties resolve toward
// inside); crossing positions are linearly interpolated; triangle winding is
// counter-clockwise seen from outside the shape. A grid with no crossing
// yields an empty mesh.
TriangleMesh marching_cubes(const OccupancyGrid& grid, float iso = 0.5f);

}  // namespace vat::geom
