#pragma once

#include <cmath>
#include <limits>

#include "onfly/geometry.hpp"
#include "onfly/planner.hpp"

namespace onfly {

/// Amanatides-Woo traversal of the cells pierced by origin + t * direction, t in
/// [0, t_max]. `visit(cell, t_enter)` returns false to stop. Stops on leaving the grid.
template <typename Visitor>
void traverseVoxels(const GridGeometry& geo, const Vec3& origin, const Vec3& direction,
                    double t_max, Visitor&& visit) {
  Cell cell = geo.cellOf(origin);
  if (!geo.contains(cell)) return;
  const double o[3] = {origin.x - geo.origin.x, origin.y - geo.origin.y, origin.z - geo.origin.z};
  const double d[3] = {direction.x, direction.y, direction.z};
  int c[3] = {cell.x, cell.y, cell.z};
  int step[3];
  double t_next[3];
  double t_delta[3];
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] > 0.0) {
      step[a] = 1;
      t_next[a] = ((c[a] + 1) * geo.resolution - o[a]) / d[a];
      t_delta[a] = geo.resolution / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      t_next[a] = (c[a] * geo.resolution - o[a]) / d[a];
      t_delta[a] = -geo.resolution / d[a];
    } else {
      step[a] = 0;
      t_next[a] = kInf;
      t_delta[a] = kInf;
    }
  }
  double t = 0.0;
  while (true) {
    const Cell current{c[0], c[1], c[2]};
    if (!geo.contains(current)) return;
    if (!visit(current, t)) return;
    int axis = 0;
    if (t_next[1] < t_next[axis]) axis = 1;
    if (t_next[2] < t_next[axis]) axis = 2;
    t = t_next[axis];
    if (t > t_max) return;
    c[axis] += step[axis];
    t_next[axis] += t_delta[axis];
  }
}

}  // namespace onfly
