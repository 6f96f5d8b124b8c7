#include "onfly/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>

#include "onfly/voxel_traversal.hpp"

namespace onfly {

// ---------------------------------------------------------------- grids

Cell GridGeometry::cellAt(std::size_t index) const {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(index % nx), static_cast<int>((index / nx) % ny),
          static_cast<int>(index / (nx * ny))};
}

Cell GridGeometry::cellOf(const Vec3& p) const {
  return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
          static_cast<int>(std::floor((p.y - origin.y) / resolution)),
          static_cast<int>(std::floor((p.z - origin.z) / resolution))};
}

Vec3 GridGeometry::center(const Cell& c) const {
  return {origin.x + (c.x + 0.5) * resolution, origin.y + (c.y + 0.5) * resolution,
          origin.z + (c.z + 0.5) * resolution};
}

Cell GridGeometry::clamp(const Cell& c) const {
  return {std::clamp(c.x, 0, dims[0] - 1), std::clamp(c.y, 0, dims[1] - 1),
          std::clamp(c.z, 0, dims[2] - 1)};
}

void GridGeometry::validate() const {
  if (!(resolution > 0.0)) throw std::invalid_argument("grid: resolution must be > 0");
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("grid: dimensions must be positive");
  }
}

OccupancyGrid::OccupancyGrid(GridGeometry geometry)
    : geometry_(geometry), cells_((geometry.validate(), geometry.cellCount()), 0) {}

std::size_t OccupancyGrid::occupiedCount() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

EsdfGrid::EsdfGrid(GridGeometry geometry, double truncation, std::vector<double> values)
    : geometry_(geometry), truncation_(truncation), values_(std::move(values)) {
  if (values_.size() != geometry_.cellCount()) {
    throw std::invalid_argument("esdf: value count does not match the grid");
  }
}

double EsdfGrid::atPoint(const Vec3& p) const {
  const Cell c = geometry_.cellOf(p);
  return geometry_.contains(c) ? at(c) : 0.0;
}

double EsdfGrid::interpolate(const Vec3& p) const {
  const double u[3] = {(p.x - geometry_.origin.x) / geometry_.resolution - 0.5,
                       (p.y - geometry_.origin.y) / geometry_.resolution - 0.5,
                       (p.z - geometry_.origin.z) / geometry_.resolution - 0.5};
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const int n = geometry_.dims[static_cast<std::size_t>(a)];
    if (n == 1) {
      i0[a] = 0;
      f[a] = 0.0;
      continue;
    }
    const double clamped = std::clamp(u[a], 0.0, static_cast<double>(n - 1));
    i0[a] = std::min(static_cast<int>(std::floor(clamped)), n - 2);
    f[a] = clamped - i0[a];
  }
  auto v = [&](int dx, int dy, int dz) {
    const Cell c{std::min(i0[0] + dx, geometry_.dims[0] - 1),
                 std::min(i0[1] + dy, geometry_.dims[1] - 1),
                 std::min(i0[2] + dz, geometry_.dims[2] - 1)};
    return at(c);
  };
  const double c00 = v(0, 0, 0) * (1 - f[0]) + v(1, 0, 0) * f[0];
  const double c10 = v(0, 1, 0) * (1 - f[0]) + v(1, 1, 0) * f[0];
  const double c01 = v(0, 0, 1) * (1 - f[0]) + v(1, 0, 1) * f[0];
  const double c11 = v(0, 1, 1) * (1 - f[0]) + v(1, 1, 1) * f[0];
  const double c0 = c00 * (1 - f[1]) + c10 * f[1];
  const double c1 = c01 * (1 - f[1]) + c11 * f[1];
  return c0 * (1 - f[2]) + c1 * f[2];
}

Vec3 EsdfGrid::gradient(const Vec3& p) const {
  const double h = 0.5 * geometry_.resolution;
  return {(interpolate(p + Vec3{h, 0, 0}) - interpolate(p - Vec3{h, 0, 0})) / (2 * h),
          (interpolate(p + Vec3{0, h, 0}) - interpolate(p - Vec3{0, h, 0})) / (2 * h),
          (interpolate(p + Vec3{0, 0, h}) - interpolate(p - Vec3{0, 0, h})) / (2 * h)};
}

namespace {

// Squared distances are kept in cell units and capped at (r + 1)^2, r = truncation in
// cells; beyond that the truncated result no longer changes. With the cap, each pass is an
// exact minimum over a window of +-r cells, done row-wise so the inner loop is contiguous.
// live[r] records whether row r holds any value below the cap.
void edtRowsX(std::vector<float>& d2, std::vector<std::uint8_t>& live,
              const std::array<int, 3>& dims, float cap, Execution exec) {
  const int nx = dims[0];
  const int rows = dims[1] * dims[2];
  auto row = [&](int r) {
    float* line = d2.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx);
    const bool any = std::find(line, line + nx, 0.0f) != line + nx;
    live[static_cast<std::size_t>(r)] = any ? 1 : 0;
    if (!any) {
      std::fill(line, line + nx, cap);
      return;
    }
    int last = -1;
    for (int q = 0; q < nx; ++q) {
      if (line[q] == 0.0f) last = q;
      line[q] = last < 0 ? cap : std::min(cap, float(q - last) * float(q - last));
    }
    last = -1;
    for (int q = nx - 1; q >= 0; --q) {
      if (line[q] == 0.0f) last = q;
      if (last >= 0) line[q] = std::min(line[q], float(last - q) * float(last - q));
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) row(r);
  } else {
    for (int r = 0; r < rows; ++r) row(r);
  }
}

// out[.., q, ..] = min over |k| <= reach of in[.., q + k, ..] + k^2, along y (axis 1) or z (axis 2).
void edtWindow(const std::vector<float>& in, const std::vector<std::uint8_t>& live_in,
               std::vector<float>& out, std::vector<std::uint8_t>& live_out,
               const std::array<int, 3>& dims, int axis, int reach, float cap, Execution exec) {
  const int nx = dims[0];
  const int ny = dims[1];
  const int nz = dims[2];
  const std::size_t sx = static_cast<std::size_t>(nx);
  const std::size_t plane = sx * static_cast<std::size_t>(ny);
  const int n = axis == 1 ? ny : nz;
  const std::size_t stride = axis == 1 ? sx : plane;
  // Row (z, y) of the output.
  auto row = [&](int z, int y) {
    const int q = axis == 1 ? y : z;
    const std::size_t base = static_cast<std::size_t>(z) * plane + static_cast<std::size_t>(y) * sx;
    const std::size_t r = static_cast<std::size_t>(z) * static_cast<std::size_t>(ny) +
                          static_cast<std::size_t>(y);
    const std::size_t row_stride = axis == 1 ? 1 : static_cast<std::size_t>(ny);
    float* dst = out.data() + base;
    std::fill(dst, dst + nx, cap);
    const int lo = std::max(0, q - reach);
    const int hi = std::min(n - 1, q + reach);
    bool any = false;
    for (int p = lo; p <= hi; ++p) {
      if (!live_in[r + (static_cast<std::size_t>(p) - static_cast<std::size_t>(q)) * row_stride]) {
        continue;
      }
      any = true;
      const float add = float(p - q) * float(p - q);
      const float* src = in.data() + base + (static_cast<std::size_t>(p) - static_cast<std::size_t>(q)) * stride;
      for (int x = 0; x < nx; ++x) dst[x] = std::min(dst[x], src[x] + add);
    }
    live_out[r] = any ? 1 : 0;
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y) row(z, y);
    }
  } else {
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y) row(z, y);
    }
  }
}

}  // namespace

EsdfGrid buildEsdf(const OccupancyGrid& grid, double truncation, Execution exec) {
  if (!(truncation > 0.0)) throw std::invalid_argument("esdf: truncation must be > 0");
  const GridGeometry& geo = grid.geometry();
  const int reach = static_cast<int>(std::ceil(truncation / geo.resolution));
  const float cap = float(reach + 1) * float(reach + 1);
  std::vector<float> a(geo.cellCount());
  const auto cells = grid.cells();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = cells[i] != 0 ? 0.0f : cap;
  std::vector<float> b(a.size());
  const std::size_t rows = static_cast<std::size_t>(geo.dims[1]) * static_cast<std::size_t>(geo.dims[2]);
  std::vector<std::uint8_t> live_a(rows), live_b(rows);
  edtRowsX(a, live_a, geo.dims, cap, exec);
  edtWindow(a, live_a, b, live_b, geo.dims, 1, reach, cap, exec);
  edtWindow(b, live_b, a, live_a, geo.dims, 2, reach, cap, exec);
  std::vector<double> values(a.size());
  const double res = geo.resolution;
  for (std::size_t i = 0; i < a.size(); ++i) {
    values[i] = std::min(truncation, res * std::sqrt(static_cast<double>(a[i])));
  }
  return EsdfGrid(geo, truncation, std::move(values));
}

// ---------------------------------------------------------------- search

bool searchFeasible(const EsdfGrid& esdf, const Cell& c, const SearchOptions& opts,
                    double margin) {
  const GridGeometry& geo = esdf.geometry();
  if (!geo.contains(c)) return false;
  const double z = geo.center(c).z;
  if (z < opts.z_min || z > opts.z_max) return false;
  return esdf.at(c) >= margin;
}

double effectiveMargin(const EsdfGrid& esdf, const Vec3& start, double safety_margin) {
  const Cell c = esdf.geometry().cellOf(start);
  if (!esdf.geometry().contains(c)) return safety_margin;
  return std::min(safety_margin, esdf.at(c));
}

namespace {

struct OpenEntry {
  double f;
  double h;
  std::uint32_t idx;
  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return idx > o.idx;
  }
};

struct Neighbor {
  int dx, dy, dz;
  double cost;  // in cells
};

std::vector<Neighbor> neighbors26() {
  std::vector<Neighbor> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        out.push_back({dx, dy, dz, std::sqrt(double(dx * dx + dy * dy + dz * dz))});
      }
    }
  }
  return out;
}

}  // namespace

PathResult searchPath(const Vec3& start, const Vec3& goal, const EsdfGrid& esdf,
                      const SearchOptions& opts) {
  PathResult out;
  const GridGeometry& geo = esdf.geometry();
  const Cell start_cell = geo.cellOf(start);
  if (!geo.contains(start_cell)) {
    out.failure = "start outside the local grid";
    return out;
  }
  const double margin = effectiveMargin(esdf, start, opts.safety_margin);
  out.effective_margin = margin;

  // Goal candidates: the goal cell itself, else feasible cells within the tolerance by
  // distance to the goal point.
  const Cell goal_cell = geo.clamp(geo.cellOf(goal));
  std::vector<std::pair<double, std::size_t>> candidates;
  if (searchFeasible(esdf, goal_cell, opts, margin)) {
    candidates.emplace_back(0.0, geo.index(goal_cell));
  } else {
    const int r = static_cast<int>(std::ceil(opts.goal_tolerance / geo.resolution));
    for (int dz = -r; dz <= r; ++dz) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const Cell c{goal_cell.x + dx, goal_cell.y + dy, goal_cell.z + dz};
          if (!searchFeasible(esdf, c, opts, margin)) continue;
          const double d = distance(geo.center(c), goal);
          if (d <= opts.goal_tolerance) candidates.emplace_back(d, geo.index(c));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
  }
  if (candidates.empty()) {
    out.failure = "no feasible cell near the goal";
    return out;
  }

  const std::size_t n = geo.cellCount();
  const std::size_t start_idx = geo.index(start_cell);
  const std::size_t target_idx = candidates.front().second;
  const Vec3 target_center = geo.center(geo.cellAt(target_idx));
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, kInf);
  std::vector<std::uint32_t> parent(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint8_t> closed(n, 0);
  const auto steps = neighbors26();
  const double res = geo.resolution;
  auto heuristic = [&](const Cell& c) { return distance(geo.center(c), target_center); };

  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open;
  g[start_idx] = 0.0;
  {
    const double h = heuristic(start_cell);
    open.push({h, h, static_cast<std::uint32_t>(start_idx)});
  }
  bool reached = false;
  while (!open.empty()) {
    const OpenEntry e = open.top();
    open.pop();
    if (closed[e.idx]) continue;
    closed[e.idx] = 1;
    if (e.idx == target_idx) {
      reached = true;
      break;
    }
    const Cell c = geo.cellAt(e.idx);
    for (const Neighbor& s : steps) {
      const Cell nc{c.x + s.dx, c.y + s.dy, c.z + s.dz};
      if (!searchFeasible(esdf, nc, opts, margin)) continue;
      const std::size_t ni = geo.index(nc);
      if (closed[ni]) continue;
      const double tentative = g[e.idx] + s.cost * res;
      if (tentative < g[ni]) {
        g[ni] = tentative;
        parent[ni] = e.idx;
        const double h = heuristic(nc);
        open.push({tentative + h, h, static_cast<std::uint32_t>(ni)});
      }
    }
  }

  std::size_t end_idx = target_idx;
  if (!reached) {
    // The open set is exhausted, so `closed` is the reachable set with exact costs.
    bool found = false;
    for (const auto& [d, idx] : candidates) {
      if (closed[idx]) {
        end_idx = idx;
        found = true;
        break;
      }
    }
    if (!found) {
      out.failure = "goal unreachable";
      return out;
    }
  }
  for (std::size_t i = end_idx;; i = parent[i]) {
    out.cells.push_back(geo.cellAt(i));
    if (i == start_idx) break;
  }
  std::reverse(out.cells.begin(), out.cells.end());
  for (const Cell& c : out.cells) out.waypoints.push_back(geo.center(c));
  out.cost = g[end_idx];
  out.ok = true;
  return out;
}

// ---------------------------------------------------------------- trajectories

void DynamicLimits::validate() const {
  if (!(v_max > 0.0) || !(a_max > 0.0) || !(yaw_rate_max > 0.0)) {
    throw std::invalid_argument("dynamic limits must be positive");
  }
}

TrajectorySample Trajectory::sampleAt(double t) const {
  if (samples.empty()) throw std::logic_error("sampleAt on an empty trajectory");
  if (t <= samples.front().t) return samples.front();
  if (t >= samples.back().t) {
    TrajectorySample s = samples.back();
    s.velocity = {};
    return s;
  }
  const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                   [](double v, const TrajectorySample& s) { return v < s.t; });
  const TrajectorySample& b = *it;
  const TrajectorySample& a = *(it - 1);
  const double w = (t - a.t) / (b.t - a.t);
  TrajectorySample s;
  s.t = t;
  s.position = a.position + (b.position - a.position) * w;
  s.velocity = b.velocity;
  s.yaw = wrapAngle(a.yaw + wrapAngle(b.yaw - a.yaw) * w);
  return s;
}

DynamicsReport checkDynamics(const Trajectory& traj, const DynamicLimits& limits,
                             double speed_tol, double accel_tol, double yaw_rate_tol) {
  DynamicsReport r;
  const auto& s = traj.samples;
  for (std::size_t k = 0; k < s.size(); ++k) {
    r.max_speed = std::max(r.max_speed, s[k].velocity.norm());
    if (k == 0) continue;
    const double dt = s[k].t - s[k - 1].t;
    if (!(dt > 0.0)) {
      r.timestamps_increasing = false;
      continue;
    }
    r.max_acceleration =
        std::max(r.max_acceleration, (s[k].velocity - s[k - 1].velocity).norm() / dt);
    r.max_yaw_rate =
        std::max(r.max_yaw_rate, std::abs(wrapAngle(s[k].yaw - s[k - 1].yaw)) / dt);
  }
  r.ok = r.timestamps_increasing && r.max_speed <= limits.v_max + speed_tol &&
         r.max_acceleration <= limits.a_max + accel_tol &&
         r.max_yaw_rate <= limits.yaw_rate_max + yaw_rate_tol;
  return r;
}

double minClearance(const Trajectory& traj, const EsdfGrid& esdf) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : traj.samples) m = std::min(m, esdf.atPoint(s.position));
  return m;
}

namespace {

std::vector<double> arcLengths(std::span<const Vec3> pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + distance(pts[i - 1], pts[i]);
  return s;
}

Vec3 pointAtArc(std::span<const Vec3> pts, const std::vector<double>& s, double arc) {
  if (arc <= 0.0) return pts.front();
  if (arc >= s.back()) return pts.back();
  const auto it = std::upper_bound(s.begin(), s.end(), arc);
  const std::size_t i = static_cast<std::size_t>(it - s.begin());
  const double len = s[i] - s[i - 1];
  const double w = len > 0.0 ? (arc - s[i - 1]) / len : 0.0;
  return pts[i - 1] + (pts[i] - pts[i - 1]) * w;
}

Vec3 clampNorm(const Vec3& v, double max_norm) {
  const double n = v.norm();
  return n > max_norm ? v * (max_norm / n) : v;
}

// Prefix of a polyline up to the given arc length.
std::vector<Vec3> truncatePolyline(std::span<const Vec3> pts, double max_arc) {
  std::vector<Vec3> out{pts.front()};
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = distance(pts[i - 1], pts[i]);
    if (acc + len >= max_arc) {
      const double w = len > 0.0 ? (max_arc - acc) / len : 0.0;
      out.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * w);
      return out;
    }
    acc += len;
    out.push_back(pts[i]);
  }
  return out;
}

double angleBetween(const Vec3& a, const Vec3& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-9 || nb < 1e-9) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

}  // namespace

std::vector<Vec3> resamplePolyline(std::span<const Vec3> points, double spacing) {
  if (points.empty()) return {};
  if (!(spacing > 0.0)) throw std::invalid_argument("resamplePolyline: spacing must be > 0");
  const auto s = arcLengths(points);
  const double total = s.back();
  if (total <= 0.0) return {points.front(), points.back()};
  const int segments = std::max(1, static_cast<int>(std::ceil(total / spacing - 1e-9)));
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i < segments; ++i) out.push_back(pointAtArc(points, s, total * i / segments));
  out.push_back(points.back());
  return out;
}

Trajectory timeParameterize(std::span<const Vec3> reference, const DynamicLimits& limits,
                            const Vec3& initial_velocity, double dt, double horizon,
                            double speed_scale) {
  if (reference.empty()) throw std::invalid_argument("timeParameterize: empty reference");
  if (!(dt > 0.0) || !(horizon >= 0.0)) {
    throw std::invalid_argument("timeParameterize: dt must be > 0 and horizon >= 0");
  }
  const auto s = arcLengths(reference);
  const double total = s.back();
  const double a_step = limits.a_max * dt;
  const double a_brake = 0.5 * limits.a_max;
  const Vec3 end = reference.back();

  Trajectory traj;
  traj.horizon = horizon;
  Vec3 x = reference.front();
  Vec3 v = clampNorm(initial_velocity, limits.v_max);
  traj.samples.push_back({0.0, x, v, 0.0});

  const int steps = static_cast<int>(std::ceil(horizon / dt - 1e-9));
  const int max_steps = steps + static_cast<int>(std::ceil(limits.v_max / a_step)) + 2;
  std::size_t seg = 0;
  double s_proj = 0.0;
  for (int k = 1; k <= max_steps; ++k) {
    const double t = k * dt;
    // Forward-only projection onto the reference within a short window.
    if (reference.size() > 1) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_seg = seg;
      double best_arc = s_proj;
      for (std::size_t i = seg; i + 1 < reference.size() && s[i] <= s_proj + 1.5; ++i) {
        const Vec3 a = reference[i];
        const Vec3 ab = reference[i + 1] - a;
        const double len2 = ab.squaredNorm();
        const double w = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const double d = (a + ab * w - x).norm();
        if (d < best) {
          best = d;
          best_seg = i;
          best_arc = s[i] + w * (s[i + 1] - s[i]);
        }
      }
      seg = best_seg;
      s_proj = std::max(s_proj, best_arc);
    }
    const double remaining = std::max(total - s_proj, (end - x).norm());

    Vec3 v_des{};
    if (k <= steps) {
      const double speed = v.norm();
      const double lookahead = 0.3 + 0.6 * speed;
      const Vec3 target = pointAtArc(reference, s, s_proj + lookahead);
      const Vec3 to_target = target - x;
      const double turn =
          angleBetween(pointAtArc(reference, s, s_proj + 0.5) - pointAtArc(reference, s, s_proj),
                       pointAtArc(reference, s, s_proj + 1.0) -
                           pointAtArc(reference, s, s_proj + 0.5));
      const double v_turn = turn > 1e-6 ? std::sqrt(a_brake * 0.5 / turn) : limits.v_max;
      const double v_goal = std::sqrt(2.0 * a_brake * std::max(0.0, remaining - 0.02));
      const double v_time = a_brake * std::max(0.0, horizon - t);
      double v_ref = speed_scale * std::min({limits.v_max, v_goal, v_time, v_turn});
      v_ref = std::min(v_ref, remaining / dt);
      if (to_target.norm() > 1e-6) v_des = to_target * (v_ref / to_target.norm());
    }
    Vec3 dv = v_des - v;
    if (dv.norm() > a_step) dv = dv * (a_step / dv.norm());
    Vec3 v_next = v + dv;
    if (v_next.norm() > limits.v_max) v_next = v_next * (limits.v_max / v_next.norm());
    v = v_next;
    x = x + v * dt;
    traj.samples.push_back({t, x, v, 0.0});
    const bool at_rest = v.x == 0.0 && v.y == 0.0 && v.z == 0.0;
    if (at_rest && (k >= steps || remaining < 1e-3)) break;
  }
  if (const Vec3 last = traj.samples.back().velocity; last.norm() > 0.0) {
    throw std::logic_error("timeParameterize: trajectory did not come to rest");
  }
  return traj;
}

std::vector<Vec3> optimizePath(std::span<const Vec3> waypoints, const EsdfGrid& esdf,
                               const SmoothOptions& opts, bool* converged) {
  std::vector<Vec3> pts = resamplePolyline(waypoints, opts.resample_spacing);
  const std::size_t n = pts.size();
  if (n <= 2) {
    if (converged != nullptr) *converged = true;
    return pts;
  }
  const double max_step = 0.25 * esdf.geometry().resolution;
  std::vector<Vec3> c(n);
  std::vector<Vec3> next(pts);
  bool done = false;
  for (int iter = 0; iter < opts.max_iterations && !done; ++iter) {
    for (std::size_t j = 1; j + 1 < n; ++j) c[j] = pts[j - 1] - pts[j] * 2.0 + pts[j + 1];
    double largest = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      Vec3 g = c[i] * -4.0;
      if (i >= 2) g += c[i - 1] * 2.0;
      if (i + 2 < n) g += c[i + 1] * 2.0;
      g = g * opts.lambda_smooth;
      const double e = esdf.interpolate(pts[i]);
      if (e < opts.clearance_target) {
        g += esdf.gradient(pts[i]) * (-2.0 * opts.lambda_clearance * (opts.clearance_target - e));
      }
      const Vec3 step = clampNorm(g * opts.step_size, max_step);
      largest = std::max(largest, step.norm());
      next[i] = pts[i] - step;
      next[i].z = std::clamp(next[i].z, opts.z_min, opts.z_max);
    }
    pts.swap(next);
    next = pts;
    done = largest < opts.convergence_tol;
  }
  if (converged != nullptr) *converged = done;
  return pts;
}

SmoothResult smoothTrajectory(std::span<const Vec3> waypoints, const DynamicLimits& limits,
                              const EsdfGrid& esdf, const SmoothOptions& opts) {
  if (waypoints.empty()) throw std::invalid_argument("smoothTrajectory: no waypoints");
  // Only the stretch the horizon can reach (plus slack) shapes the trajectory.
  const double reach = std::max(4.0, 2.0 * limits.v_max * opts.horizon + 1.0);
  const std::vector<Vec3> prefix = truncatePolyline(waypoints, reach);
  const double margin = effectiveMargin(esdf, waypoints.front(), opts.safety_margin);

  SmoothResult out;
  auto attempt = [&](std::vector<Vec3> reference, double scale) {
    Trajectory t =
        timeParameterize(reference, limits, opts.initial_velocity, opts.dt, opts.horizon, scale);
    for (auto& s : t.samples) s.yaw = opts.initial_yaw;
    const bool ok = minClearance(t, esdf) >= margin;
    out.trajectory = std::move(t);
    out.reference = std::move(reference);
    out.clearance_ok = ok;
    return ok;
  };

  bool converged = false;
  std::vector<Vec3> optimized = optimizePath(prefix, esdf, opts, &converged);
  out.converged = converged;
  if (converged && attempt(std::move(optimized), 1.0)) {
    out.smoothed = true;
    return out;
  }
  const std::vector<Vec3> linear = resamplePolyline(prefix, opts.resample_spacing);
  if (attempt(linear, 1.0)) return out;
  attempt(linear, 0.5);
  return out;
}

// ---------------------------------------------------------------- yaw

namespace {

std::optional<double> bearingTo(const Vec3& from, const Vec3& goal) {
  const double dx = goal.x - from.x;
  const double dy = goal.y - from.y;
  if (std::hypot(dx, dy) < 1e-6) return std::nullopt;
  return std::atan2(dy, dx);
}

double stepToward(double yaw, double target, double max_step) {
  const double err = wrapAngle(target - yaw);
  return wrapAngle(yaw + std::clamp(err, -max_step, max_step));
}

}  // namespace

double yawPlan(Trajectory& traj, const Vec3& goal, double lambda_psi, const DynamicLimits& limits,
               double initial_yaw) {
  auto& s = traj.samples;
  if (s.empty()) return 0.0;
  s[0].yaw = wrapAngle(initial_yaw);
  for (std::size_t k = 1; k < s.size(); ++k) {
    const double dt = s[k].t - s[k - 1].t;
    const auto target = bearingTo(s[k].position, goal);
    s[k].yaw = target ? stepToward(s[k - 1].yaw, *target, limits.yaw_rate_max * dt) : s[k - 1].yaw;
  }
  return yawPenalty(traj, goal, lambda_psi);
}

double yawPenalty(const Trajectory& traj, const Vec3& goal, double lambda_psi) {
  double j = 0.0;
  for (const auto& s : traj.samples) {
    if (const auto target = bearingTo(s.position, goal)) {
      const double e = wrapAngle(s.yaw - *target);
      j += lambda_psi * e * e;
    }
  }
  return j;
}

Trajectory brakingTrajectory(const Vec3& position, const Vec3& velocity, double yaw,
                             std::optional<double> target_yaw, const DynamicLimits& limits,
                             double dt, double min_duration) {
  if (!(dt > 0.0)) throw std::invalid_argument("brakingTrajectory: dt must be > 0");
  Trajectory traj;
  Vec3 x = position;
  Vec3 v = clampNorm(velocity, limits.v_max);
  double psi = wrapAngle(yaw);
  traj.samples.push_back({0.0, x, v, psi});
  const double a_step = limits.a_max * dt;
  for (int k = 1; k < 100000; ++k) {
    const bool yaw_done = !target_yaw || std::abs(wrapAngle(*target_yaw - psi)) < 1e-9;
    const bool at_rest = v.x == 0.0 && v.y == 0.0 && v.z == 0.0;
    if (at_rest && yaw_done && traj.samples.back().t >= min_duration - 1e-9) break;
    v = v - clampNorm(v, a_step);
    x = x + v * dt;
    if (target_yaw) psi = stepToward(psi, *target_yaw, limits.yaw_rate_max * dt);
    traj.samples.push_back({k * dt, x, v, psi});
  }
  traj.horizon = traj.samples.back().t;
  return traj;
}

Trajectory straightLineTrajectory(const Vec3& position, const Vec3& velocity, double yaw,
                                  const Vec3& goal, const DynamicLimits& limits, double dt,
                                  double horizon, double lambda_psi) {
  const Vec3 reference[2] = {position, goal};
  Trajectory traj = timeParameterize(reference, limits, velocity, dt, horizon);
  yawPlan(traj, goal, lambda_psi, limits, yaw);
  return traj;
}

// ---------------------------------------------------------------- receding horizon

void PlannerConfig::validate() const {
  if (!(resolution > 0.0)) throw std::invalid_argument("planner: resolution must be > 0");
  for (double e : local_extent) {
    if (!(e >= resolution)) throw std::invalid_argument("planner: local extent too small");
  }
  if (!(truncation > 0.0)) throw std::invalid_argument("planner: truncation must be > 0");
  if (!(safety_margin >= 0.0)) throw std::invalid_argument("planner: safety_margin must be >= 0");
  if (!(search_inflation >= 0.0)) {
    throw std::invalid_argument("planner: search_inflation must be >= 0");
  }
  if (!(replan_period > 0.0)) throw std::invalid_argument("planner: replan_period must be > 0");
  if (!(horizon >= replan_period)) {
    throw std::invalid_argument("planner: horizon must cover the replan period");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("planner: dt must be > 0");
  if (stuck_after_failures < 1) throw std::invalid_argument("planner: N_fail must be >= 1");
  if (!(z_max > z_min)) throw std::invalid_argument("planner: z_max must exceed z_min");
  if (!(map_size.x > 0.0 && map_size.y > 0.0 && map_size.z > 0.0)) {
    throw std::invalid_argument("planner: map size must be positive");
  }
}

Vec3 effectivePlanningGoal(const NavigationGoal& goal, const PlannerConfig& config) {
  Vec3 p = goal.point;
  if (goal.unrefined) p = goal.origin + (p - goal.origin) * 0.5;
  p.z = std::clamp(p.z, config.z_min, config.z_max);
  return p;
}

LocalPlanner::LocalPlanner(PlannerConfig config, DynamicLimits limits, CameraIntrinsics camera,
                           Execution exec)
    : config_(config), limits_(limits), camera_(camera), exec_(exec) {
  config_.validate();
  limits_.validate();
  camera_.validate();
  map_geometry_.resolution = config_.resolution;
  map_geometry_.origin = config_.map_origin;
  map_geometry_.dims = {static_cast<int>(std::lround(config_.map_size.x / config_.resolution)),
                        static_cast<int>(std::lround(config_.map_size.y / config_.resolution)),
                        static_cast<int>(std::lround(config_.map_size.z / config_.resolution))};
  map_geometry_.validate();
  map_.assign(map_geometry_.cellCount(), CellKnowledge::Unknown);
}

CellKnowledge LocalPlanner::knowledge(const Cell& c) const {
  return map_geometry_.contains(c) ? map_[map_geometry_.index(c)] : CellKnowledge::Unknown;
}

void LocalPlanner::markOccupied(const Vec3& point) {
  const Cell c = map_geometry_.cellOf(point);
  if (map_geometry_.contains(c)) map_[map_geometry_.index(c)] = CellKnowledge::Occupied;
}

void LocalPlanner::integrateDepth(const DepthMap& depth, const Pose& pose) {
  if (depth.width() != camera_.width || depth.height() != camera_.height) {
    throw std::invalid_argument("integrateDepth: depth size does not match the camera");
  }
  const Vec3 eye = pose.position();
  const Mat3& r = pose.rotation();
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      if (!std::isfinite(d) || d <= 0.0) continue;
      // Direction with unit optical-axis component, so the ray parameter equals depth.
      const Vec3 dir = r * cameraToBody({(x - camera_.c_x) / camera_.f_x,
                                         (y - camera_.c_y) / camera_.f_y, 1.0});
      if (d * dir.norm() > config_.integration_range) continue;
      const double t_hit = d + 1e-4;
      const Cell hit = map_geometry_.cellOf(eye + dir * t_hit);
      traverseVoxels(map_geometry_, eye, dir, d - 1e-4, [&](const Cell& c, double) {
        if (c == hit) return false;
        auto& k = map_[map_geometry_.index(c)];
        if (k == CellKnowledge::Unknown) k = CellKnowledge::Free;
        return true;
      });
      if (map_geometry_.contains(hit)) map_[map_geometry_.index(hit)] = CellKnowledge::Occupied;
    }
  }
}

OccupancyGrid LocalPlanner::localGrid(const Vec3& center) const {
  GridGeometry geo;
  geo.resolution = config_.resolution;
  geo.dims = {static_cast<int>(std::lround(config_.local_extent[0] / config_.resolution)),
              static_cast<int>(std::lround(config_.local_extent[1] / config_.resolution)),
              static_cast<int>(std::lround(config_.local_extent[2] / config_.resolution))};
  const Cell c = map_geometry_.cellOf(center);
  const Cell lo{c.x - geo.dims[0] / 2, c.y - geo.dims[1] / 2, c.z - geo.dims[2] / 2};
  geo.origin = map_geometry_.origin +
               Vec3{lo.x * geo.resolution, lo.y * geo.resolution, lo.z * geo.resolution};
  OccupancyGrid grid(geo);
  auto out = grid.cells();
  // Clip each row to the map once, then copy.
  const int x0 = std::max(0, -lo.x);
  const int x1 = std::min(geo.dims[0], map_geometry_.dims[0] - lo.x);
  for (int z = 0; z < geo.dims[2]; ++z) {
    for (int y = 0; y < geo.dims[1]; ++y) {
      const Cell first{lo.x + x0, lo.y + y, lo.z + z};
      if (x0 >= x1 || !map_geometry_.contains(first)) continue;
      const CellKnowledge* src = map_.data() + map_geometry_.index(first);
      std::uint8_t* dst = out.data() + geo.index({x0, y, z});
      for (int x = 0; x < x1 - x0; ++x) dst[x] = src[x] == CellKnowledge::Occupied ? 1 : 0;
    }
  }
  return grid;
}

PlanResult LocalPlanner::replan(const UavState& state, const NavigationGoal& goal) {
  PlanResult out;
  out.goal = effectivePlanningGoal(goal, config_);
  last_esdf_ = buildEsdf(localGrid(state.position), config_.truncation, exec_);

  auto fail = [&](std::string why) {
    ++failures_;
    out.ok = false;
    out.stuck = failures_ >= config_.stuck_after_failures;
    out.failure = std::move(why);
    return out;
  };

  SearchOptions search;
  search.safety_margin = config_.safety_margin + config_.search_inflation;
  search.z_min = config_.z_min;
  search.z_max = config_.z_max;
  search.goal_tolerance = config_.goal_tolerance;
  out.path = searchPath(state.position, out.goal, last_esdf_, search);
  if (!out.path.ok) return fail(out.path.failure);

  std::vector<Vec3> waypoints = out.path.waypoints;
  waypoints.front() = state.position;
  if (waypoints.size() == 1) waypoints.push_back(state.position);

  SmoothOptions smooth;
  smooth.lambda_smooth = config_.lambda_smooth;
  smooth.lambda_clearance = config_.lambda_clearance;
  smooth.safety_margin = config_.safety_margin;
  smooth.clearance_target = config_.clearance_target;
  smooth.dt = config_.dt;
  smooth.horizon = config_.horizon;
  smooth.max_iterations = config_.max_smooth_iterations;
  smooth.z_min = config_.z_min;
  smooth.z_max = config_.z_max;
  smooth.initial_velocity = state.velocity;
  smooth.initial_yaw = state.yaw;
  SmoothResult sr = smoothTrajectory(waypoints, limits_, last_esdf_, smooth);
  if (!sr.clearance_ok) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "trajectory violates the safety margin (clearance %.3f < %.3f, %zu samples)",
                  minClearance(sr.trajectory, last_esdf_),
                  effectiveMargin(last_esdf_, state.position, config_.safety_margin),
                  sr.trajectory.samples.size());
    return fail(msg);
  }

  yawPlan(sr.trajectory, out.goal, config_.lambda_psi, limits_, state.yaw);
  out.trajectory = std::move(sr.trajectory);
  out.smoothed = sr.smoothed;
  out.ok = true;
  failures_ = 0;
  return out;
}

}  // namespace onfly
