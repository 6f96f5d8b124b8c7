#pragma once

// ESDF-based receding-horizon local planner.
//
// Pipeline per replan: integrate the latest depth frame into a persistent occupancy
// map, cut a UAV-centered window, build its truncated Euclidean distance field, run
// 26-connected A* over cells with enough clearance, smooth the path, time-parameterize
// it under velocity/acceleration limits starting from the current velocity, and fill
// yaw by rate-limited tracking of the goal bearing.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onfly/execution.hpp"
#include "onfly/geometry.hpp"
#include "onfly/raster.hpp"
#include "onfly/verifier.hpp"

namespace onfly {

struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;
  constexpr bool operator==(const Cell&) const = default;
};

/// Axis-aligned voxel lattice; cell (i, j, k) spans origin + [i, i+1) * resolution.
struct GridGeometry {
  double resolution = 0.2;
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin;

  std::size_t cellCount() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  bool contains(const Cell& c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims[0] && c.y < dims[1] && c.z < dims[2];
  }
  std::size_t index(const Cell& c) const {
    return (static_cast<std::size_t>(c.z) * static_cast<std::size_t>(dims[1]) +
            static_cast<std::size_t>(c.y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(c.x);
  }
  Cell cellAt(std::size_t index) const;
  /// Cell containing a point (may lie outside the grid).
  Cell cellOf(const Vec3& p) const;
  Vec3 center(const Cell& c) const;
  Cell clamp(const Cell& c) const;
  void validate() const;
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(GridGeometry geometry);

  const GridGeometry& geometry() const { return geometry_; }
  bool occupied(const Cell& c) const { return cells_[geometry_.index(c)] != 0; }
  void setOccupied(const Cell& c, bool value) { cells_[geometry_.index(c)] = value ? 1 : 0; }
  std::span<const std::uint8_t> cells() const { return cells_; }
  std::span<std::uint8_t> cells() { return cells_; }
  std::size_t occupiedCount() const;

 private:
  GridGeometry geometry_;
  std::vector<std::uint8_t> cells_;
};

class EsdfGrid {
 public:
  EsdfGrid() = default;
  EsdfGrid(GridGeometry geometry, double truncation, std::vector<double> values);

  const GridGeometry& geometry() const { return geometry_; }
  double truncation() const { return truncation_; }
  double at(const Cell& c) const { return values_[geometry_.index(c)]; }
  /// Value of the cell containing p; 0 outside the grid.
  double atPoint(const Vec3& p) const;
  /// Trilinear interpolation between cell centers, clamped at the border.
  double interpolate(const Vec3& p) const;
  Vec3 gradient(const Vec3& p) const;
  std::span<const double> values() const { return values_; }

 private:
  GridGeometry geometry_;
  double truncation_ = 0.0;
  std::vector<double> values_;
};

/// Exact truncated Euclidean distance (meters) from every cell center to the nearest
/// occupied cell center, by separable passes over squared distances capped just past the
/// truncation radius.
EsdfGrid buildEsdf(const OccupancyGrid& grid, double truncation,
                   Execution exec = Execution::Parallel);

struct SearchOptions {
  double safety_margin = 0.4;
  double z_min = -1e9;
  double z_max = 1e9;
  double goal_tolerance = 1.0;
};

struct PathResult {
  bool ok = false;
  std::vector<Vec3> waypoints;  // cell centers, start cell first
  std::vector<Cell> cells;
  double cost = 0.0;
  /// Clearance threshold used; below safety_margin only when the start cell violates it.
  double effective_margin = 0.0;
  std::string failure;
};

/// True when A* may enter the cell under the given clearance threshold.
bool searchFeasible(const EsdfGrid& esdf, const Cell& c, const SearchOptions& opts,
                    double margin);

/// 26-connected A* with the Euclidean heuristic. An infeasible goal cell is replaced by
/// the nearest reachable feasible cell within goal_tolerance. When the start cell is
/// itself below the margin, the threshold drops to its clearance so the UAV can back out.
PathResult searchPath(const Vec3& start, const Vec3& goal, const EsdfGrid& esdf,
                      const SearchOptions& opts);

struct DynamicLimits {
  double v_max = 0.6;
  double a_max = 0.6;
  double yaw_rate_max = 0.4;
  void validate() const;
};

struct TrajectorySample {
  double t = 0.0;
  Vec3 position;
  /// Velocity over (t_prev, t]; position = previous position + velocity * dt.
  Vec3 velocity;
  double yaw = 0.0;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  double horizon = 0.0;

  bool empty() const { return samples.empty(); }
  double duration() const { return samples.empty() ? 0.0 : samples.back().t - samples.front().t; }
  /// Linear interpolation in time; clamps to the end samples (zero velocity past the end).
  TrajectorySample sampleAt(double t) const;
};

struct DynamicsReport {
  bool ok = true;
  double max_speed = 0.0;
  double max_acceleration = 0.0;
  double max_yaw_rate = 0.0;
  bool timestamps_increasing = true;
};

/// Checks the velocity field, finite-difference acceleration and yaw rate.
DynamicsReport checkDynamics(const Trajectory& traj, const DynamicLimits& limits,
                             double speed_tol = 1e-6, double accel_tol = 1e-3,
                             double yaw_rate_tol = 1e-3);

/// Smallest ESDF cell value over the samples.
double minClearance(const Trajectory& traj, const EsdfGrid& esdf);

/// Margin a trajectory from `start` must keep: safety_margin, or less when the start
/// cell already violates it.
double effectiveMargin(const EsdfGrid& esdf, const Vec3& start, double safety_margin);

struct SmoothOptions {
  double lambda_smooth = 1.0;
  double lambda_clearance = 10.0;
  double safety_margin = 0.4;
  /// Clearance the smoother pushes toward; kept above the hard margin.
  double clearance_target = 0.7;
  double dt = 0.1;
  double horizon = 3.0;
  int max_iterations = 300;
  double step_size = 0.05;
  double convergence_tol = 1e-4;
  double resample_spacing = 0.25;
  double z_min = -1e9;
  double z_max = 1e9;
  Vec3 initial_velocity;
  /// Initial yaw copied into every sample; yawPlan overwrites it.
  double initial_yaw = 0.0;
};

struct SmoothResult {
  Trajectory trajectory;
  bool smoothed = false;  // false: piecewise-linear fallback
  bool converged = false;
  bool clearance_ok = false;
  std::vector<Vec3> reference;  // path the time parameterization tracked
};

/// Gradient-descent smoothing of the resampled path followed by time parameterization.
/// Falls back to the piecewise-linear path on non-convergence or a clearance violation.
SmoothResult smoothTrajectory(std::span<const Vec3> waypoints, const DynamicLimits& limits,
                              const EsdfGrid& esdf, const SmoothOptions& opts);

/// Only the optimization stage; returns resampled points. `converged` reports whether
/// the largest update fell below the tolerance within the iteration budget.
std::vector<Vec3> optimizePath(std::span<const Vec3> waypoints, const EsdfGrid& esdf,
                               const SmoothOptions& opts, bool* converged);

/// Tracks the reference polyline with a discrete double integrator starting at
/// (reference.front(), initial_velocity). Speed and acceleration limits hold by
/// construction; the trajectory comes to rest at the path end or by the horizon.
Trajectory timeParameterize(std::span<const Vec3> reference, const DynamicLimits& limits,
                            const Vec3& initial_velocity, double dt, double horizon,
                            double speed_scale = 1.0);

/// Uniform arc-length resampling, endpoints kept.
std::vector<Vec3> resamplePolyline(std::span<const Vec3> points, double spacing);

/// Rate-limited tracking of the goal bearing; returns the total yaw penalty.
double yawPlan(Trajectory& traj, const Vec3& goal, double lambda_psi, const DynamicLimits& limits,
               double initial_yaw);

/// Sum over samples of lambda * wrap(yaw - bearing-to-goal)^2, skipping samples on the goal.
double yawPenalty(const Trajectory& traj, const Vec3& goal, double lambda_psi);

/// Decelerates along the current velocity to rest, then turns toward target_yaw (if set).
Trajectory brakingTrajectory(const Vec3& position, const Vec3& velocity, double yaw,
                             std::optional<double> target_yaw, const DynamicLimits& limits,
                             double dt, double min_duration);

/// Straight-line execution toward a point with no obstacle handling (planner ablation).
Trajectory straightLineTrajectory(const Vec3& position, const Vec3& velocity, double yaw,
                                  const Vec3& goal, const DynamicLimits& limits, double dt,
                                  double horizon, double lambda_psi);

struct PlannerConfig {
  double resolution = 0.2;
  std::array<double, 3> local_extent{20.0, 20.0, 6.0};
  double truncation = 2.0;
  double safety_margin = 0.4;
  /// Extra clearance the path search demands over safety_margin; absorbs tracking error.
  double search_inflation = 0.2;
  double clearance_target = 0.7;
  double replan_period = 0.5;
  double horizon = 3.0;
  double dt = 0.1;
  double lambda_psi = 1.0;
  double lambda_smooth = 1.0;
  double lambda_clearance = 10.0;
  int max_smooth_iterations = 300;
  int stuck_after_failures = 6;  // N_fail
  double z_min = 0.6;
  double z_max = 2.6;
  double goal_tolerance = 1.0;
  /// Depth beyond this range marks no cells.
  double integration_range = 12.0;
  /// Extent of the persistent mapping volume (origin, size in meters).
  Vec3 map_origin{-40.0, -40.0, -1.0};
  Vec3 map_size{80.0, 80.0, 6.0};

  void validate() const;
};

struct UavState {
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;
};

enum class CellKnowledge : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

struct PlanResult {
  bool ok = false;
  bool stuck = false;  // failures exceeded N_fail
  Trajectory trajectory;
  PathResult path;
  bool smoothed = false;
  Vec3 goal;  // goal actually planned toward
  std::string failure;
};

/// Receding-horizon planner. Single owner; the executor reads completed Trajectory values.
class LocalPlanner {
 public:
  LocalPlanner(PlannerConfig config, DynamicLimits limits, CameraIntrinsics camera,
               Execution exec = Execution::Parallel);

  /// Raycasts every pixel: the hit cell becomes occupied (sticky) and unknown cells
  /// along the ray become free.
  void integrateDepth(const DepthMap& depth, const Pose& pose);

  /// Marks a cell occupied directly (tests, scripted maps).
  void markOccupied(const Vec3& point);

  PlanResult replan(const UavState& state, const NavigationGoal& goal);

  /// Window of the persistent map centered on `center`, aligned to its cells.
  OccupancyGrid localGrid(const Vec3& center) const;
  const EsdfGrid& lastEsdf() const { return last_esdf_; }
  const GridGeometry& mapGeometry() const { return map_geometry_; }
  CellKnowledge knowledge(const Cell& c) const;
  int consecutiveFailures() const { return failures_; }
  const PlannerConfig& config() const { return config_; }
  const DynamicLimits& limits() const { return limits_; }

 private:
  PlannerConfig config_;
  DynamicLimits limits_;
  CameraIntrinsics camera_;
  Execution exec_;
  GridGeometry map_geometry_;
  std::vector<CellKnowledge> map_;
  EsdfGrid last_esdf_;
  int failures_ = 0;
};

/// Goal the planner steers toward: an unrefined verifier goal is pulled halfway back
/// toward its camera origin; the altitude is clamped to the flight band.
Vec3 effectivePlanningGoal(const NavigationGoal& goal, const PlannerConfig& config);

}  // namespace onfly
