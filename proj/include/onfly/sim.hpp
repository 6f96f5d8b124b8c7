#pragma once

// Closed-loop simulation: raycast rendering, the shared perception step, scripted
// oracles with ground-truth access, UAV execution, and the episode metrics
// (SR, OSR, CR, FT).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "onfly/agents.hpp"
#include "onfly/execution.hpp"
#include "onfly/hybrid_memory.hpp"
#include "onfly/planner.hpp"
#include "onfly/verifier.hpp"
#include "onfly/world.hpp"

namespace onfly {

struct RenderOutput {
  DepthMap depth;  // z-depth; kFarDepth beyond max_range
  Raster<std::uint16_t> labels;  // kLabelNone where nothing was hit
};

/// One DDA voxel raycast per pixel. Throws std::out_of_range when the camera is
/// outside the world.
RenderOutput render(const World& world, const Pose& pose, const CameraIntrinsics& k,
                    double max_range, Execution exec = Execution::Parallel);

/// Label feature plus per-pixel Gaussian noise (sigma_f), renormalized. Noise is a
/// pure function of (seed, frame, pixel, dimension).
FeatureMap extractFeatures(const Raster<std::uint16_t>& labels,
                           const std::vector<std::vector<double>>& table, double sigma_f,
                           std::uint64_t seed, std::int64_t frame,
                           Execution exec = Execution::Parallel);

/// Unit-norm mean of a feature raster.
std::vector<double> globalDescriptor(const FeatureMap& features);

struct ExecState {
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;
};

/// State after advancing `dt` along `traj` from `elapsed` seconds past its start.
/// Past the end the UAV holds the last position at rest. Throws std::logic_error when
/// the trajectory step violates the limits.
ExecState stepDynamics(const Trajectory& traj, double elapsed, double dt,
                       const DynamicLimits& limits);

struct SimConfig {
  double camera_fov_deg = 90.0;
  int camera_width = 160;
  int camera_height = 90;
  double max_range = 30.0;
  double uav_radius = 0.3;
  double feature_noise = 0.05;  // sigma_f
  double oracle_pixel_noise = 0.0;  // sigma, pixels
  /// Decision oracle looks this far along the ground-truth route for a visible waypoint.
  double guide_lookahead = 6.0;
  double lost_angle_deg = 120.0;
  int lost_checks = 3;
  /// Revisit subtasks: an older memory frame within this range of the goal counts as evidence.
  double revisit_evidence_radius = 4.0;
  int k_stable = 2;
  bool verifier_enabled = true;
  bool planner_enabled = true;
  bool dual_agent = true;
  MemoryPolicyKind memory_policy = MemoryPolicyKind::Hybrid;
  /// Time limit override in seconds; <= 0 uses the world's.
  double time_limit = 0.0;
  /// Record debug rasters of every verification.
  bool debug_rasters = false;
};

struct EpisodeConfig {
  SimConfig sim;
  DualRateConfig schedule;
  HybridMemoryConfig memory;
  MonitorCostModel monitor_cost;
  VerifierConfig verifier;
  PlannerConfig planner;
  DynamicLimits limits;
  Execution exec = Execution::Parallel;

  CameraIntrinsics camera() const;
  void validate() const;
};

struct ExecutedSample {
  double t = 0.0;
  Vec3 position;
  Vec3 velocity;
  double yaw = 0.0;
  /// Ground-truth ESDF value of the cell holding the sample.
  double clearance = 0.0;
};

struct EventRecord {
  std::int64_t t_us = 0;
  std::string type;
  nlohmann::json data;
};

struct DebugRaster {
  std::int64_t step = 0;
  VerificationTrace trace;
  int width = 0;
  int height = 0;
};

struct EpisodeResult {
  std::string world;
  std::uint64_t seed = 0;
  bool success = false;  // SR
  bool oracle_success = false;  // OSR
  bool collided = false;  // CR
  double flight_time = 0.0;  // FT, seconds
  std::string termination;  // "stop", "collision", "time_limit", "error"
  double final_distance = 0.0;
  double min_clearance = 0.0;
  std::size_t clearance_violations = 0;
  std::size_t subtasks_completed = 0;
  std::int64_t feature_extractions = 0;
  std::int64_t frames = 0;
  int decompose_calls = 0;
  std::int64_t decision_ticks = 0;
  std::int64_t monitor_ticks = 0;
  std::int64_t replans = 0;
  std::int64_t replan_failures = 0;
  double mean_prefix_reuse = 0.0;
  std::vector<std::int64_t> prefix_reuse;
  std::vector<ExecutedSample> trajectory;
  std::vector<EventRecord> events;
  std::vector<Tick> ticks;
  std::vector<MemorySnapshot> memory;
  std::vector<MonitoringRecord> monitoring;
  std::vector<DebugRaster> debug;
};

EpisodeResult runEpisode(const World& world, const EpisodeConfig& config, std::uint64_t seed);

struct BenchmarkRow {
  std::string name;
  EpisodeConfig config;
};

struct MetricSummary {
  double sr = 0.0;
  double osr = 0.0;
  double cr = 0.0;
  double ft = 0.0;
  double prefix_reuse = 0.0;
  std::size_t episodes = 0;
};

struct BenchmarkEpisode {
  std::string row;
  std::string world;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool success = false;
  bool oracle_success = false;
  bool collided = false;
  double flight_time = 0.0;
  double min_clearance = 0.0;
  std::size_t clearance_violations = 0;
  double mean_prefix_reuse = 0.0;
  std::string termination;
  std::string error;
};

struct BenchmarkTable {
  std::vector<std::string> rows;
  std::vector<std::string> worlds;
  std::vector<BenchmarkEpisode> episodes;  // row-major: row, world, repeat
  std::vector<MetricSummary> aggregate;  // per row
  /// [row][world]
  std::vector<std::vector<MetricSummary>> per_world;
};

/// Seed of (repeat, world) is derived from base_seed; identical across rows so
/// ablations see the same noise. An episode that throws is recorded as a failure.
BenchmarkTable runBenchmark(const std::vector<const World*>& worlds,
                            const std::vector<BenchmarkRow>& rows, int repeats,
                            std::uint64_t base_seed, Execution exec = Execution::Parallel);

std::uint64_t episodeSeed(std::uint64_t base_seed, std::size_t world_index, int repeat);

}  // namespace onfly
