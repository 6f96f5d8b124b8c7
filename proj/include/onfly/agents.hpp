#pragma once

// Decision / monitoring agents, task manager, and the dual-rate virtual-time loop.
//
// The VLM is abstracted behind DecisionOracle and MonitoringOracle. A real client
// would receive the subtask text, the ordered image handles and the optional history
// pixel, and answer with a pixel or a status token.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "onfly/geometry.hpp"
#include "onfly/hybrid_memory.hpp"
#include "onfly/raster.hpp"
#include "onfly/verifier.hpp"

namespace onfly {

/// One captured frame. Rasters are shared, immutable snapshots.
struct Observation {
  ObservationRef ref = -1;
  std::shared_ptr<const FeatureMap> features;
  std::shared_ptr<const DepthMap> depth;
  /// Unit-norm global descriptor of the frame, used by the memory for de-duplication.
  std::vector<double> descriptor;
  Pose pose;
  std::int64_t step = 0;
  double odo_distance = 0.0;
  std::int64_t time_us = 0;
};

/// Pose and timing of every captured frame, addressable by ObservationRef.
class FrameArchive {
 public:
  struct Entry {
    ObservationRef ref = -1;
    Pose pose;
    std::int64_t time_us = 0;
    std::int64_t step = 0;
    double odo_distance = 0.0;
  };

  /// Refs must be appended densely from 0.
  void add(const Observation& obs);
  const Entry& at(ObservationRef ref) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

enum class TaskStatus { Continue, Stop, Lost };
std::string toString(TaskStatus status);

struct DecisionRequest {
  const std::string* subtask = nullptr;
  std::size_t subtask_index = 0;
  const Observation* observation = nullptr;
  std::optional<Pixel> history;
};

class DecisionOracle {
 public:
  virtual ~DecisionOracle() = default;
  /// May return an out-of-frame pixel; decisionStep clamps it.
  virtual Pixel decide(const DecisionRequest& request) = 0;
};

struct MonitoringRequest {
  const std::string* subtask = nullptr;
  std::size_t subtask_index = 0;
  const MonitoringMemory* memory = nullptr;
  const FrameArchive* archive = nullptr;
  std::int64_t time_us = 0;
};

class MonitoringOracle {
 public:
  virtual ~MonitoringOracle() = default;
  virtual TaskStatus classify(const MonitoringRequest& request) = 0;
};

struct DecisionOutcome {
  CandidateGoal candidate;
  std::optional<Pixel> history;
};

/// Projects the previous goal as the history pixel, queries the oracle, and packages
/// its pixel with the frame's rasters and pose. Out-of-frame pixels are clamped.
DecisionOutcome decisionStep(DecisionOracle& oracle, const std::string& subtask,
                             std::size_t subtask_index, const Observation& obs,
                             const std::optional<Vec3>& previous_goal,
                             const CameraIntrinsics& k);

struct MonitoringRecord {
  std::int64_t time_us = 0;
  std::size_t subtask_index = 0;
  TaskStatus status = TaskStatus::Continue;
  std::vector<ObservationRef> slots;
};

/// Returns the oracle verdict unchanged and appends an audit record.
TaskStatus monitoringStep(MonitoringOracle& oracle, const MonitoringRequest& request,
                          std::vector<MonitoringRecord>& audit);

struct AgentState {
  Vec3 position;
  /// Position at the most recent CONTINUE verdict.
  std::optional<Vec3> last_normal;
  bool final_subtask = false;
};

struct Directive {
  enum class Kind {
    None,
    ForwardStop,  // STOP on an intermediate subtask; the task manager counts it
    TerminateEpisode,  // STOP on the final subtask; completes the episode once stable
    Recover,  // halt, then yaw toward the last normal position
    Halt,  // LOST with no last normal position
  };
  Kind kind = Kind::None;
  std::optional<double> yaw_target;
};
std::string toString(Directive::Kind kind);

Directive handleStatus(TaskStatus status, const AgentState& state);

struct TaskQueue {
  std::vector<std::string> subtasks;
  std::size_t current_index = 0;
  int stop_streak = 0;

  bool complete() const { return current_index >= subtasks.size(); }
  const std::string& current() const;
};

/// STOP extends the streak, anything else resets it; a streak of k_stable advances.
TaskQueue advanceTask(TaskQueue queue, TaskStatus status, int k_stable);

using Decomposer = std::function<std::vector<std::string>(const std::string&)>;

/// Splits on a delimiter and trims whitespace; empty pieces are dropped.
Decomposer delimiterDecomposer(char delimiter = ';');

/// One-time decomposition; an empty result yields the whole instruction as one subtask.
TaskQueue decompose(const std::string& instruction, const Decomposer& decomposer);

// ---------------------------------------------------------------- dual-rate loop

struct DualRateConfig {
  std::int64_t physics_period_us = 100'000;
  std::int64_t decision_period_us = 500'000;
  std::int64_t monitoring_period_us = 2'000'000;
  std::int64_t duration_us = 70'000'000;
  /// false: the monitoring call blocks the decision loop for its cost.
  bool dual = true;

  void validate() const;
};

enum class TickKind { Physics, MonitorResult, MonitorStart, MonitorSkipped, Decision };
std::string toString(TickKind kind);

struct Tick {
  std::int64_t time_us = 0;
  TickKind kind = TickKind::Physics;
  /// Decision ticks: the time the tick was due. Monitor results: the start time.
  std::int64_t scheduled_us = 0;
};

/// Callbacks the loop drives; the episode runner implements them.
class DualRateHooks {
 public:
  virtual ~DualRateHooks() = default;
  virtual void physics(std::int64_t t_us) = 0;
  virtual void decision(std::int64_t t_us) = 0;
  /// Starts a monitoring call; returns its simulated cost in microseconds.
  virtual std::int64_t monitorBegin(std::int64_t t_us) = 0;
  virtual void monitorEnd(std::int64_t started_us, std::int64_t t_us) = 0;
  virtual bool finished() const = 0;
};

/// Fires ticks on [0, duration). At equal timestamps: physics, monitor result,
/// monitor start, decision. In dual mode a monitoring call in flight never moves a
/// decision tick; ticks arriving while a previous call is still running are skipped.
/// Without dual mode, decision ticks falling inside a monitoring call run when it ends.
std::vector<Tick> runDualRate(const DualRateConfig& config, DualRateHooks& hooks);

/// Simulated monitoring latency: base + per_token * tokens not served from the prefix cache.
struct MonitorCostModel {
  double base_s = 0.1;
  double per_token_s = 0.0005;
  std::int64_t tokens_per_slot = 256;

  std::int64_t costUs(std::int64_t total_tokens, std::int64_t reused_tokens) const;
};

}  // namespace onfly
