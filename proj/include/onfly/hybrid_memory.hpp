#pragma once

// Monitoring memory: first frame + prefix-stable keyframes + latest frame.
//
// Frames are referenced by ObservationRef (the sim frame index); images themselves
// never live here. A keyframe carries a unit-norm global descriptor used for
// cosine-distance de-duplication, and the odometry distance used for segment
// assignment.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onfly/geometry.hpp"

namespace onfly {

using ObservationRef = std::int64_t;
using KeyframeId = std::int64_t;

struct Keyframe {
  KeyframeId id = -1;
  ObservationRef observation = -1;
  std::vector<double> feature;
  Pose pose;
  double odo_distance = 0.0;
  std::int64_t created_step = 0;
  std::int64_t updated_step = 0;
};

/// One frame of the pose/feature stream that feeds the memory.
struct TrackSample {
  Pose pose;
  double odo_distance = 0.0;
  ObservationRef observation = -1;
  std::int64_t step = 0;
  std::vector<double> feature;
};

struct CandidateThresholds {
  double translation = 1.0;
  double rotation = kPi / 6.0;
};

struct HybridMemoryConfig {
  int segments = 4;  // S
  double epsilon = 0.15;
  int neighbors = 8;  // L
  CandidateThresholds thresholds;
};

/// 1 - cos(a, b). Inputs need not be normalized.
double cosineDistance(std::span<const double> a, std::span<const double> b);

/// Scales v to unit length; a zero vector is returned unchanged.
std::vector<double> normalized(std::vector<double> v);

/// Emits a candidate whenever accumulated translation or accumulated |yaw change|
/// since the previous emission (starting from last_keyframe_pose) reaches its threshold.
std::vector<Keyframe> proposeCandidates(std::span<const TrackSample> track,
                                        const Pose& last_keyframe_pose,
                                        const CandidateThresholds& thresholds);

/// Greedy left-to-right filter: drops a candidate closer than epsilon to any kept one.
std::vector<Keyframe> dedup(std::span<const Keyframe> candidates, double epsilon);

class KeyframePool {
 public:
  KeyframePool(double epsilon, int neighbors);

  /// For each fresh keyframe, compares against the `neighbors` geometrically nearest
  /// entries; a near-duplicate refreshes that entry's updated_step, otherwise the
  /// keyframe is appended with the next id.
  void merge(std::span<const Keyframe> fresh, std::int64_t current_step);

  const std::vector<Keyframe>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Keyframe* find(KeyframeId id) const;
  double epsilon() const { return epsilon_; }
  int neighbors() const { return neighbors_; }

  /// Indices of the L nearest entries to `position`, nearest first, ties by id.
  std::vector<std::size_t> nearestEntries(const Vec3& position) const;

 private:
  std::vector<Keyframe> entries_;
  double epsilon_;
  int neighbors_;
  KeyframeId next_id_ = 0;
};

/// Segment index of an odometry distance over [0, total] split into S parts.
int segmentOf(double odo_distance, double total_distance, int segments);

/// Per-segment views into the pool, in pool order.
using SegmentAssignment = std::vector<std::vector<const Keyframe*>>;
SegmentAssignment assignSegments(const KeyframePool& pool, double total_distance, int segments);

/// Winner per segment, std::nullopt for empty segments.
using SegmentWinners = std::vector<std::optional<KeyframeId>>;
SegmentWinners selectWinners(const SegmentWinners& previous, const SegmentAssignment& segments,
                             double total_distance, int segments_count);

struct KeyframeList {
  std::vector<KeyframeId> slots;
};

KeyframeList serialize(const KeyframeList& previous, const SegmentWinners& winners,
                       const KeyframePool& pool, int segments);

/// [first, keyframe slots..., latest]. Always segments + 2 slots.
struct MonitoringMemory {
  std::vector<ObservationRef> slots;

  ObservationRef first() const { return slots.front(); }
  ObservationRef latest() const { return slots.back(); }
  std::span<const ObservationRef> keyframes() const {
    return std::span<const ObservationRef>(slots).subspan(1, slots.size() - 2);
  }
};

/// Missing keyframe slots (empty pool) are filled with `first`.
MonitoringMemory buildMemory(ObservationRef first, const KeyframeList& list,
                             const KeyframePool& pool, ObservationRef latest, int segments);

/// tokens_per_slot times the common prefix length of the two slot sequences,
/// the trailing latest-frame slot of each excluded.
std::int64_t prefixReuseTokens(const MonitoringMemory& prev, const MonitoringMemory& curr,
                               std::int64_t tokens_per_slot);

/// Inspection record of one memory update.
struct MemorySnapshot {
  std::int64_t step = 0;
  double total_distance = 0.0;
  std::vector<KeyframeId> pool_ids;
  std::vector<std::vector<KeyframeId>> segments;
  SegmentWinners winners;
  std::vector<KeyframeId> list;
  MonitoringMemory memory;
};

enum class MemoryPolicyKind { Hybrid, Sliding, TimeSampling };

std::string toString(MemoryPolicyKind kind);
MemoryPolicyKind memoryPolicyFromString(const std::string& name);

/// Builds the monitoring memory once per monitoring tick from the frames captured
/// since the previous tick. Single writer.
class MemoryPolicy {
 public:
  virtual ~MemoryPolicy() = default;
  virtual MemoryPolicyKind kind() const = 0;
  /// `frames` is non-empty and ordered; the last one is the latest observation.
  virtual const MonitoringMemory& update(std::span<const TrackSample> frames) = 0;
  virtual const MemorySnapshot& snapshot() const = 0;
};

class HybridMemory final : public MemoryPolicy {
 public:
  explicit HybridMemory(HybridMemoryConfig config);

  MemoryPolicyKind kind() const override { return MemoryPolicyKind::Hybrid; }
  const MonitoringMemory& update(std::span<const TrackSample> frames) override;
  const MemorySnapshot& snapshot() const override { return snapshot_; }

  const KeyframePool& pool() const { return pool_; }
  const KeyframeList& list() const { return list_; }
  const SegmentWinners& winners() const { return winners_; }

 private:
  HybridMemoryConfig config_;
  KeyframePool pool_;
  KeyframeList list_;
  SegmentWinners winners_;
  std::optional<ObservationRef> first_;
  Pose last_candidate_pose_;
  double total_distance_ = 0.0;
  MemorySnapshot snapshot_;
};

/// Latest S+1 emitted keyframes (padded by repeating the newest) plus the latest frame.
class SlidingWindowMemory final : public MemoryPolicy {
 public:
  explicit SlidingWindowMemory(HybridMemoryConfig config);

  MemoryPolicyKind kind() const override { return MemoryPolicyKind::Sliding; }
  const MonitoringMemory& update(std::span<const TrackSample> frames) override;
  const MemorySnapshot& snapshot() const override { return snapshot_; }

 private:
  HybridMemoryConfig config_;
  std::vector<Keyframe> window_;
  bool seeded_ = false;
  Pose last_candidate_pose_;
  MemorySnapshot snapshot_;
};

/// S+1 frames sampled uniformly in time over the whole history, plus the latest frame.
class TimeSamplingMemory final : public MemoryPolicy {
 public:
  explicit TimeSamplingMemory(HybridMemoryConfig config);

  MemoryPolicyKind kind() const override { return MemoryPolicyKind::TimeSampling; }
  const MonitoringMemory& update(std::span<const TrackSample> frames) override;
  const MemorySnapshot& snapshot() const override { return snapshot_; }

 private:
  HybridMemoryConfig config_;
  std::vector<ObservationRef> history_;
  MemorySnapshot snapshot_;
};

std::unique_ptr<MemoryPolicy> makeMemoryPolicy(MemoryPolicyKind kind,
                                               const HybridMemoryConfig& config);

/// Forward flight with a wandering heading; one batch of frames per monitoring step.
struct SyntheticStreamConfig {
  int steps = 200;
  int frames_per_step = 4;
  double step_length = 0.6;  // meters travelled per monitoring step
  double heading_wander = 0.05;  // rad, per-frame heading noise
  /// Scene descriptors are anchored every this many meters and blended in between.
  double feature_scale = 2.0;
  int feature_dim = 16;
  std::uint64_t seed = 1;
};

/// Frame refs are dense from 0; the first batch holds only the initial frame.
std::vector<std::vector<TrackSample>> syntheticStream(const SyntheticStreamConfig& config);

struct PolicyReuse {
  MemoryPolicyKind kind = MemoryPolicyKind::Hybrid;
  /// Reuse of each step against the previous one; the first step is 0.
  std::vector<std::int64_t> series;
  double mean = 0.0;  // over steps 1..n-1
};

struct MemoryComparison {
  std::vector<PolicyReuse> policies;  // hybrid, sliding, time-sampling
  double hybrid_over_sliding = 0.0;  // +inf when sliding reuse is 0 and hybrid's is not
};

MemoryComparison compareMemoryPolicies(const std::vector<std::vector<TrackSample>>& stream,
                                       const HybridMemoryConfig& config,
                                       std::int64_t tokens_per_slot);

}  // namespace onfly
