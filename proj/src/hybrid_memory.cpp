#include "onfly/hybrid_memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "onfly/rng.hpp"

namespace onfly {

namespace {

// Absorbs accumulated-sum rounding (ten 0.1 m steps must count as 1.0 m).
constexpr double kThresholdSlack = 1e-9;

bool contains(const std::vector<KeyframeId>& ids, KeyframeId id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

}  // namespace

double cosineDistance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosineDistance: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 1.0;
  return 1.0 - dot / std::sqrt(na * nb);
}

std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return v;
}

std::vector<Keyframe> proposeCandidates(std::span<const TrackSample> track,
                                        const Pose& last_keyframe_pose,
                                        const CandidateThresholds& thresholds) {
  if (!(thresholds.translation > 0.0) || !(thresholds.rotation > 0.0)) {
    throw std::invalid_argument("proposeCandidates: thresholds must be positive");
  }
  std::vector<Keyframe> out;
  Vec3 prev_position = last_keyframe_pose.position();
  double prev_yaw = last_keyframe_pose.yaw();
  double acc_translation = 0.0;
  double acc_rotation = 0.0;
  for (const TrackSample& s : track) {
    acc_translation += distance(prev_position, s.pose.position());
    acc_rotation += std::abs(wrapAngle(s.pose.yaw() - prev_yaw));
    prev_position = s.pose.position();
    prev_yaw = s.pose.yaw();
    if (acc_translation >= thresholds.translation - kThresholdSlack ||
        acc_rotation >= thresholds.rotation - kThresholdSlack) {
      Keyframe k;
      k.observation = s.observation;
      k.feature = s.feature;
      k.pose = s.pose;
      k.odo_distance = s.odo_distance;
      k.created_step = s.step;
      k.updated_step = s.step;
      out.push_back(std::move(k));
      acc_translation = 0.0;
      acc_rotation = 0.0;
    }
  }
  return out;
}

std::vector<Keyframe> dedup(std::span<const Keyframe> candidates, double epsilon) {
  std::vector<Keyframe> kept;
  for (const Keyframe& c : candidates) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const Keyframe& k) {
      return cosineDistance(c.feature, k.feature) < epsilon;
    });
    if (!duplicate) kept.push_back(c);
  }
  return kept;
}

KeyframePool::KeyframePool(double epsilon, int neighbors)
    : epsilon_(epsilon), neighbors_(neighbors) {
  if (neighbors < 1) throw std::invalid_argument("KeyframePool: neighbor count must be >= 1");
}

const Keyframe* KeyframePool::find(KeyframeId id) const {
  // Ids are assigned in insertion order, so the pool is sorted by id.
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const Keyframe& k, KeyframeId v) { return k.id < v; });
  return (it != entries_.end() && it->id == id) ? &*it : nullptr;
}

std::vector<std::size_t> KeyframePool::nearestEntries(const Vec3& position) const {
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    ranked.emplace_back((entries_[i].pose.position() - position).squaredNorm(), i);
  }
  const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(neighbors_));
  // Index order equals id order, so pair comparison breaks distance ties by id.
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end());
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ranked[i].second;
  return out;
}

void KeyframePool::merge(std::span<const Keyframe> fresh, std::int64_t current_step) {
  for (const Keyframe& k : fresh) {
    std::optional<std::size_t> best;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t idx : nearestEntries(k.pose.position())) {
      const double d = cosineDistance(k.feature, entries_[idx].feature);
      if (d < best_distance) {
        best_distance = d;
        best = idx;
      }
    }
    if (best && best_distance < epsilon_) {
      entries_[*best].updated_step = current_step;
      continue;
    }
    Keyframe added = k;
    added.id = next_id_++;
    added.updated_step = current_step;
    entries_.push_back(std::move(added));
  }
}

int segmentOf(double odo_distance, double total_distance, int segments) {
  if (segments < 1) throw std::invalid_argument("segmentOf: need at least one segment");
  if (!(total_distance > 0.0)) return 0;
  const double raw = std::floor(odo_distance * segments / total_distance);
  return static_cast<int>(std::clamp(raw, 0.0, static_cast<double>(segments - 1)));
}

SegmentAssignment assignSegments(const KeyframePool& pool, double total_distance, int segments) {
  if (total_distance < 0.0) throw std::invalid_argument("assignSegments: negative distance");
  SegmentAssignment out(static_cast<std::size_t>(segments));
  for (const Keyframe& k : pool.entries()) {
    out[static_cast<std::size_t>(segmentOf(k.odo_distance, total_distance, segments))].push_back(&k);
  }
  return out;
}

SegmentWinners selectWinners(const SegmentWinners& previous, const SegmentAssignment& segments,
                             double total_distance, int segments_count) {
  SegmentWinners winners(static_cast<std::size_t>(segments_count));
  const double width = segments_count > 0 ? total_distance / segments_count : 0.0;
  for (int s = 0; s < segments_count; ++s) {
    const auto& members = segments[static_cast<std::size_t>(s)];
    if (members.empty()) continue;
    const auto prev = static_cast<std::size_t>(s) < previous.size()
                          ? previous[static_cast<std::size_t>(s)]
                          : std::nullopt;
    if (prev && std::any_of(members.begin(), members.end(),
                            [&](const Keyframe* k) { return k->id == *prev; })) {
      winners[static_cast<std::size_t>(s)] = prev;
      continue;
    }
    const double center = (s + 0.5) * width;
    const Keyframe* best = nullptr;
    double best_offset = 0.0;
    for (const Keyframe* k : members) {
      const double offset = std::abs(k->odo_distance - center);
      const bool better =
          best == nullptr || offset < best_offset ||
          (offset == best_offset && (k->updated_step > best->updated_step ||
                                     (k->updated_step == best->updated_step && k->id > best->id)));
      if (better) {
        best = k;
        best_offset = offset;
      }
    }
    winners[static_cast<std::size_t>(s)] = best->id;
  }
  return winners;
}

KeyframeList serialize(const KeyframeList& previous, const SegmentWinners& winners,
                       const KeyframePool& pool, int segments) {
  const auto size = static_cast<std::size_t>(segments);
  std::vector<KeyframeId> current_winners;
  for (const auto& w : winners) {
    if (w) current_winners.push_back(*w);
  }

  KeyframeList out;
  // (i) longest valid prefix of the previous list.
  for (KeyframeId id : previous.slots) {
    if (out.slots.size() >= size || !contains(current_winners, id) || contains(out.slots, id) ||
        pool.find(id) == nullptr) {
      break;
    }
    out.slots.push_back(id);
  }
  // (ii) current winners in segment order.
  for (KeyframeId id : current_winners) {
    if (out.slots.size() >= size) break;
    if (!contains(out.slots, id)) out.slots.push_back(id);
  }
  // (iii) unused, most recently updated pool entries.
  if (out.slots.size() < size) {
    std::vector<const Keyframe*> recent;
    for (const Keyframe& k : pool.entries()) recent.push_back(&k);
    std::sort(recent.begin(), recent.end(), [](const Keyframe* a, const Keyframe* b) {
      return a->updated_step != b->updated_step ? a->updated_step > b->updated_step : a->id > b->id;
    });
    for (const Keyframe* k : recent) {
      if (out.slots.size() >= size) break;
      if (!contains(out.slots, k->id)) out.slots.push_back(k->id);
    }
  }
  // Warmup: pool smaller than S, repeat the newest entry.
  if (!pool.empty()) {
    const Keyframe* newest = &pool.entries().front();
    for (const Keyframe& k : pool.entries()) {
      if (k.created_step > newest->created_step ||
          (k.created_step == newest->created_step && k.id > newest->id)) {
        newest = &k;
      }
    }
    while (out.slots.size() < size) out.slots.push_back(newest->id);
  }
  // (iv) chronological order.
  std::stable_sort(out.slots.begin(), out.slots.end(), [&](KeyframeId a, KeyframeId b) {
    const Keyframe* ka = pool.find(a);
    const Keyframe* kb = pool.find(b);
    return ka->created_step != kb->created_step ? ka->created_step < kb->created_step
                                                : ka->id < kb->id;
  });
  return out;
}

MonitoringMemory buildMemory(ObservationRef first, const KeyframeList& list,
                             const KeyframePool& pool, ObservationRef latest, int segments) {
  MonitoringMemory m;
  m.slots.reserve(static_cast<std::size_t>(segments) + 2);
  m.slots.push_back(first);
  for (KeyframeId id : list.slots) {
    if (m.slots.size() > static_cast<std::size_t>(segments)) break;
    const Keyframe* k = pool.find(id);
    if (k == nullptr) throw std::invalid_argument("buildMemory: keyframe id not in pool");
    m.slots.push_back(k->observation);
  }
  while (m.slots.size() < static_cast<std::size_t>(segments) + 1) m.slots.push_back(first);
  m.slots.push_back(latest);
  return m;
}

std::int64_t prefixReuseTokens(const MonitoringMemory& prev, const MonitoringMemory& curr,
                               std::int64_t tokens_per_slot) {
  if (tokens_per_slot <= 0) throw std::invalid_argument("prefixReuseTokens: tokens_per_slot <= 0");
  if (prev.slots.empty() || curr.slots.empty()) return 0;
  const std::size_t n = std::min(prev.slots.size(), curr.slots.size()) - 1;
  std::size_t lcp = 0;
  while (lcp < n && prev.slots[lcp] == curr.slots[lcp]) ++lcp;
  return static_cast<std::int64_t>(lcp) * tokens_per_slot;
}

std::string toString(MemoryPolicyKind kind) {
  switch (kind) {
    case MemoryPolicyKind::Hybrid:
      return "hybrid";
    case MemoryPolicyKind::Sliding:
      return "sliding";
    case MemoryPolicyKind::TimeSampling:
      return "time-sampling";
  }
  return "hybrid";
}

MemoryPolicyKind memoryPolicyFromString(const std::string& name) {
  if (name == "hybrid") return MemoryPolicyKind::Hybrid;
  if (name == "sliding") return MemoryPolicyKind::Sliding;
  if (name == "time-sampling") return MemoryPolicyKind::TimeSampling;
  throw std::invalid_argument("unknown memory policy '" + name + "'");
}

// ---------------------------------------------------------------------------

namespace {

Keyframe keyframeFromSample(const TrackSample& s) {
  Keyframe k;
  k.observation = s.observation;
  k.feature = s.feature;
  k.pose = s.pose;
  k.odo_distance = s.odo_distance;
  k.created_step = s.step;
  k.updated_step = s.step;
  return k;
}

}  // namespace

HybridMemory::HybridMemory(HybridMemoryConfig config)
    : config_(config), pool_(config.epsilon, config.neighbors) {
  if (config_.segments < 1) throw std::invalid_argument("HybridMemory: segments must be >= 1");
}

const MonitoringMemory& HybridMemory::update(std::span<const TrackSample> frames) {
  if (frames.empty()) throw std::invalid_argument("HybridMemory::update: no frames");
  const std::int64_t step = frames.back().step;
  std::span<const TrackSample> track = frames;
  if (!first_) {
    // The initial frame seeds the pool so the list is never empty.
    first_ = frames.front().observation;
    const Keyframe seed = keyframeFromSample(frames.front());
    pool_.merge(std::span<const Keyframe>(&seed, 1), frames.front().step);
    last_candidate_pose_ = frames.front().pose;
    track = track.subspan(1);
  }
  const std::vector<Keyframe> candidates =
      proposeCandidates(track, last_candidate_pose_, config_.thresholds);
  if (!candidates.empty()) last_candidate_pose_ = candidates.back().pose;
  pool_.merge(dedup(candidates, config_.epsilon), step);

  for (const TrackSample& s : frames) total_distance_ = std::max(total_distance_, s.odo_distance);
  const SegmentAssignment segments = assignSegments(pool_, total_distance_, config_.segments);
  winners_ = selectWinners(winners_, segments, total_distance_, config_.segments);
  list_ = serialize(list_, winners_, pool_, config_.segments);

  snapshot_.step = step;
  snapshot_.total_distance = total_distance_;
  snapshot_.pool_ids.clear();
  for (const Keyframe& k : pool_.entries()) snapshot_.pool_ids.push_back(k.id);
  snapshot_.segments.assign(segments.size(), {});
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (const Keyframe* k : segments[s]) snapshot_.segments[s].push_back(k->id);
  }
  snapshot_.winners = winners_;
  snapshot_.list = list_.slots;
  snapshot_.memory =
      buildMemory(*first_, list_, pool_, frames.back().observation, config_.segments);
  return snapshot_.memory;
}

SlidingWindowMemory::SlidingWindowMemory(HybridMemoryConfig config) : config_(config) {}

const MonitoringMemory& SlidingWindowMemory::update(std::span<const TrackSample> frames) {
  if (frames.empty()) throw std::invalid_argument("SlidingWindowMemory::update: no frames");
  const auto capacity = static_cast<std::size_t>(config_.segments) + 1;
  std::span<const TrackSample> track = frames;
  if (!seeded_) {
    seeded_ = true;
    window_.push_back(keyframeFromSample(frames.front()));
    last_candidate_pose_ = frames.front().pose;
    track = track.subspan(1);
  }
  const std::vector<Keyframe> candidates =
      proposeCandidates(track, last_candidate_pose_, config_.thresholds);
  if (!candidates.empty()) last_candidate_pose_ = candidates.back().pose;
  for (Keyframe& k : dedup(candidates, config_.epsilon)) {
    window_.push_back(std::move(k));
    if (window_.size() > capacity) window_.erase(window_.begin());
  }

  MonitoringMemory m;
  for (const Keyframe& k : window_) m.slots.push_back(k.observation);
  while (m.slots.size() < capacity) m.slots.push_back(window_.back().observation);
  m.slots.push_back(frames.back().observation);

  snapshot_ = MemorySnapshot{};
  snapshot_.step = frames.back().step;
  snapshot_.total_distance = frames.back().odo_distance;
  snapshot_.memory = std::move(m);
  return snapshot_.memory;
}

TimeSamplingMemory::TimeSamplingMemory(HybridMemoryConfig config) : config_(config) {}

const MonitoringMemory& TimeSamplingMemory::update(std::span<const TrackSample> frames) {
  if (frames.empty()) throw std::invalid_argument("TimeSamplingMemory::update: no frames");
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) history_.push_back(frames[i].observation);
  const ObservationRef latest = frames.back().observation;

  const auto samples = static_cast<std::size_t>(config_.segments) + 1;
  MonitoringMemory m;
  if (history_.empty()) {
    m.slots.assign(samples, latest);
  } else {
    const std::size_t n = history_.size();
    for (std::size_t j = 0; j < samples; ++j) {
      const double pos = samples > 1 ? static_cast<double>(j) * static_cast<double>(n - 1) /
                                           static_cast<double>(samples - 1)
                                     : 0.0;
      m.slots.push_back(history_[static_cast<std::size_t>(std::llround(pos))]);
    }
  }
  m.slots.push_back(latest);
  history_.push_back(latest);

  snapshot_ = MemorySnapshot{};
  snapshot_.step = frames.back().step;
  snapshot_.total_distance = frames.back().odo_distance;
  snapshot_.memory = std::move(m);
  return snapshot_.memory;
}

std::unique_ptr<MemoryPolicy> makeMemoryPolicy(MemoryPolicyKind kind,
                                               const HybridMemoryConfig& config) {
  switch (kind) {
    case MemoryPolicyKind::Hybrid:
      return std::make_unique<HybridMemory>(config);
    case MemoryPolicyKind::Sliding:
      return std::make_unique<SlidingWindowMemory>(config);
    case MemoryPolicyKind::TimeSampling:
      return std::make_unique<TimeSamplingMemory>(config);
  }
  return std::make_unique<HybridMemory>(config);
}


std::vector<std::vector<TrackSample>> syntheticStream(const SyntheticStreamConfig& config) {
  if (config.steps < 1 || config.frames_per_step < 1 || config.step_length < 0.0 ||
      config.feature_scale <= 0.0 || config.feature_dim < 1) {
    throw std::invalid_argument("syntheticStream: invalid configuration");
  }
  auto anchor = [&](std::int64_t k) {
    Rng rng(config.seed, static_cast<std::uint64_t>(k));
    std::vector<double> v(static_cast<std::size_t>(config.feature_dim));
    for (double& x : v) x = rng.normal();
    return normalized(std::move(v));
  };
  auto featureAt = [&](double d) {
    const double u = d / config.feature_scale;
    const auto k = static_cast<std::int64_t>(std::floor(u));
    const double t = u - static_cast<double>(k);
    std::vector<double> a = anchor(k);
    const std::vector<double> b = anchor(k + 1);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - t) * a[i] + t * b[i];
    return normalized(std::move(a));
  };

  Rng heading_rng(config.seed, 0x6865616400000000ULL);
  Vec3 position{0.0, 0.0, 1.5};
  double yaw = 0.0;
  double distance = 0.0;
  ObservationRef ref = 0;
  auto sample = [&]() {
    TrackSample s;
    s.pose = Pose(position, yaw);
    s.odo_distance = distance;
    s.observation = ref;
    s.step = ref;
    s.feature = featureAt(distance);
    ++ref;
    return s;
  };

  std::vector<std::vector<TrackSample>> stream;
  stream.push_back({sample()});
  const double ds = config.step_length / config.frames_per_step;
  for (int step = 1; step < config.steps; ++step) {
    std::vector<TrackSample> batch;
    for (int f = 0; f < config.frames_per_step; ++f) {
      yaw = wrapAngle(yaw + config.heading_wander * heading_rng.normal());
      position.x += ds * std::cos(yaw);
      position.y += ds * std::sin(yaw);
      distance += ds;
      batch.push_back(sample());
    }
    stream.push_back(std::move(batch));
  }
  return stream;
}

MemoryComparison compareMemoryPolicies(const std::vector<std::vector<TrackSample>>& stream,
                                       const HybridMemoryConfig& config,
                                       std::int64_t tokens_per_slot) {
  MemoryComparison out;
  for (MemoryPolicyKind kind :
       {MemoryPolicyKind::Hybrid, MemoryPolicyKind::Sliding, MemoryPolicyKind::TimeSampling}) {
    auto policy = makeMemoryPolicy(kind, config);
    PolicyReuse r;
    r.kind = kind;
    std::optional<MonitoringMemory> prev;
    for (const auto& batch : stream) {
      const MonitoringMemory& m = policy->update(batch);
      r.series.push_back(prev ? prefixReuseTokens(*prev, m, tokens_per_slot) : 0);
      prev = m;
    }
    if (r.series.size() > 1) {
      double sum = 0.0;
      for (std::size_t i = 1; i < r.series.size(); ++i) sum += static_cast<double>(r.series[i]);
      r.mean = sum / static_cast<double>(r.series.size() - 1);
    }
    out.policies.push_back(std::move(r));
  }
  const double h = out.policies[0].mean;
  const double s = out.policies[1].mean;
  out.hybrid_over_sliding = s > 0.0 ? h / s : (h > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return out;
}

}  // namespace onfly
