#include "onfly/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "onfly/rng.hpp"
#include "onfly/voxel_traversal.hpp"

namespace onfly {

using nlohmann::json;

// ---------------------------------------------------------------- perception

RenderOutput render(const World& world, const Pose& pose, const CameraIntrinsics& k,
                    double max_range, Execution exec) {
  if (!world.insideBounds(pose.position())) {
    throw std::out_of_range("render: camera outside the world");
  }
  RenderOutput out{DepthMap(k.width, k.height, kFarDepth),
                   Raster<std::uint16_t>(k.width, k.height, kLabelNone)};
  const GridGeometry& geo = world.geometry();
  const OccupancyGrid& occ = world.occupancy();
  const Vec3 eye = pose.position();
  const Mat3& r = pose.rotation();
  auto row = [&](int y) {
    for (int x = 0; x < k.width; ++x) {
      // Unit optical-axis component: the ray parameter is the z-depth.
      const Vec3 dir = r * cameraToBody({(x - k.c_x) / k.f_x, (y - k.c_y) / k.f_y, 1.0});
      const double t_max = max_range / dir.norm();
      traverseVoxels(geo, eye, dir, t_max, [&](const Cell& c, double t) {
        if (!occ.occupied(c)) return true;
        if (t <= t_max) {
          out.depth(x, y) = t;
          out.labels(x, y) = world.label(c);
        }
        return false;
      });
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < k.height; ++y) row(y);
  } else {
    for (int y = 0; y < k.height; ++y) row(y);
  }
  return out;
}

FeatureMap extractFeatures(const Raster<std::uint16_t>& labels,
                           const std::vector<std::vector<double>>& table, double sigma_f,
                           std::uint64_t seed, std::int64_t frame, Execution exec) {
  if (table.empty()) throw std::invalid_argument("extractFeatures: empty feature table");
  const int dim = static_cast<int>(table.front().size());
  FeatureMap out(labels.width(), labels.height(), dim);
  const std::uint64_t frame_seed = hashCombine(seed, static_cast<std::uint64_t>(frame));
  std::vector<double> scratch;
  auto row = [&](int y, std::vector<double>& v) {
    v.resize(static_cast<std::size_t>(dim));
    for (int x = 0; x < labels.width(); ++x) {
      const auto& base = table.at(labels(x, y));
      if (sigma_f > 0.0) {
        Rng rng(frame_seed, static_cast<std::uint64_t>(y) * labels.width() + x);
        for (int d = 0; d < dim; d += 2) {
          double a, b;
          rng.normalPair(a, b);
          v[d] = base[d] + sigma_f * a;
          if (d + 1 < dim) v[d + 1] = base[d + 1] + sigma_f * b;
        }
      } else {
        std::copy(base.begin(), base.end(), v.begin());
      }
      double n = 0.0;
      for (double c : v) n += c * c;
      n = std::sqrt(n);
      auto dst = out.at(x, y);
      for (int d = 0; d < dim; ++d) dst[d] = static_cast<float>(n > 0.0 ? v[d] / n : v[d]);
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel
    {
      std::vector<double> v;
#pragma omp for schedule(static)
      for (int y = 0; y < labels.height(); ++y) row(y, v);
    }
  } else {
    for (int y = 0; y < labels.height(); ++y) row(y, scratch);
  }
  return out;
}

std::vector<double> globalDescriptor(const FeatureMap& features) {
  std::vector<double> mean(static_cast<std::size_t>(features.dim()), 0.0);
  for (int y = 0; y < features.height(); ++y) {
    for (int x = 0; x < features.width(); ++x) {
      const auto f = features.at(x, y);
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += f[d];
    }
  }
  return normalized(std::move(mean));
}

// ---------------------------------------------------------------- execution

ExecState stepDynamics(const Trajectory& traj, double elapsed, double dt,
                       const DynamicLimits& limits) {
  if (!(dt > 0.0)) throw std::invalid_argument("stepDynamics: dt must be > 0");
  if (traj.empty()) throw std::invalid_argument("stepDynamics: empty trajectory");
  const double t = elapsed + dt;
  const auto& s = traj.samples;
  // Snap to a stored sample when the step lands on one, so execution reproduces it.
  const auto it = std::lower_bound(s.begin(), s.end(), t - 1e-9,
                                   [](const TrajectorySample& a, double v) { return a.t < v; });
  TrajectorySample next;
  TrajectorySample prev = traj.sampleAt(elapsed);
  if (it != s.end() && std::abs(it->t - t) <= 1e-9) {
    next = *it;
    if (it != s.begin() && std::abs((it - 1)->t - elapsed) <= 1e-9) prev = *(it - 1);
  } else {
    next = traj.sampleAt(t);
  }
  if (t > s.back().t) next.velocity = {};
  if (next.velocity.norm() > limits.v_max + 1e-6) {
    throw std::logic_error("stepDynamics: speed limit exceeded");
  }
  if (elapsed >= s.front().t && t <= s.back().t + 1e-9 &&
      (next.velocity - prev.velocity).norm() / dt > limits.a_max + 1e-3) {
    throw std::logic_error("stepDynamics: acceleration limit exceeded");
  }
  return {next.position, next.velocity, next.yaw};
}

// ---------------------------------------------------------------- config

CameraIntrinsics EpisodeConfig::camera() const {
  return CameraIntrinsics::fromFov(sim.camera_width, sim.camera_height,
                                   sim.camera_fov_deg * kPi / 180.0);
}

void EpisodeConfig::validate() const {
  camera().validate();
  schedule.validate();
  verifier.validate();
  planner.validate();
  limits.validate();
  if (memory.segments < 1) throw std::invalid_argument("memory: segments must be >= 1");
  if (memory.neighbors < 1) throw std::invalid_argument("memory: neighbors must be >= 1");
  if (!(sim.max_range > 0.0)) throw std::invalid_argument("sim: max_range must be > 0");
  if (!(sim.uav_radius >= 0.0)) throw std::invalid_argument("sim: uav_radius must be >= 0");
  if (!(sim.feature_noise >= 0.0) || !(sim.oracle_pixel_noise >= 0.0)) {
    throw std::invalid_argument("sim: noise levels must be >= 0");
  }
  if (sim.k_stable < 1) throw std::invalid_argument("sim: k_stable must be >= 1");
  if (sim.lost_checks < 1) throw std::invalid_argument("sim: lost_checks must be >= 1");
  if (monitor_cost.tokens_per_slot <= 0) {
    throw std::invalid_argument("monitor_cost: tokens_per_slot must be > 0");
  }
  if (std::llround(planner.dt * 1e6) != schedule.physics_period_us) {
    throw std::invalid_argument("planner.dt must equal the physics period");
  }
}

// ---------------------------------------------------------------- scripted oracles

namespace {

json vecJson(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// Frame data only the simulator sees: ground-truth labels of the latest render.
struct GroundTruthFrame {
  ObservationRef ref = -1;
  std::shared_ptr<const Raster<std::uint16_t>> labels;
};

Vec3 rayDirection(const CameraIntrinsics& k, const Pose& pose, Pixel p) {
  return pose.rotation() * cameraToBody({(p.x - k.c_x) / k.f_x, (p.y - k.c_y) / k.f_y, 1.0});
}

Pixel edgePixel(const Vec3& target, const Pose& pose, const CameraIntrinsics& k) {
  const Vec3 rel = target - pose.position();
  const double b = wrapAngle(std::atan2(rel.y, rel.x) - pose.yaw());
  // Positive yaw offset is to the left, i.e. toward column 0.
  return {b > 0.0 ? 0 : k.width - 1, static_cast<int>(std::lround(k.c_y))};
}

class ScriptedDecision final : public DecisionOracle {
 public:
  ScriptedDecision(const World& world, const CameraIntrinsics& k, const SimConfig& cfg,
                   std::uint64_t seed)
      : world_(world), k_(k), cfg_(cfg), seed_(seed) {}

  Pixel decide(const DecisionRequest& request) override {
    const Observation& obs = *request.observation;
    Pixel p = aim(request.subtask_index, obs);
    if (cfg_.oracle_pixel_noise > 0.0) {
      Rng rng(seed_, 0x5eed0000ULL + static_cast<std::uint64_t>(calls_));
      p.x += static_cast<int>(std::lround(cfg_.oracle_pixel_noise * rng.normal()));
      p.y += static_cast<int>(std::lround(cfg_.oracle_pixel_noise * rng.normal()));
    }
    ++calls_;
    return p;
  }

 private:
  bool hitNear(const Observation& obs, Pixel p, const auto& accept) const {
    const double d = (*obs.depth)[p];
    if (!std::isfinite(d)) return false;
    return accept(obs.pose.position() + rayDirection(k_, obs.pose, p) * d);
  }

  Pixel aim(std::size_t index, const Observation& obs) const {
    const SubtaskSpec& st = world_.spec().subtasks.at(index);
    const double pad = world_.geometry().resolution;
    if (st.landmark >= 0) {
      const Box& box = world_.spec().boxes[static_cast<std::size_t>(st.landmark)];
      const Vec3 c = box.center();
      const Vec3 face{c.x, c.y, std::clamp(world_.flightAltitude(), box.min.z, box.max.z)};
      for (const Vec3& target : {face, c}) {
        if (auto p = projectToPixel(target, obs.pose, k_)) {
          if (hitNear(obs, *p, [&](const Vec3& h) { return box.contains(h, pad); })) return *p;
        }
      }
    }
    const std::vector<Vec3> path =
        world_.guidePath(index, obs.pose.position(), cfg_.guide_lookahead);
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      const Vec3 floor_point{it->x, it->y, 0.0};
      if (auto p = projectToPixel(floor_point, obs.pose, k_)) {
        if (hitNear(obs, *p, [&](const Vec3& h) {
              return std::hypot(h.x - floor_point.x, h.y - floor_point.y) <= 2.0 * pad;
            })) {
          return *p;
        }
      }
    }
    // Nothing on the route is visible: steer toward a point shortly ahead on it.
    Vec3 ahead = st.goal;
    if (path.size() > 1) ahead = path[std::min<std::size_t>(path.size() - 1, 8)];
    ahead.z = obs.pose.position().z;
    if (auto p = projectToPixel(ahead, obs.pose, k_)) return *p;
    return edgePixel(ahead, obs.pose, k_);
  }

  const World& world_;
  CameraIntrinsics k_;
  SimConfig cfg_;
  std::uint64_t seed_;
  std::int64_t calls_ = 0;
};

class ScriptedMonitor final : public MonitoringOracle {
 public:
  ScriptedMonitor(const World& world, const SimConfig& cfg, const std::int64_t* subtask_start)
      : world_(world), cfg_(cfg), subtask_start_(subtask_start) {}

  TaskStatus classify(const MonitoringRequest& request) override {
    const SubtaskSpec& st = world_.spec().subtasks.at(request.subtask_index);
    const auto& latest = request.archive->at(request.memory->latest());
    const Vec3 pos = latest.pose.position();
    if (distance(pos, st.goal) <= st.radius && (!st.revisit || hasEvidence(request, st))) {
      lost_streak_ = 0;
      return TaskStatus::Stop;
    }
    const auto path = world_.guidePath(request.subtask_index, pos, 1.5);
    if (path.size() >= 2) {
      const double guide = std::atan2(path.back().y - pos.y, path.back().x - pos.x);
      const double divergence = std::abs(wrapAngle(latest.pose.yaw() - guide));
      lost_streak_ = divergence > cfg_.lost_angle_deg * kPi / 180.0 ? lost_streak_ + 1 : 0;
      if (lost_streak_ >= cfg_.lost_checks) {
        lost_streak_ = 0;
        return TaskStatus::Lost;
      }
    } else {
      lost_streak_ = 0;
    }
    return TaskStatus::Continue;
  }

 private:
  // An observation from before this subtask began that shows the goal's surroundings.
  bool hasEvidence(const MonitoringRequest& request, const SubtaskSpec& st) const {
    const auto slots = request.memory->slots;
    for (std::size_t i = 0; i + 1 < slots.size(); ++i) {
      const auto& e = request.archive->at(slots[i]);
      if (e.time_us < *subtask_start_ &&
          distance(e.pose.position(), st.goal) <= cfg_.revisit_evidence_radius) {
        return true;
      }
    }
    return false;
  }

  const World& world_;
  SimConfig cfg_;
  const std::int64_t* subtask_start_;
  int lost_streak_ = 0;
};

// ---------------------------------------------------------------- episode

class Episode final : public DualRateHooks {
 public:
  Episode(const World& world, const EpisodeConfig& cfg, std::uint64_t seed)
      : world_(world),
        cfg_(cfg),
        seed_(seed),
        k_(cfg.camera()),
        decision_oracle_(world, k_, cfg.sim, seed),
        monitor_oracle_(world, cfg.sim, &subtask_start_us_),
        memory_(makeMemoryPolicy(cfg.sim.memory_policy, cfg.memory)) {
    const WorldSpec& spec = world.spec();
    ++result_.decompose_calls;
    queue_ = decompose(spec.instruction, delimiterDecomposer(spec.delimiter));
    if (queue_.subtasks.size() != spec.subtasks.size()) {
      throw std::invalid_argument("world '" + spec.name +
                                  "': instruction pieces do not match the subtasks");
    }
    if (cfg.sim.planner_enabled) {
      PlannerConfig pc = cfg.planner;
      pc.map_origin = spec.origin - Vec3{10.0, 10.0, 0.8};
      pc.map_size = spec.size + Vec3{20.0, 20.0, 1.6};
      planner_.emplace(pc, cfg.limits, k_, cfg.exec);
    }
    state_.position = spec.start_position;
    state_.yaw = wrapAngle(spec.start_yaw);
    trajectory_ = holdTrajectory();
    result_.world = spec.name;
    result_.seed = seed;
    result_.min_clearance = std::numeric_limits<double>::infinity();
  }

  EpisodeResult run() {
    DualRateConfig schedule = cfg_.schedule;
    schedule.dual = cfg_.sim.dual_agent;
    const double limit = cfg_.sim.time_limit > 0.0 ? cfg_.sim.time_limit : world_.spec().time_limit;
    schedule.duration_us = std::llround(limit * 1e6);
    result_.ticks = runDualRate(schedule, *this);
    if (!finished_) {
      result_.termination = "time_limit";
      result_.flight_time = limit;
      event(schedule.duration_us, "terminate", {{"reason", "time_limit"}});
    }
    const Vec3 goal = world_.spec().subtasks.back().goal;
    result_.final_distance = distance(state_.position, goal);
    result_.success = result_.termination == "stop" && !result_.collided &&
                      result_.final_distance <= world_.spec().goal_radius;
    result_.subtasks_completed = queue_.current_index;
    result_.frames = static_cast<std::int64_t>(archive_.size());
    if (!result_.prefix_reuse.empty()) {
      double sum = 0.0;
      for (auto r : result_.prefix_reuse) sum += static_cast<double>(r);
      result_.mean_prefix_reuse = sum / static_cast<double>(result_.prefix_reuse.size());
    }
    if (result_.success && !result_.oracle_success) {
      throw std::logic_error("episode: success without oracle success");
    }
    return std::move(result_);
  }

  void physics(std::int64_t t) override {
    const double dt = cfg_.planner.dt;
    if (t > 0) {
      const double elapsed = static_cast<double>(t - traj_start_us_) * 1e-6 - dt;
      const ExecState next = stepDynamics(trajectory_, elapsed, dt, cfg_.limits);
      odo_distance_ += distance(next.position, state_.position);
      state_ = next;
    }
    const double clearance = world_.esdf().atPoint(state_.position);
    result_.trajectory.push_back(
        {static_cast<double>(t) * 1e-6, state_.position, state_.velocity, state_.yaw, clearance});
    result_.min_clearance = std::min(result_.min_clearance, clearance);
    if (clearance < cfg_.planner.safety_margin - 1e-6) ++result_.clearance_violations;
    const SubtaskSpec& last = world_.spec().subtasks.back();
    if (distance(state_.position, last.goal) <= world_.spec().goal_radius) {
      result_.oracle_success = true;
    }
    if (checkCollision(world_, state_.position, cfg_.sim.uav_radius)) {
      result_.collided = true;
      finish(t, "collision");
    }
  }

  void decision(std::int64_t t) override {
    ++result_.decision_ticks;
    if (queue_.complete()) return;
    if (halted_ || t < recovering_until_us_) {
      event(t, "decision_paused", {{"halted", halted_}});
      return;
    }
    const Observation& obs = frameAt(t);
    if (planner_) planner_->integrateDepth(*obs.depth, obs.pose);
    const DecisionOutcome d = decisionStep(decision_oracle_, queue_.current(),
                                           queue_.current_index, obs, last_goal_, k_);
    NavigationGoal goal;
    if (cfg_.sim.verifier_enabled) {
      goal = verify(d.candidate, cfg_.verifier, k_);
      if (cfg_.sim.debug_rasters) {
        result_.debug.push_back({obs.step, traceVerification(d.candidate, cfg_.verifier, k_),
                                 k_.width, k_.height});
      }
    } else {
      goal = liftUnverified(d.candidate, cfg_.verifier, k_);
    }
    last_goal_ = goal.point;

    json data{{"subtask", queue_.current_index},
              {"frame", obs.ref},
              {"pixel", {d.candidate.pixel.x, d.candidate.pixel.y}},
              {"clamped", d.candidate.clamped},
              {"refined", {goal.refined_pixel.x, goal.refined_pixel.y}},
              {"gated_range", goal.gated_range},
              {"unrefined", goal.unrefined},
              {"skipped", goal.skipped},
              {"goal", vecJson(goal.point)}};
    if (d.history) data["history"] = {d.history->x, d.history->y};

    if (planner_) {
      ++result_.replans;
      PlanResult plan = planner_->replan({state_.position, state_.velocity, state_.yaw}, goal);
      data["plan_ok"] = plan.ok;
      data["smoothed"] = plan.smoothed;
      if (plan.ok) {
        setTrajectory(t, std::move(plan.trajectory));
      } else {
        ++result_.replan_failures;
        data["plan_failure"] = plan.failure;
        setTrajectory(t, brakingTrajectory(state_.position, state_.velocity, state_.yaw,
                                           std::nullopt, cfg_.limits, cfg_.planner.dt, 0.0));
        if (plan.stuck) event(t, "planner_stuck", {{"failures", planner_->consecutiveFailures()}});
      }
    } else {
      Vec3 target = goal.point;
      target.z = std::clamp(target.z, cfg_.planner.z_min, cfg_.planner.z_max);
      setTrajectory(t, straightLineTrajectory(state_.position, state_.velocity, state_.yaw, target,
                                              cfg_.limits, cfg_.planner.dt, cfg_.planner.horizon,
                                              cfg_.planner.lambda_psi));
    }
    event(t, "decision", std::move(data));
  }

  std::int64_t monitorBegin(std::int64_t t) override {
    ++result_.monitor_ticks;
    if (queue_.complete()) return 0;
    const Observation& obs = frameAt(t);
    if (track_.empty()) track_.push_back(trackSample(obs));
    const MonitoringMemory& memory = memory_->update(track_);
    track_.clear();
    result_.memory.push_back(memory_->snapshot());

    const std::int64_t slots = static_cast<std::int64_t>(memory.slots.size());
    const std::int64_t tps = cfg_.monitor_cost.tokens_per_slot;
    const std::int64_t reused = previous_memory_ ? prefixReuseTokens(*previous_memory_, memory, tps) : 0;
    previous_memory_ = memory;
    result_.prefix_reuse.push_back(reused);
    const std::int64_t cost = cfg_.monitor_cost.costUs(slots * tps, reused);

    MonitoringRequest request{&queue_.current(), queue_.current_index, &memory, &archive_, t};
    const TaskStatus status = monitoringStep(monitor_oracle_, request, result_.monitoring);
    pending_ = PendingVerdict{status, queue_.current_index, obs.pose.position()};
    event(t, "monitor_start",
          {{"subtask", queue_.current_index},
           {"slots", memory.slots},
           {"reused_tokens", reused},
           {"cost_us", cost},
           {"status", toString(status)}});
    return cost;
  }

  void monitorEnd(std::int64_t started, std::int64_t t) override {
    if (!pending_ || finished_) return;
    const PendingVerdict v = *pending_;
    pending_.reset();
    if (v.subtask != queue_.current_index) {
      event(t, "monitor_stale", {{"started_us", started}});
      return;
    }
    const Directive directive = handleStatus(
        v.status, {state_.position, last_normal_, queue_.current_index + 1 == queue_.subtasks.size()});
    json data{{"started_us", started},
              {"status", toString(v.status)},
              {"directive", toString(directive.kind)}};
    const std::size_t before = queue_.current_index;
    queue_ = advanceTask(queue_, v.status, cfg_.sim.k_stable);
    data["stop_streak"] = queue_.stop_streak;
    switch (v.status) {
      case TaskStatus::Continue:
        last_normal_ = v.position;
        halted_ = false;
        break;
      case TaskStatus::Stop:
        if (queue_.current_index != before) {
          halted_ = false;
          last_goal_.reset();
          subtask_start_us_ = t;
          data["advanced_to"] = queue_.current_index;
          if (queue_.complete()) {
            event(t, "monitor_result", std::move(data));
            finish(t, "stop");
            return;
          }
        } else {
          halted_ = true;
          brake(t, std::nullopt);
        }
        break;
      case TaskStatus::Lost:
        halted_ = false;
        brake(t, directive.yaw_target);
        recovering_until_us_ =
            traj_start_us_ + std::llround(trajectory_.samples.back().t * 1e6);
        if (directive.yaw_target) data["yaw_target"] = *directive.yaw_target;
        break;
    }
    event(t, "monitor_result", std::move(data));
  }

  bool finished() const override { return finished_; }

 private:
  struct PendingVerdict {
    TaskStatus status;
    std::size_t subtask;
    Vec3 position;
  };

  Trajectory holdTrajectory() const {
    Trajectory t;
    t.samples.push_back({0.0, state_.position, {}, state_.yaw});
    return t;
  }

  void setTrajectory(std::int64_t t, Trajectory traj) {
    trajectory_ = std::move(traj);
    traj_start_us_ = t;
  }

  void brake(std::int64_t t, std::optional<double> yaw_target) {
    setTrajectory(t, brakingTrajectory(state_.position, state_.velocity, state_.yaw, yaw_target,
                                       cfg_.limits, cfg_.planner.dt, 0.0));
  }

  void finish(std::int64_t t, const std::string& reason) {
    if (finished_) return;
    finished_ = true;
    result_.termination = reason;
    result_.flight_time = static_cast<double>(t) * 1e-6;
    event(t, "terminate", {{"reason", reason}});
  }

  void event(std::int64_t t, std::string type, json data) {
    result_.events.push_back({t, std::move(type), std::move(data)});
  }

  TrackSample trackSample(const Observation& obs) const {
    return {obs.pose, obs.odo_distance, obs.ref, obs.step, obs.descriptor};
  }

  // The shared perception step: one render and one feature extraction per frame time,
  // whichever agent asks first.
  const Observation& frameAt(std::int64_t t) {
    if (latest_ && latest_->time_us == t) return *latest_;
    const Pose pose(state_.position, state_.yaw);
    RenderOutput r = render(world_, pose, k_, cfg_.sim.max_range, cfg_.exec);
    Observation obs;
    obs.ref = static_cast<ObservationRef>(archive_.size());
    obs.step = obs.ref;
    obs.time_us = t;
    obs.pose = pose;
    obs.odo_distance = odo_distance_;
    auto features = std::make_shared<FeatureMap>(extractFeatures(
        r.labels, world_.featureTable(), cfg_.sim.feature_noise, seed_, obs.ref, cfg_.exec));
    ++result_.feature_extractions;
    obs.descriptor = globalDescriptor(*features);
    obs.features = std::move(features);
    obs.depth = std::make_shared<DepthMap>(std::move(r.depth));
    archive_.add(obs);
    latest_ = std::move(obs);
    track_.push_back(trackSample(*latest_));
    return *latest_;
  }

  const World& world_;
  EpisodeConfig cfg_;
  std::uint64_t seed_;
  CameraIntrinsics k_;
  std::int64_t subtask_start_us_ = 0;
  ScriptedDecision decision_oracle_;
  ScriptedMonitor monitor_oracle_;
  std::unique_ptr<MemoryPolicy> memory_;
  std::optional<LocalPlanner> planner_;
  TaskQueue queue_;
  FrameArchive archive_;
  std::optional<Observation> latest_;
  std::vector<TrackSample> track_;
  std::optional<MonitoringMemory> previous_memory_;
  std::optional<PendingVerdict> pending_;
  std::optional<Vec3> last_goal_;
  std::optional<Vec3> last_normal_;
  ExecState state_;
  double odo_distance_ = 0.0;
  Trajectory trajectory_;
  std::int64_t traj_start_us_ = 0;
  std::int64_t recovering_until_us_ = 0;
  bool halted_ = false;
  bool finished_ = false;
  EpisodeResult result_;
};

}  // namespace

EpisodeResult runEpisode(const World& world, const EpisodeConfig& config, std::uint64_t seed) {
  config.validate();
  Episode episode(world, config, seed);
  return episode.run();
}

// ---------------------------------------------------------------- benchmark

std::uint64_t episodeSeed(std::uint64_t base_seed, std::size_t world_index, int repeat) {
  return hashCombine(hashCombine(base_seed, world_index), static_cast<std::uint64_t>(repeat));
}

namespace {

MetricSummary summarize(const std::vector<const BenchmarkEpisode*>& eps) {
  MetricSummary m;
  m.episodes = eps.size();
  if (eps.empty()) return m;
  for (const auto* e : eps) {
    m.sr += e->success ? 1.0 : 0.0;
    m.osr += e->oracle_success ? 1.0 : 0.0;
    m.cr += e->collided ? 1.0 : 0.0;
    m.ft += e->flight_time;
    m.prefix_reuse += e->mean_prefix_reuse;
  }
  const double n = static_cast<double>(eps.size());
  m.sr /= n;
  m.osr /= n;
  m.cr /= n;
  m.ft /= n;
  m.prefix_reuse /= n;
  return m;
}

}  // namespace

BenchmarkTable runBenchmark(const std::vector<const World*>& worlds,
                            const std::vector<BenchmarkRow>& rows, int repeats,
                            std::uint64_t base_seed, Execution exec) {
  if (repeats < 1) throw std::invalid_argument("benchmark: repeats must be >= 1");
  if (worlds.empty() || rows.empty()) throw std::invalid_argument("benchmark: empty suite");
  BenchmarkTable table;
  for (const auto& r : rows) table.rows.push_back(r.name);
  for (const World* w : worlds) table.worlds.push_back(w->spec().name);
  const std::size_t nw = worlds.size();
  const auto nrep = static_cast<std::size_t>(repeats);
  const std::size_t total = rows.size() * nw * nrep;
  table.episodes.resize(total);

  auto runOne = [&](std::size_t i) {
    const std::size_t row = i / (nw * nrep);
    const std::size_t world = (i / nrep) % nw;
    const int repeat = static_cast<int>(i % nrep);
    BenchmarkEpisode& e = table.episodes[i];
    e.row = rows[row].name;
    e.world = worlds[world]->spec().name;
    e.repeat = repeat;
    e.seed = episodeSeed(base_seed, world, repeat);
    EpisodeConfig cfg = rows[row].config;
    if (exec == Execution::Parallel) cfg.exec = Execution::Serial;
    try {
      const EpisodeResult r = runEpisode(*worlds[world], cfg, e.seed);
      e.success = r.success;
      e.oracle_success = r.oracle_success;
      e.collided = r.collided;
      e.flight_time = r.flight_time;
      e.min_clearance = r.min_clearance;
      e.clearance_violations = r.clearance_violations;
      e.mean_prefix_reuse = r.mean_prefix_reuse;
      e.termination = r.termination;
    } catch (const std::exception& ex) {
      e.termination = "error";
      e.error = ex.what();
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < total; ++i) runOne(i);
  } else {
    for (std::size_t i = 0; i < total; ++i) runOne(i);
  }

  table.per_world.assign(rows.size(), std::vector<MetricSummary>(nw));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<const BenchmarkEpisode*> all;
    for (std::size_t w = 0; w < nw; ++w) {
      std::vector<const BenchmarkEpisode*> eps;
      for (std::size_t k = 0; k < nrep; ++k) eps.push_back(&table.episodes[(r * nw + w) * nrep + k]);
      table.per_world[r][w] = summarize(eps);
      all.insert(all.end(), eps.begin(), eps.end());
    }
    table.aggregate.push_back(summarize(all));
  }
  return table;
}

}  // namespace onfly
