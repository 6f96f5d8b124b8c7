#include "onfly/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace onfly {

void FrameArchive::add(const Observation& obs) {
  if (obs.ref != static_cast<ObservationRef>(entries_.size())) {
    throw std::invalid_argument("frame archive: refs must be dense and ordered");
  }
  entries_.push_back({obs.ref, obs.pose, obs.time_us, obs.step, obs.odo_distance});
}

const FrameArchive::Entry& FrameArchive::at(ObservationRef ref) const {
  if (ref < 0 || static_cast<std::size_t>(ref) >= entries_.size()) {
    throw std::out_of_range("frame archive: unknown observation ref");
  }
  return entries_[static_cast<std::size_t>(ref)];
}

std::string toString(TaskStatus status) {
  switch (status) {
    case TaskStatus::Continue: return "CONTINUE";
    case TaskStatus::Stop: return "STOP";
    case TaskStatus::Lost: return "LOST";
  }
  return "?";
}

std::string toString(Directive::Kind kind) {
  switch (kind) {
    case Directive::Kind::None: return "none";
    case Directive::Kind::ForwardStop: return "forward_stop";
    case Directive::Kind::TerminateEpisode: return "terminate_episode";
    case Directive::Kind::Recover: return "recover";
    case Directive::Kind::Halt: return "halt";
  }
  return "?";
}

std::string toString(TickKind kind) {
  switch (kind) {
    case TickKind::Physics: return "physics";
    case TickKind::MonitorResult: return "monitor_result";
    case TickKind::MonitorStart: return "monitor_start";
    case TickKind::MonitorSkipped: return "monitor_skipped";
    case TickKind::Decision: return "decision";
  }
  return "?";
}

DecisionOutcome decisionStep(DecisionOracle& oracle, const std::string& subtask,
                             std::size_t subtask_index, const Observation& obs,
                             const std::optional<Vec3>& previous_goal,
                             const CameraIntrinsics& k) {
  if (!obs.features || !obs.depth) throw std::invalid_argument("decisionStep: incomplete frame");
  DecisionOutcome out;
  if (previous_goal) out.history = projectToPixel(*previous_goal, obs.pose, k);
  DecisionRequest request{&subtask, subtask_index, &obs, out.history};
  const Pixel raw = oracle.decide(request);
  const Pixel p{std::clamp(raw.x, 0, obs.depth->width() - 1),
                std::clamp(raw.y, 0, obs.depth->height() - 1)};
  out.candidate.pixel = p;
  out.candidate.clamped = !(p == raw);
  out.candidate.depth_map = obs.depth.get();
  out.candidate.feature_map = obs.features.get();
  out.candidate.pose = obs.pose;
  return out;
}

TaskStatus monitoringStep(MonitoringOracle& oracle, const MonitoringRequest& request,
                          std::vector<MonitoringRecord>& audit) {
  if (request.memory == nullptr) throw std::invalid_argument("monitoringStep: no memory");
  const TaskStatus status = oracle.classify(request);
  audit.push_back({request.time_us, request.subtask_index, status, request.memory->slots});
  return status;
}

Directive handleStatus(TaskStatus status, const AgentState& state) {
  Directive d;
  switch (status) {
    case TaskStatus::Continue:
      break;
    case TaskStatus::Stop:
      d.kind = state.final_subtask ? Directive::Kind::TerminateEpisode
                                   : Directive::Kind::ForwardStop;
      break;
    case TaskStatus::Lost:
      if (state.last_normal) {
        d.kind = Directive::Kind::Recover;
        d.yaw_target = std::atan2(state.last_normal->y - state.position.y,
                                  state.last_normal->x - state.position.x);
      } else {
        d.kind = Directive::Kind::Halt;
      }
      break;
  }
  return d;
}

const std::string& TaskQueue::current() const {
  if (complete()) throw std::out_of_range("task queue: no current subtask");
  return subtasks[current_index];
}

TaskQueue advanceTask(TaskQueue queue, TaskStatus status, int k_stable) {
  if (k_stable < 1) throw std::invalid_argument("advanceTask: K_stable must be >= 1");
  if (queue.complete()) return queue;
  if (status != TaskStatus::Stop) {
    queue.stop_streak = 0;
    return queue;
  }
  if (++queue.stop_streak >= k_stable) {
    ++queue.current_index;
    queue.stop_streak = 0;
  }
  return queue;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Decomposer delimiterDecomposer(char delimiter) {
  return [delimiter](const std::string& instruction) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= instruction.size()) {
      const auto pos = instruction.find(delimiter, start);
      const auto end = pos == std::string::npos ? instruction.size() : pos;
      if (auto piece = trim(instruction.substr(start, end - start)); !piece.empty()) {
        parts.push_back(std::move(piece));
      }
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return parts;
  };
}

TaskQueue decompose(const std::string& instruction, const Decomposer& decomposer) {
  if (trim(instruction).empty()) throw std::invalid_argument("decompose: empty instruction");
  TaskQueue q;
  q.subtasks = decomposer(instruction);
  if (q.subtasks.empty()) q.subtasks.push_back(trim(instruction));
  return q;
}

void DualRateConfig::validate() const {
  if (physics_period_us <= 0 || decision_period_us <= 0 || monitoring_period_us <= 0) {
    throw std::invalid_argument("dual-rate: periods must be positive");
  }
  if (decision_period_us >= monitoring_period_us) {
    throw std::invalid_argument("dual-rate: decision period must be shorter than monitoring");
  }
  if (duration_us <= 0) throw std::invalid_argument("dual-rate: duration must be positive");
}

std::vector<Tick> runDualRate(const DualRateConfig& config, DualRateHooks& hooks) {
  config.validate();
  std::vector<Tick> log;
  std::int64_t next_physics = 0;
  std::int64_t next_decision = 0;
  std::int64_t next_monitor = 0;
  bool busy = false;
  std::int64_t busy_start = 0;
  std::int64_t busy_end = 0;

  // busy_end keeps the end of the last call, so a blocked tick never runs in the past.
  auto decisionDue = [&] { return config.dual ? next_decision : std::max(next_decision, busy_end); };

  while (!hooks.finished()) {
    std::int64_t t = std::min({next_physics, decisionDue(), next_monitor});
    if (busy) t = std::min(t, busy_end);
    if (t >= config.duration_us) break;

    if (next_physics == t) {
      hooks.physics(t);
      log.push_back({t, TickKind::Physics, t});
      next_physics += config.physics_period_us;
      if (hooks.finished()) break;
    }
    if (busy && busy_end == t) {
      busy = false;
      hooks.monitorEnd(busy_start, t);
      log.push_back({t, TickKind::MonitorResult, busy_start});
      if (hooks.finished()) break;
    }
    if (next_monitor == t) {
      if (busy) {
        log.push_back({t, TickKind::MonitorSkipped, t});
      } else {
        const std::int64_t cost = std::max<std::int64_t>(0, hooks.monitorBegin(t));
        log.push_back({t, TickKind::MonitorStart, t});
        busy = true;
        busy_start = t;
        busy_end = t + cost;
      }
      next_monitor += config.monitoring_period_us;
      if (hooks.finished()) break;
    }
    if (decisionDue() == t) {
      hooks.decision(t);
      log.push_back({t, TickKind::Decision, next_decision});
      // Ticks swallowed by a blocking monitor call are dropped, not replayed.
      next_decision += config.decision_period_us;
      while (next_decision <= t) next_decision += config.decision_period_us;
    }
  }
  return log;
}

std::int64_t MonitorCostModel::costUs(std::int64_t total_tokens,
                                      std::int64_t reused_tokens) const {
  const auto fresh = std::max<std::int64_t>(0, total_tokens - reused_tokens);
  return std::llround((base_s + per_token_s * static_cast<double>(fresh)) * 1e6);
}

}  // namespace onfly
