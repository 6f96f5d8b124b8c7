#include <doctest.h>

#include <cmath>

#include "onfly/agents.hpp"
#include "onfly/rng.hpp"

using namespace onfly;

namespace {

struct FixedOracle : DecisionOracle {
  Pixel answer;
  std::optional<Pixel> seen_history;
  int calls = 0;
  Pixel decide(const DecisionRequest& r) override {
    ++calls;
    seen_history = r.history;
    return answer;
  }
};

struct ScriptOracle : MonitoringOracle {
  std::vector<TaskStatus> script;
  std::size_t next = 0;
  TaskStatus classify(const MonitoringRequest&) override {
    return next < script.size() ? script[next++] : TaskStatus::Continue;
  }
};

// Records every callback; the monitor cost is fixed.
struct Recorder : DualRateHooks {
  std::int64_t cost_us = 0;
  std::int64_t stop_at = -1;
  std::vector<std::int64_t> decisions, monitor_starts, monitor_ends;
  int physics_calls = 0;
  bool done = false;
  void physics(std::int64_t t) override {
    ++physics_calls;
    if (stop_at >= 0 && t >= stop_at) done = true;
  }
  void decision(std::int64_t t) override { decisions.push_back(t); }
  std::int64_t monitorBegin(std::int64_t t) override {
    monitor_starts.push_back(t);
    return cost_us;
  }
  void monitorEnd(std::int64_t, std::int64_t t) override { monitor_ends.push_back(t); }
  bool finished() const override { return done; }
};

Observation frame(int w, int h, Pose pose) {
  Observation o;
  o.ref = 0;
  o.features = std::make_shared<FeatureMap>(w, h, 2);
  o.depth = std::make_shared<DepthMap>(w, h, 5.0);
  o.pose = pose;
  return o;
}

}  // namespace

TEST_CASE("decision step") {
  const auto k = CameraIntrinsics::fromFov(160, 90, kPi / 2);
  const Observation obs = frame(160, 90, Pose({0, 0, 1}, 0.0));
  FixedOracle oracle;
  oracle.answer = {10, 20};

  auto out = decisionStep(oracle, "go", 0, obs, std::nullopt, k);
  CHECK_FALSE(oracle.seen_history);
  CHECK(out.candidate.pixel == Pixel{10, 20});
  CHECK_FALSE(out.candidate.clamped);
  CHECK(out.candidate.depth_map == obs.depth.get());

  out = decisionStep(oracle, "go", 0, obs, Vec3{-3, 0, 1}, k);
  CHECK_FALSE(oracle.seen_history);

  out = decisionStep(oracle, "go", 0, obs, Vec3{4, 0, 1}, k);
  REQUIRE(oracle.seen_history);
  CHECK(*oracle.seen_history == Pixel{80, 45});

  oracle.answer = {500, -4};
  out = decisionStep(oracle, "go", 0, obs, std::nullopt, k);
  CHECK(out.candidate.pixel == Pixel{159, 0});
  CHECK(out.candidate.clamped);
}

TEST_CASE("monitoring step passes the verdict through and audits it") {
  ScriptOracle oracle;
  oracle.script = {TaskStatus::Lost};
  MonitoringMemory mem{{0, 1, 2, 3, 4, 5}};
  std::vector<MonitoringRecord> audit;
  const std::string text = "go";
  const MonitoringRequest req{&text, 0, &mem, nullptr, 2'000'000};
  CHECK((monitoringStep(oracle, req, audit) == TaskStatus::Lost));
  CHECK((monitoringStep(oracle, req, audit) == TaskStatus::Continue));
  REQUIRE(audit.size() == 2);
  CHECK(audit[0].slots == mem.slots);
  CHECK(audit[0].time_us == 2'000'000);
}

TEST_CASE("status handling") {
  AgentState s;
  s.position = {4, 5, 1};
  CHECK((handleStatus(TaskStatus::Continue, s).kind == Directive::Kind::None));
  CHECK((handleStatus(TaskStatus::Stop, s).kind == Directive::Kind::ForwardStop));
  CHECK((handleStatus(TaskStatus::Lost, s).kind == Directive::Kind::Halt));
  s.final_subtask = true;
  CHECK((handleStatus(TaskStatus::Stop, s).kind == Directive::Kind::TerminateEpisode));

  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a{rng.uniform(-10, 10), rng.uniform(-10, 10), 1};
    const Vec3 b{rng.uniform(-10, 10), rng.uniform(-10, 10), 1};
    AgentState st;
    st.position = b;
    st.last_normal = a;
    const Directive d = handleStatus(TaskStatus::Lost, st);
    CHECK((d.kind == Directive::Kind::Recover));
    REQUIRE(d.yaw_target);
    CHECK(*d.yaw_target == std::atan2(a.y - b.y, a.x - b.x));
  }
}

TEST_CASE("task advancement") {
  TaskQueue q{{"a", "b"}};
  const TaskStatus trace[] = {TaskStatus::Stop, TaskStatus::Continue, TaskStatus::Stop, TaskStatus::Stop};
  for (int i = 0; i < 4; ++i) {
    q = advanceTask(q, trace[i], 2);
    CHECK(q.current_index == (i == 3 ? 1u : 0u));
  }
  CHECK(q.stop_streak == 0);

  TaskQueue single{{"only"}};
  single = advanceTask(single, TaskStatus::Stop, 2);
  single = advanceTask(single, TaskStatus::Stop, 2);
  CHECK(single.complete());
  single = advanceTask(single, TaskStatus::Stop, 2);
  CHECK(single.current_index == 1);

  TaskQueue idle{{"a"}};
  for (int i = 0; i < 50; ++i) idle = advanceTask(idle, TaskStatus::Continue, 2);
  CHECK(idle.current_index == 0);

  // Monotone under any status stream.
  Rng rng(2);
  TaskQueue m{{"a", "b", "c"}};
  std::size_t prev = 0;
  for (int i = 0; i < 200; ++i) {
    m = advanceTask(m, static_cast<TaskStatus>(rng.uniformInt(0, 2)), 2);
    CHECK(m.current_index >= prev);
    prev = m.current_index;
  }
}

TEST_CASE("decomposition") {
  int calls = 0;
  const Decomposer counting = [&](const std::string& s) {
    ++calls;
    return delimiterDecomposer(';')(s);
  };
  const auto q = decompose("go to the door; then stop near the chair", counting);
  CHECK(calls == 1);
  REQUIRE(q.subtasks.size() == 2);
  CHECK(q.subtasks[0] == "go to the door");
  CHECK(q.subtasks[1] == "then stop near the chair");
  CHECK(q.current_index == 0);

  CHECK(decompose("fly up", delimiterDecomposer()).subtasks.size() == 1);
  const auto whole = decompose(" ; ", delimiterDecomposer());
  REQUIRE(whole.subtasks.size() == 1);
  CHECK(whole.subtasks[0] == ";");
}

TEST_CASE("dual-rate tick counts") {
  DualRateConfig c;
  c.duration_us = 10'000'000;
  Recorder r;
  r.cost_us = 300'000;
  const auto log = runDualRate(c, r);
  CHECK(r.decisions.size() == 20);
  CHECK(r.monitor_starts.size() == 5);
  CHECK(r.physics_calls == 100);
  for (std::size_t i = 0; i < r.decisions.size(); ++i) {
    CHECK(r.decisions[i] == static_cast<std::int64_t>(i) * 500'000);
  }
  for (std::size_t i = 0; i < r.monitor_ends.size(); ++i) {
    CHECK(r.monitor_ends[i] == r.monitor_starts[i] + 300'000);
  }
  std::int64_t prev = 0;
  for (const Tick& t : log) {
    CHECK(t.time_us >= prev);
    prev = t.time_us;
  }
}

TEST_CASE("monitoring cost never moves decision ticks in dual mode") {
  DualRateConfig c;
  c.duration_us = 20'000'000;
  Recorder baseline;
  runDualRate(c, baseline);
  for (std::int64_t cost : {1LL, 499'999LL, 1'300'000LL, 2'000'000LL, 4'500'000LL}) {
    Recorder r;
    r.cost_us = cost;
    const auto log = runDualRate(c, r);
    CHECK(r.decisions == baseline.decisions);
    for (const Tick& t : log) {
      if (t.kind == TickKind::Decision) CHECK(t.time_us == t.scheduled_us);
    }
  }
}

TEST_CASE("blocking monitoring delays decisions") {
  DualRateConfig c;
  c.duration_us = 10'000'000;
  c.dual = false;
  Recorder r;
  r.cost_us = 1'200'000;
  runDualRate(c, r);
  // The monitor starts first at t = 0 and blocks until 1.2 s; the ticks at 0.5 and
  // 1.0 s are dropped and the schedule resumes on its grid.
  REQUIRE(r.decisions.size() > 2);
  CHECK(r.decisions[0] == 1'200'000);
  CHECK(r.decisions[1] == 1'500'000);
  for (std::size_t i = 1; i < r.decisions.size(); ++i) CHECK(r.decisions[i] > r.decisions[i - 1]);
}

TEST_CASE("loop stops when the hooks finish") {
  DualRateConfig c;
  Recorder r;
  r.stop_at = 3'000'000;
  runDualRate(c, r);
  CHECK(r.physics_calls == 31);
  CHECK(r.decisions.back() < 3'000'000);
}

TEST_CASE("dual-rate config validation") {
  DualRateConfig c;
  c.decision_period_us = 2'000'000;
  CHECK_THROWS(c.validate());
  c = {};
  c.physics_period_us = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("monitor cost model") {
  MonitorCostModel m;
  CHECK(m.costUs(6 * 256, 5 * 256) == std::llround((0.1 + 0.0005 * 256) * 1e6));
  CHECK(m.costUs(6 * 256, 0) > m.costUs(6 * 256, 256));
  CHECK(m.costUs(10, 20) == 100'000);
}

TEST_CASE("frame archive") {
  FrameArchive a;
  Observation o;
  o.ref = 0;
  o.pose = Pose({1, 2, 3}, 0.5);
  a.add(o);
  CHECK(a.at(0).pose.position() == Vec3{1, 2, 3});
  o.ref = 5;
  CHECK_THROWS(a.add(o));
  CHECK_THROWS(a.at(3));
}
