#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "onfly/config.hpp"
#include "onfly/io.hpp"
#include "test_support.hpp"

using namespace onfly;
using nlohmann::json;

namespace {

std::filesystem::path scratchDir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("onfly_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every scalar leaf of the default document as (dotted key, value).
void leaves(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      leaves(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

json perturbed(const std::string& key, const json& v) {
  if (key == "sim.memory_policy") return "sliding";
  if (key == "verifier.dilation_units") return "pixels";
  if (v.is_boolean()) return !v.get<bool>();
  if (v.is_string()) return "changed";
  if (v.is_number_unsigned()) return v.get<std::uint64_t>() + 1;
  if (v.is_number_integer()) return v.get<std::int64_t>() + 1;
  if (v.is_number_float()) return v.get<double>() * 1.05 + 0.01;
  if (v.is_array()) {
    json a = v;
    for (auto& e : a) e = e.get<double>() + 1.0;
    return a;
  }
  return v;
}

}  // namespace

TEST_CASE("defaults round-trip") {
  const RunConfig d;
  const json j = toJson(d);
  CHECK(toJson(runConfigFromJson(j)) == j);
  CHECK(j["planner"]["safety_margin"] == 0.4);
  CHECK(j["limits"]["v_max"] == 0.6);
  CHECK(j["memory"]["segments"] == 4);
  CHECK(j["sim"]["k_stable"] == 2);
}

TEST_CASE("every key round-trips through an override") {
  std::vector<std::pair<std::string, json>> keys;
  leaves(toJson(RunConfig{}), "", keys);
  CHECK(keys.size() > 50);
  for (const auto& [key, value] : keys) {
    // The planner step is tied to the physics period; covered below.
    if (key == "planner.dt" || key == "schedule.physics_period_us") continue;
    const json v = perturbed(key, value);
    const RunConfig c = loadRunConfig({}, {{key, v.dump()}});
    json echo = toJson(c);
    std::istringstream path(key);
    std::string part;
    const json* node = &echo;
    while (std::getline(path, part, '.')) node = &(*node)[part];
    INFO(key);
    if (v.is_number_float()) {
      CHECK(node->get<double>() == doctest::Approx(v.get<double>()));
    } else {
      CHECK(*node == v);
    }
  }
}

TEST_CASE("planner step follows the physics period") {
  const RunConfig c = loadRunConfig({}, {{"schedule.physics_period_us", "50000"}, {"planner.dt", "0.05"}});
  CHECK(c.episode.schedule.physics_period_us == 50'000);
  CHECK(c.episode.planner.dt == 0.05);
  CHECK_THROWS_AS(loadRunConfig({}, {{"planner.dt", "0.05"}}), ConfigError);
}

TEST_CASE("override parsing") {
  RunConfig c = loadRunConfig({}, {{"planner.safety_margin", "0.5"},
                                   {"sim.planner_enabled", "false"},
                                   {"sim.memory_policy", "time-sampling"},
                                   {"planner.safety_margin", "0.6"}});
  CHECK(c.episode.planner.safety_margin == 0.6);
  CHECK_FALSE(c.episode.sim.planner_enabled);
  CHECK((c.episode.sim.memory_policy == MemoryPolicyKind::TimeSampling));

  c = loadRunConfig({}, {{"sim.k_stable", "3.0"}});
  CHECK(c.episode.sim.k_stable == 3);
}

TEST_CASE("bad keys and values name the key") {
  auto expectKey = [](const std::vector<std::pair<std::string, std::string>>& o, const std::string& key) {
    try {
      loadRunConfig({}, o);
      FAIL("expected a ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  expectKey({{"planner.safty_margin", "0.5"}}, "planner.safty_margin");
  expectKey({{"planner.safety_margin", "wide"}}, "planner.safety_margin");
  expectKey({{"sim.k_stable", "2.5"}}, "sim.k_stable");
  expectKey({{"seed", "-3"}}, "seed");
  expectKey({{"sim.memory_policy", "fifo"}}, "sim.memory_policy");
  expectKey({{"verifier.dilation_units", "inches"}}, "verifier.dilation_units");
  CHECK_THROWS_AS(loadRunConfig({}, {{"limits.v_max", "-1"}}), ConfigError);
}

TEST_CASE("config files layer under overrides") {
  const auto dir = scratchDir("config");
  const auto file = dir / "run.json";
  std::ofstream(file) << R"({"seed": 4, "planner": {"horizon": 4.0}, "sim": {"k_stable": 3}})";
  const RunConfig c = loadRunConfig(file, {{"sim.k_stable", "5"}});
  CHECK(c.seed == 4);
  CHECK(c.episode.planner.horizon == 4.0);
  CHECK(c.episode.sim.k_stable == 5);

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(loadRunConfig(dir / "bad.json", {}), ConfigError);
  CHECK_THROWS_AS(loadRunConfig(dir / "missing.json", {}), ConfigError);
}

TEST_CASE("bundled suites expand into rows") {
  const Suite s = loadSuite(test::dataDir() / "suites" / "ablation.json");
  CHECK(s.worlds.size() == 20);
  for (const auto& w : s.worlds) CHECK(std::filesystem::exists(w));
  const auto rows = suiteRows(s, {{"planner.horizon", "2.5"}});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "full");
  CHECK(rows[1].name == "w/o planner");
  CHECK_FALSE(rows[1].config.sim.planner_enabled);
  CHECK_FALSE(rows[2].config.sim.verifier_enabled);
  CHECK_FALSE(rows[3].config.sim.dual_agent);
  for (const auto& r : rows) CHECK(r.config.planner.horizon == 2.5);

  const Suite noisy = loadSuite(test::dataDir() / "suites" / "noisy_memory.json");
  const auto mem = suiteRows(noisy, {});
  REQUIRE(mem.size() == 3);
  CHECK((mem[1].config.sim.memory_policy == MemoryPolicyKind::Sliding));
  CHECK(mem[0].config.sim.oracle_pixel_noise == 10.0);
  CHECK(mem[0].config.sim.feature_noise == 0.1);
}

TEST_CASE("number formatting") {
  CHECK(formatNumber(1.5) == "1.500000");
  CHECK(formatNumber(-0.0000001, 3) == "0.000");
  CHECK(formatNumber(2.0, 0) == "2");
}

TEST_CASE("episode artifacts") {
  const World w = test::openWorld();
  const EpisodeConfig cfg = test::fastConfig();
  const EpisodeResult r = runEpisode(w, cfg, 3);

  const json res = resultJson(r);
  CHECK(res["schema"] == "onfly.result/1");
  CHECK(res["success"] == r.success);
  CHECK(res.contains("flight_time"));

  const std::string traj = trajectoryCsv(r);
  CHECK(traj.rfind("t,x,y,z,vx,vy,vz,yaw,clearance\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(traj.begin(), traj.end(), '\n')) == r.trajectory.size() + 1);

  std::istringstream events(eventsJsonl(r));
  std::string line;
  std::size_t n = 0;
  while (std::getline(events, line)) {
    const json e = json::parse(line);
    CHECK(e.contains("t_us"));
    CHECK(e.contains("type"));
    ++n;
  }
  CHECK(n == r.events.size());
  CHECK(ticksCsv(r).rfind("t_us,kind,scheduled_us\n", 0) == 0);

  const auto dir = scratchDir("episode");
  writeEpisodeArtifacts(dir, r, toJson(RunConfig{}));
  for (const char* f : {"result.json", "trajectory.csv", "events.jsonl", "ticks.csv", "memory.jsonl",
                        "monitoring.jsonl", "config_echo.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(json::parse(slurp(dir / "result.json")) == res);

  const auto again = scratchDir("episode_again");
  writeEpisodeArtifacts(again, runEpisode(w, cfg, 3), toJson(RunConfig{}));
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(again / e.path().filename()));
  }
}

TEST_CASE("debug rasters") {
  const World w = test::openWorld();
  EpisodeConfig cfg = test::fastConfig();
  cfg.sim.debug_rasters = true;
  cfg.sim.time_limit = 3.0;
  const EpisodeResult r = runEpisode(w, cfg, 1);
  CHECK_FALSE(r.debug.empty());
  const auto dir = scratchDir("debug");
  writeEpisodeArtifacts(dir, r, json::object());
  std::size_t pgms = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "debug")) {
    const std::string bytes = slurp(e.path());
    CHECK(bytes.rfind("P5\n", 0) == 0);
    ++pgms;
  }
  CHECK(pgms == r.debug.size());

  const std::string img = pgm(3, 2, {0, 1, 2, 3, 4, 5});
  CHECK(img == std::string("P5\n3 2\n255\n") + std::string("\x00\x01\x02\x03\x04\x05", 6));
}

TEST_CASE("benchmark and memory comparison artifacts") {
  const World w = test::openWorld();
  EpisodeConfig cfg = test::fastConfig();
  EpisodeConfig off = cfg;
  off.sim.planner_enabled = false;
  const BenchmarkTable t = runBenchmark({&w}, {{"full", cfg}, {"w/o planner", off}}, 1, 1);
  const std::string md = benchmarkMarkdown(t);
  CHECK(md.find("| Method | SR (%) | OSR (%) | CR (%) | FT (s) | Prefix reuse (tokens) |") != std::string::npos);
  CHECK(md.find("| w/o planner |") != std::string::npos);
  CHECK(benchmarkJson(t)["schema"] == "onfly.bench/1");
  const std::string csv = benchmarkEpisodesCsv(t);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  SyntheticStreamConfig sc;
  sc.steps = 20;
  const auto cmp = compareMemoryPolicies(syntheticStream(sc), {}, 256);
  const json mj = memcmpJson(cmp, sc, {}, 256);
  CHECK(mj["schema"] == "onfly.memcmp/1");
  CHECK(mj.contains("hybrid_over_sliding"));
  const std::string mc = memcmpCsv(cmp);
  CHECK(mc.rfind("step,hybrid,sliding,time-sampling\n", 0) == 0);
  CHECK(std::count(mc.begin(), mc.end(), '\n') == 21);
}
