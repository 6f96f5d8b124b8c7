// onfly: run one episode, a benchmark suite, or the memory-policy comparison.
//
// Any configuration key can be set from the command line as --section.key value
// (or --section.key=value), e.g. --planner.safety_margin 0.5 --sim.planner_enabled false.
// Exit codes: 0 ok, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "onfly/config.hpp"
#include "onfly/io.hpp"
#include "onfly/sim.hpp"
#include "onfly/world.hpp"

namespace {

using onfly::ConfigError;
using Overrides = std::vector<std::pair<std::string, std::string>>;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

// Configuration problems detected while loading inputs (world files, suites).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pulls "--a.b value" / "--a.b=value" pairs out of argv; everything else goes to CLI11.
Overrides extractDotted(std::vector<std::string>& args) {
  Overrides out;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) == 0 && a.size() > 2) {
      const std::string body = a.substr(2);
      const auto eq = body.find('=');
      const std::string key = body.substr(0, eq);
      if (key.find('.') != std::string::npos) {
        if (eq != std::string::npos) {
          out.emplace_back(key, body.substr(eq + 1));
        } else if (i + 1 < args.size()) {
          out.emplace_back(key, args[++i]);
        } else {
          throw ConfigError(key, "missing value for --" + key);
        }
        continue;
      }
    }
    rest.push_back(a);
  }
  args = std::move(rest);
  return out;
}

std::string defaultOutDir(const std::string& from_config, const std::string& fallback) {
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("ONFLY_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

onfly::World loadWorld(const std::string& path) {
  try {
    return onfly::World(onfly::loadWorldSpec(path));
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

int cmdRun(const std::string& config_path, const std::string& world_flag,
           std::optional<std::uint64_t> seed_flag, const std::string& out_flag, bool debug_flag,
           bool serial, const Overrides& overrides) {
  Overrides all = overrides;
  if (!world_flag.empty()) all.emplace_back("world", nlohmann::json(world_flag).dump());
  if (seed_flag) all.emplace_back("seed", std::to_string(*seed_flag));
  if (!out_flag.empty()) all.emplace_back("output_dir", nlohmann::json(out_flag).dump());
  if (debug_flag) all.emplace_back("debug", "true");
  if (serial) all.emplace_back("parallel", "false");

  onfly::RunConfig cfg = onfly::loadRunConfig(config_path, all);
  if (cfg.world.empty()) throw ConfigError("world", "no world given (use --world or the 'world' key)");
  cfg.episode.sim.debug_rasters = cfg.debug;
  const onfly::World world = loadWorld(cfg.world);
  const std::string out_dir = defaultOutDir(cfg.output_dir, "onfly_out");

  const onfly::EpisodeResult r = onfly::runEpisode(world, cfg.episode, cfg.seed);
  onfly::writeEpisodeArtifacts(out_dir, r, onfly::toJson(cfg));
  std::cout << "world=" << r.world << " seed=" << r.seed << " success=" << r.success
            << " oracle_success=" << r.oracle_success << " collided=" << r.collided
            << " flight_time=" << onfly::formatNumber(r.flight_time, 1)
            << " termination=" << r.termination << " out=" << out_dir << '\n';
  return kExitOk;
}

int cmdBench(const std::string& suite_path, std::optional<int> repeats_flag,
             std::optional<std::uint64_t> seed_flag, const std::string& out_flag,
             const std::vector<std::string>& only_rows, bool serial, const Overrides& overrides) {
  onfly::Suite suite;
  try {
    suite = onfly::loadSuite(suite_path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(suite_path, "suite '" + suite_path + "': " + e.what());
  }
  if (repeats_flag) {
    if (*repeats_flag < 1) throw ConfigError("repeats", "--repeats must be >= 1");
    suite.repeats = *repeats_flag;
  }
  if (seed_flag) suite.seed = *seed_flag;

  std::vector<onfly::BenchmarkRow> rows = onfly::suiteRows(suite, overrides);
  if (!only_rows.empty()) {
    std::vector<onfly::BenchmarkRow> kept;
    for (const std::string& name : only_rows) {
      bool found = false;
      for (const auto& r : rows) {
        if (r.name == name) {
          kept.push_back(r);
          found = true;
        }
      }
      if (!found) throw ConfigError("rows", "suite has no row named '" + name + "'");
    }
    rows = std::move(kept);
  }

  std::vector<std::unique_ptr<onfly::World>> worlds;
  std::vector<const onfly::World*> ptrs;
  for (const std::string& path : suite.worlds) {
    worlds.push_back(std::make_unique<onfly::World>(loadWorld(path)));
    ptrs.push_back(worlds.back().get());
  }
  const onfly::BenchmarkTable table = onfly::runBenchmark(
      ptrs, rows, suite.repeats, suite.seed,
      serial ? onfly::Execution::Serial : onfly::Execution::Parallel);
  const std::string out_dir = defaultOutDir(out_flag, "onfly_bench");
  onfly::writeBenchmarkArtifacts(out_dir, table);
  std::cout << onfly::benchmarkMarkdown(table);
  return kExitOk;
}

int cmdMemcmp(const onfly::SyntheticStreamConfig& stream, const Overrides& overrides,
              const std::string& out_flag) {
  // Memory parameters come from the same config keys as a run (--memory.segments ...).
  const onfly::RunConfig cfg = onfly::loadRunConfig({}, overrides);
  const onfly::HybridMemoryConfig& mem = cfg.episode.memory;
  if (stream.steps < mem.segments + 2) {
    throw ConfigError("steps", "--steps must be at least segments + 2 (" +
                                   std::to_string(mem.segments + 2) + ")");
  }
  const std::int64_t tokens = cfg.episode.monitor_cost.tokens_per_slot;
  const auto cmp = onfly::compareMemoryPolicies(onfly::syntheticStream(stream), mem, tokens);
  const std::string out_dir = defaultOutDir(out_flag, "onfly_memcmp");
  onfly::writeMemcmpArtifacts(out_dir, cmp, stream, mem, tokens);
  for (const auto& p : cmp.policies) {
    std::cout << onfly::toString(p.kind) << " mean_prefix_reuse=" << onfly::formatNumber(p.mean, 2)
              << '\n';
  }
  std::cout << "hybrid/sliding=" << onfly::formatNumber(cmp.hybrid_over_sliding, 3) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  Overrides overrides;
  try {
    overrides = extractDotted(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  CLI::App app{"Aerial vision-language navigation simulator with scripted agents"};
  app.require_subcommand(1);
  app.footer(
      "Set any configuration key with --section.key value, e.g. --planner.safety_margin 0.5.\n"
      "ONFLY_OUT_DIR sets the default output directory.\n"
      "Exit codes: 0 ok, 1 configuration error, 2 runtime error.");

  bool serial = false;
  app.add_flag("--serial", serial, "Run every kernel serially");

  auto* run = app.add_subcommand("run", "Run one episode and write its artifacts");
  std::string config_path, world, run_out;
  std::optional<std::uint64_t> run_seed;
  bool debug = false;
  run->add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  run->add_option("-w,--world", world, "World file (overrides the config's 'world')");
  run->add_option("-s,--seed", run_seed, "Episode seed");
  run->add_option("-o,--out", run_out, "Output directory");
  run->add_flag("--debug", debug, "Write verifier debug rasters");

  auto* bench = app.add_subcommand("bench", "Run a benchmark suite and write the metrics table");
  std::string suite_path, bench_out;
  std::optional<int> repeats;
  std::optional<std::uint64_t> bench_seed;
  std::vector<std::string> only_rows;
  bench->add_option("suite", suite_path, "Suite file")->required()->check(CLI::ExistingFile);
  bench->add_option("-r,--repeats", repeats, "Repeats per world (overrides the suite)");
  bench->add_option("-s,--seed", bench_seed, "Base seed (overrides the suite)");
  bench->add_option("--rows", only_rows, "Only run these rows")->delimiter(',');
  bench->add_option("-o,--out", bench_out, "Output directory");

  auto* memcmp = app.add_subcommand("memcmp", "Compare memory policies on a synthetic flight");
  onfly::SyntheticStreamConfig stream;
  std::string memcmp_out;
  memcmp->add_option("--steps", stream.steps, "Monitoring steps")->capture_default_str();
  memcmp->add_option("--frames-per-step", stream.frames_per_step)->capture_default_str();
  memcmp->add_option("--step-length", stream.step_length, "Meters per monitoring step")
      ->capture_default_str();
  memcmp->add_option("--heading-wander", stream.heading_wander, "Per-frame heading noise (rad)")
      ->capture_default_str();
  memcmp->add_option("--feature-scale", stream.feature_scale)->capture_default_str();
  memcmp->add_option("--seed", stream.seed)->capture_default_str();
  memcmp->add_option("-o,--out", memcmp_out, "Output directory");

  std::vector<std::string> cli_args(args.rbegin(), args.rend());
  try {
    app.parse(cli_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmdRun(config_path, world, run_seed, run_out, debug, serial, overrides);
    if (*bench) {
      return cmdBench(suite_path, repeats, bench_seed, bench_out, only_rows, serial, overrides);
    }
    if (*memcmp) return cmdMemcmp(stream, overrides, memcmp_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
