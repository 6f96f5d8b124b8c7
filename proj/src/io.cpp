#include "onfly/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace onfly {

using nlohmann::json;

namespace {

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

// JSON has no infinity; unbounded values are written as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json summaryJson(const MetricSummary& m) {
  return {{"sr", m.sr}, {"osr", m.osr}, {"cr", m.cr}, {"ft", m.ft},
          {"prefix_reuse", m.prefix_reuse}, {"episodes", m.episodes}};
}

json winnersJson(const SegmentWinners& w) {
  json a = json::array();
  for (const auto& id : w) a.push_back(id ? json(*id) : json(nullptr));
  return a;
}

}  // namespace

std::string formatNumber(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  std::string s = buf;
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
    // Avoid "-0.000000" so equal results print identically.
    if (!s.empty() && s[0] == '-') s.erase(0, 1);
  }
  return s;
}

json resultJson(const EpisodeResult& r) {
  return {
      {"schema", "onfly.result/1"},
      {"world", r.world},
      {"seed", r.seed},
      {"success", r.success},
      {"oracle_success", r.oracle_success},
      {"collided", r.collided},
      {"flight_time", r.flight_time},
      {"termination", r.termination},
      {"final_distance", number(r.final_distance)},
      {"min_clearance", number(r.min_clearance)},
      {"clearance_violations", r.clearance_violations},
      {"subtasks_completed", r.subtasks_completed},
      {"feature_extractions", r.feature_extractions},
      {"frames", r.frames},
      {"decompose_calls", r.decompose_calls},
      {"decision_ticks", r.decision_ticks},
      {"monitor_ticks", r.monitor_ticks},
      {"replans", r.replans},
      {"replan_failures", r.replan_failures},
      {"mean_prefix_reuse", r.mean_prefix_reuse},
      {"prefix_reuse", r.prefix_reuse},
  };
}

std::string trajectoryCsv(const EpisodeResult& r) {
  std::string out = "t,x,y,z,vx,vy,vz,yaw,clearance\n";
  for (const ExecutedSample& s : r.trajectory) {
    out += formatNumber(s.t, 3) + ',' + formatNumber(s.position.x) + ',' +
           formatNumber(s.position.y) + ',' + formatNumber(s.position.z) + ',' +
           formatNumber(s.velocity.x) + ',' + formatNumber(s.velocity.y) + ',' +
           formatNumber(s.velocity.z) + ',' + formatNumber(s.yaw) + ',' +
           formatNumber(s.clearance) + '\n';
  }
  return out;
}

std::string eventsJsonl(const EpisodeResult& r) {
  std::string out;
  for (const EventRecord& e : r.events) {
    out += json{{"t_us", e.t_us}, {"type", e.type}, {"data", e.data}}.dump() + '\n';
  }
  return out;
}

std::string ticksCsv(const EpisodeResult& r) {
  std::string out = "t_us,kind,scheduled_us\n";
  for (const Tick& t : r.ticks) {
    out += std::to_string(t.time_us) + ',' + toString(t.kind) + ',' +
           std::to_string(t.scheduled_us) + '\n';
  }
  return out;
}

std::string memoryJsonl(const EpisodeResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.memory.size(); ++i) {
    const MemorySnapshot& m = r.memory[i];
    json j = {{"step", m.step},
              {"total_distance", m.total_distance},
              {"pool", m.pool_ids},
              {"segments", m.segments},
              {"winners", winnersJson(m.winners)},
              {"list", m.list},
              {"slots", m.memory.slots}};
    if (i < r.prefix_reuse.size()) j["prefix_reuse"] = r.prefix_reuse[i];
    out += j.dump() + '\n';
  }
  return out;
}

std::string monitoringJsonl(const EpisodeResult& r) {
  std::string out;
  for (const MonitoringRecord& m : r.monitoring) {
    out += json{{"t_us", m.time_us},
                {"subtask", m.subtask_index},
                {"status", toString(m.status)},
                {"slots", m.slots}}
               .dump() +
           '\n';
  }
  return out;
}

std::string pgm(int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (width < 0 || height < 0 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("pgm: pixel count does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(width) + ' ' + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

void writeTextFile(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void writeEpisodeArtifacts(const std::filesystem::path& dir, const EpisodeResult& r,
                           const json& config_echo) {
  writeTextFile(dir / "result.json", resultJson(r).dump(2) + '\n');
  writeTextFile(dir / "trajectory.csv", trajectoryCsv(r));
  writeTextFile(dir / "events.jsonl", eventsJsonl(r));
  writeTextFile(dir / "ticks.csv", ticksCsv(r));
  writeTextFile(dir / "memory.jsonl", memoryJsonl(r));
  writeTextFile(dir / "monitoring.jsonl", monitoringJsonl(r));
  writeTextFile(dir / "config_echo.json", config_echo.dump(2) + '\n');

  // Gray levels: feasible 64, similar 128, connected component 192, refined pixel 255.
  for (std::size_t i = 0; i < r.debug.size(); ++i) {
    const DebugRaster& d = r.debug[i];
    std::vector<std::uint8_t> px(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height), 0);
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const Pixel p{x, y};
        std::uint8_t v = 0;
        if (d.trace.feasible.contains(p) && d.trace.feasible[p]) v = 64;
        if (d.trace.similarity.test(p)) v = 128;
        if (d.trace.component.test(p)) v = 192;
        px[static_cast<std::size_t>(y) * static_cast<std::size_t>(d.width) + static_cast<std::size_t>(x)] = v;
      }
    }
    const Pixel rp = d.trace.refined.pixel;
    if (rp.x >= 0 && rp.x < d.width && rp.y >= 0 && rp.y < d.height) {
      px[static_cast<std::size_t>(rp.y) * static_cast<std::size_t>(d.width) + static_cast<std::size_t>(rp.x)] = 255;
    }
    char name[64];
    std::snprintf(name, sizeof name, "verify_%04zu_step%06lld.pgm", i,
                  static_cast<long long>(d.step));
    writeTextFile(dir / "debug" / name, pgm(d.width, d.height, px));
  }
}

json benchmarkJson(const BenchmarkTable& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    json per_world = json::object();
    for (std::size_t w = 0; w < t.worlds.size(); ++w) {
      per_world[t.worlds[w]] = summaryJson(t.per_world[r][w]);
    }
    rows.push_back({{"name", t.rows[r]}, {"aggregate", summaryJson(t.aggregate[r])},
                    {"per_world", per_world}});
  }
  json episodes = json::array();
  for (const BenchmarkEpisode& e : t.episodes) {
    episodes.push_back({{"row", e.row},
                        {"world", e.world},
                        {"repeat", e.repeat},
                        {"seed", e.seed},
                        {"success", e.success},
                        {"oracle_success", e.oracle_success},
                        {"collided", e.collided},
                        {"flight_time", e.flight_time},
                        {"min_clearance", number(e.min_clearance)},
                        {"clearance_violations", e.clearance_violations},
                        {"mean_prefix_reuse", e.mean_prefix_reuse},
                        {"termination", e.termination},
                        {"error", e.error}});
  }
  return {{"schema", "onfly.bench/1"}, {"worlds", t.worlds}, {"rows", rows},
          {"episodes", episodes}};
}

std::string benchmarkCsv(const BenchmarkTable& t) {
  std::string out = "row,sr,osr,cr,ft,prefix_reuse,episodes\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const MetricSummary& m = t.aggregate[r];
    out += t.rows[r] + ',' + formatNumber(m.sr) + ',' + formatNumber(m.osr) + ',' +
           formatNumber(m.cr) + ',' + formatNumber(m.ft) + ',' + formatNumber(m.prefix_reuse) +
           ',' + std::to_string(m.episodes) + '\n';
  }
  return out;
}

std::string benchmarkMarkdown(const BenchmarkTable& t) {
  std::string out = "| Method | SR (%) | OSR (%) | CR (%) | FT (s) | Prefix reuse (tokens) |\n";
  out += "|---|---:|---:|---:|---:|---:|\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const MetricSummary& m = t.aggregate[r];
    out += "| " + t.rows[r] + " | " + formatNumber(100.0 * m.sr, 1) + " | " +
           formatNumber(100.0 * m.osr, 1) + " | " + formatNumber(100.0 * m.cr, 1) + " | " +
           formatNumber(m.ft, 1) + " | " + formatNumber(m.prefix_reuse, 1) + " |\n";
  }
  return out;
}

std::string benchmarkEpisodesCsv(const BenchmarkTable& t) {
  std::string out =
      "row,world,repeat,seed,success,oracle_success,collided,flight_time,min_clearance,"
      "clearance_violations,mean_prefix_reuse,termination,error\n";
  for (const BenchmarkEpisode& e : t.episodes) {
    std::string err = e.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ' ';
    }
    out += e.row + ',' + e.world + ',' + std::to_string(e.repeat) + ',' +
           std::to_string(e.seed) + ',' + (e.success ? "1" : "0") + ',' +
           (e.oracle_success ? "1" : "0") + ',' + (e.collided ? "1" : "0") + ',' +
           formatNumber(e.flight_time, 3) + ',' + formatNumber(e.min_clearance) + ',' +
           std::to_string(e.clearance_violations) + ',' + formatNumber(e.mean_prefix_reuse, 3) +
           ',' + e.termination + ',' + err + '\n';
  }
  return out;
}

void writeBenchmarkArtifacts(const std::filesystem::path& dir, const BenchmarkTable& t) {
  writeTextFile(dir / "bench.json", benchmarkJson(t).dump(2) + '\n');
  writeTextFile(dir / "bench.csv", benchmarkCsv(t));
  writeTextFile(dir / "bench.md", benchmarkMarkdown(t));
  writeTextFile(dir / "episodes.csv", benchmarkEpisodesCsv(t));
}

json memcmpJson(const MemoryComparison& cmp, const SyntheticStreamConfig& s,
                const HybridMemoryConfig& memory, std::int64_t tokens_per_slot) {
  json policies = json::array();
  for (const PolicyReuse& p : cmp.policies) {
    policies.push_back({{"policy", toString(p.kind)}, {"mean_prefix_reuse", p.mean},
                        {"series", p.series}});
  }
  return {{"schema", "onfly.memcmp/1"},
          {"stream",
           {{"steps", s.steps},
            {"frames_per_step", s.frames_per_step},
            {"step_length", s.step_length},
            {"heading_wander", s.heading_wander},
            {"feature_scale", s.feature_scale},
            {"feature_dim", s.feature_dim},
            {"seed", s.seed}}},
          {"memory",
           {{"segments", memory.segments},
            {"epsilon", memory.epsilon},
            {"neighbors", memory.neighbors}}},
          {"tokens_per_slot", tokens_per_slot},
          {"policies", policies},
          {"hybrid_over_sliding", number(cmp.hybrid_over_sliding)}};
}

std::string memcmpCsv(const MemoryComparison& cmp) {
  std::string out = "step";
  for (const PolicyReuse& p : cmp.policies) out += ',' + toString(p.kind);
  out += '\n';
  const std::size_t n = cmp.policies.empty() ? 0 : cmp.policies.front().series.size();
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i);
    for (const PolicyReuse& p : cmp.policies) out += ',' + std::to_string(p.series[i]);
    out += '\n';
  }
  return out;
}

void writeMemcmpArtifacts(const std::filesystem::path& dir, const MemoryComparison& cmp,
                          const SyntheticStreamConfig& stream, const HybridMemoryConfig& memory,
                          std::int64_t tokens_per_slot) {
  writeTextFile(dir / "memcmp.json", memcmpJson(cmp, stream, memory, tokens_per_slot).dump(2) + '\n');
  writeTextFile(dir / "memcmp.csv", memcmpCsv(cmp));
}

}  // namespace onfly
