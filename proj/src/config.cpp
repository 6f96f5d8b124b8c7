#include "onfly/config.hpp"

#include <cmath>
#include <fstream>

namespace onfly {

using nlohmann::json;

namespace {

std::string dilationUnitsName(DilationUnits u) {
  return u == DilationUnits::Metric ? "metric" : "pixels";
}

DilationUnits dilationUnitsFromString(const std::string& s) {
  if (s == "metric") return DilationUnits::Metric;
  if (s == "pixels") return DilationUnits::Pixels;
  throw ConfigError("verifier.dilation_units", "verifier.dilation_units: expected metric or pixels");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    const std::string full = section.empty() ? key : section + "." + key;
    throw ConfigError(full, full + ": wrong value type");
  }
}

}  // namespace

json toJson(const RunConfig& c) {
  const EpisodeConfig& e = c.episode;
  const SimConfig& s = e.sim;
  return {
      {"world", c.world},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"debug", c.debug},
      {"parallel", c.parallel},
      {"sim",
       {{"camera_fov_deg", s.camera_fov_deg},
        {"camera_width", s.camera_width},
        {"camera_height", s.camera_height},
        {"max_range", s.max_range},
        {"uav_radius", s.uav_radius},
        {"feature_noise", s.feature_noise},
        {"oracle_pixel_noise", s.oracle_pixel_noise},
        {"guide_lookahead", s.guide_lookahead},
        {"lost_angle_deg", s.lost_angle_deg},
        {"lost_checks", s.lost_checks},
        {"revisit_evidence_radius", s.revisit_evidence_radius},
        {"k_stable", s.k_stable},
        {"verifier_enabled", s.verifier_enabled},
        {"planner_enabled", s.planner_enabled},
        {"dual_agent", s.dual_agent},
        {"memory_policy", toString(s.memory_policy)},
        {"time_limit", s.time_limit}}},
      {"schedule",
       {{"physics_period_us", e.schedule.physics_period_us},
        {"decision_period_us", e.schedule.decision_period_us},
        {"monitoring_period_us", e.schedule.monitoring_period_us}}},
      {"memory",
       {{"segments", e.memory.segments},
        {"epsilon", e.memory.epsilon},
        {"neighbors", e.memory.neighbors},
        {"translation_threshold", e.memory.thresholds.translation},
        {"rotation_threshold", e.memory.thresholds.rotation}}},
      {"monitor_cost",
       {{"base_s", e.monitor_cost.base_s},
        {"per_token_s", e.monitor_cost.per_token_s},
        {"tokens_per_slot", e.monitor_cost.tokens_per_slot}}},
      {"verifier",
       {{"tau", e.verifier.tau},
        {"roi_half_extent", e.verifier.roi_half_extent},
        {"max_depth", e.verifier.max_depth},
        {"dilation_radius", e.verifier.dilation_radius},
        {"dilation_units", dilationUnitsName(e.verifier.dilation_units)},
        {"sigma_theta", e.verifier.sigma_theta},
        {"obstacle_depth_margin", e.verifier.obstacle_depth_margin},
        {"min_conversion_depth", e.verifier.min_conversion_depth}}},
      {"planner",
       {{"resolution", e.planner.resolution},
        {"local_extent", e.planner.local_extent},
        {"truncation", e.planner.truncation},
        {"safety_margin", e.planner.safety_margin},
        {"search_inflation", e.planner.search_inflation},
        {"clearance_target", e.planner.clearance_target},
        {"replan_period", e.planner.replan_period},
        {"horizon", e.planner.horizon},
        {"dt", e.planner.dt},
        {"lambda_psi", e.planner.lambda_psi},
        {"lambda_smooth", e.planner.lambda_smooth},
        {"lambda_clearance", e.planner.lambda_clearance},
        {"max_smooth_iterations", e.planner.max_smooth_iterations},
        {"stuck_after_failures", e.planner.stuck_after_failures},
        {"z_min", e.planner.z_min},
        {"z_max", e.planner.z_max},
        {"goal_tolerance", e.planner.goal_tolerance},
        {"integration_range", e.planner.integration_range}}},
      {"limits",
       {{"v_max", e.limits.v_max},
        {"a_max", e.limits.a_max},
        {"yaw_rate_max", e.limits.yaw_rate_max}}},
  };
}

RunConfig runConfigFromJson(const json& j) {
  // Reject unknown keys by checking against the default document.
  json doc = toJson(RunConfig{});
  mergeChecked(doc, j);

  RunConfig c;
  read(doc, "world", c.world, "");
  read(doc, "seed", c.seed, "");
  read(doc, "output_dir", c.output_dir, "");
  read(doc, "debug", c.debug, "");
  read(doc, "parallel", c.parallel, "");
  EpisodeConfig& e = c.episode;
  e.exec = c.parallel ? Execution::Parallel : Execution::Serial;

  const json& s = doc["sim"];
  SimConfig& sc = e.sim;
  read(s, "camera_fov_deg", sc.camera_fov_deg, "sim");
  read(s, "camera_width", sc.camera_width, "sim");
  read(s, "camera_height", sc.camera_height, "sim");
  read(s, "max_range", sc.max_range, "sim");
  read(s, "uav_radius", sc.uav_radius, "sim");
  read(s, "feature_noise", sc.feature_noise, "sim");
  read(s, "oracle_pixel_noise", sc.oracle_pixel_noise, "sim");
  read(s, "guide_lookahead", sc.guide_lookahead, "sim");
  read(s, "lost_angle_deg", sc.lost_angle_deg, "sim");
  read(s, "lost_checks", sc.lost_checks, "sim");
  read(s, "revisit_evidence_radius", sc.revisit_evidence_radius, "sim");
  read(s, "k_stable", sc.k_stable, "sim");
  read(s, "verifier_enabled", sc.verifier_enabled, "sim");
  read(s, "planner_enabled", sc.planner_enabled, "sim");
  read(s, "dual_agent", sc.dual_agent, "sim");
  read(s, "time_limit", sc.time_limit, "sim");
  try {
    sc.memory_policy = memoryPolicyFromString(s["memory_policy"].get<std::string>());
  } catch (const std::exception&) {
    throw ConfigError("sim.memory_policy",
                      "sim.memory_policy: expected hybrid, sliding or time-sampling");
  }

  const json& sch = doc["schedule"];
  read(sch, "physics_period_us", e.schedule.physics_period_us, "schedule");
  read(sch, "decision_period_us", e.schedule.decision_period_us, "schedule");
  read(sch, "monitoring_period_us", e.schedule.monitoring_period_us, "schedule");

  const json& m = doc["memory"];
  read(m, "segments", e.memory.segments, "memory");
  read(m, "epsilon", e.memory.epsilon, "memory");
  read(m, "neighbors", e.memory.neighbors, "memory");
  read(m, "translation_threshold", e.memory.thresholds.translation, "memory");
  read(m, "rotation_threshold", e.memory.thresholds.rotation, "memory");

  const json& mc = doc["monitor_cost"];
  read(mc, "base_s", e.monitor_cost.base_s, "monitor_cost");
  read(mc, "per_token_s", e.monitor_cost.per_token_s, "monitor_cost");
  read(mc, "tokens_per_slot", e.monitor_cost.tokens_per_slot, "monitor_cost");

  const json& v = doc["verifier"];
  read(v, "tau", e.verifier.tau, "verifier");
  read(v, "roi_half_extent", e.verifier.roi_half_extent, "verifier");
  read(v, "max_depth", e.verifier.max_depth, "verifier");
  read(v, "dilation_radius", e.verifier.dilation_radius, "verifier");
  e.verifier.dilation_units = dilationUnitsFromString(v["dilation_units"].get<std::string>());
  read(v, "sigma_theta", e.verifier.sigma_theta, "verifier");
  read(v, "obstacle_depth_margin", e.verifier.obstacle_depth_margin, "verifier");
  read(v, "min_conversion_depth", e.verifier.min_conversion_depth, "verifier");

  const json& p = doc["planner"];
  PlannerConfig& pc = e.planner;
  read(p, "resolution", pc.resolution, "planner");
  read(p, "local_extent", pc.local_extent, "planner");
  read(p, "truncation", pc.truncation, "planner");
  read(p, "safety_margin", pc.safety_margin, "planner");
  read(p, "search_inflation", pc.search_inflation, "planner");
  read(p, "clearance_target", pc.clearance_target, "planner");
  read(p, "replan_period", pc.replan_period, "planner");
  read(p, "horizon", pc.horizon, "planner");
  read(p, "dt", pc.dt, "planner");
  read(p, "lambda_psi", pc.lambda_psi, "planner");
  read(p, "lambda_smooth", pc.lambda_smooth, "planner");
  read(p, "lambda_clearance", pc.lambda_clearance, "planner");
  read(p, "max_smooth_iterations", pc.max_smooth_iterations, "planner");
  read(p, "stuck_after_failures", pc.stuck_after_failures, "planner");
  read(p, "z_min", pc.z_min, "planner");
  read(p, "z_max", pc.z_max, "planner");
  read(p, "goal_tolerance", pc.goal_tolerance, "planner");
  read(p, "integration_range", pc.integration_range, "planner");

  const json& l = doc["limits"];
  read(l, "v_max", e.limits.v_max, "limits");
  read(l, "a_max", e.limits.a_max, "limits");
  read(l, "yaw_rate_max", e.limits.yaw_rate_max, "limits");

  try {
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("", std::string("invalid configuration: ") + ex.what());
  }
  return c;
}

void mergeChecked(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError(prefix, (prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (!base.is_object() || !base.contains(key)) {
      throw ConfigError(full, "unknown configuration key '" + full + "'");
    }
    json& target = base[key];
    if (target.is_object()) {
      mergeChecked(target, value, full);
      continue;
    }
    const bool both_numbers = target.is_number() && value.is_number();
    if (!both_numbers && target.type() != value.type()) {
      throw ConfigError(full, "configuration key '" + full + "': wrong value type");
    }
    if (target.is_number_integer() && value.is_number_float()) {
      const double d = value.get<double>();
      if (d != std::floor(d)) {
        throw ConfigError(full, "configuration key '" + full + "': expected an integer");
      }
      target = static_cast<std::int64_t>(d);
      continue;
    }
    if (target.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
      throw ConfigError(full, "configuration key '" + full + "': expected a non-negative integer");
    }
    if (target.is_number_float() && value.is_number_integer()) {
      target = value.get<double>();
      continue;
    }
    target = value;
  }
}

namespace {

json dottedPatch(const std::string& dotted_key, json value) {
  if (dotted_key.empty()) throw ConfigError(dotted_key, "empty configuration key");
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = dotted_key.find('.', start);
    parts.push_back(dotted_key.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  json patch = std::move(value);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError(dotted_key, "malformed configuration key '" + dotted_key + "'");
    patch = json{{*it, std::move(patch)}};
  }
  return patch;
}

}  // namespace

void applyOverride(json& doc, const std::string& dotted_key, const std::string& text) {
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  // Keep quoted-less strings that happen to parse as something else (e.g. "7") numeric
  // only when the target expects a number; mergeChecked reports mismatches.
  mergeChecked(doc, dottedPatch(dotted_key, value));
}

json readJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), "'" + path.string() + "': " + e.what());
  }
}

RunConfig loadRunConfig(const std::filesystem::path& file,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc = toJson(RunConfig{});
  if (!file.empty()) mergeChecked(doc, readJsonFile(file));
  for (const auto& [k, v] : overrides) applyOverride(doc, k, v);
  return runConfigFromJson(doc);
}

Suite loadSuite(const std::filesystem::path& path) {
  const json j = readJsonFile(path);
  if (!j.is_object()) throw ConfigError(path.string(), "suite: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "worlds" && k != "repeats" && k != "seed" && k != "base" && k != "rows") {
      throw ConfigError(k, "suite: unknown key '" + k + "'");
    }
  }
  Suite s;
  const auto dir = path.parent_path();
  if (!j.contains("worlds") || !j["worlds"].is_array() || j["worlds"].empty()) {
    throw ConfigError("worlds", "suite: 'worlds' must be a non-empty array");
  }
  for (const auto& w : j["worlds"]) {
    std::filesystem::path p = w.get<std::string>();
    if (p.is_relative()) p = dir / p;
    s.worlds.push_back(p.lexically_normal().string());
  }
  if (j.contains("repeats")) s.repeats = j["repeats"].get<int>();
  if (s.repeats < 1) throw ConfigError("repeats", "suite: 'repeats' must be >= 1");
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("base")) s.base = j["base"];
  if (j.contains("rows")) {
    for (const auto& r : j["rows"]) {
      s.rows.push_back({r.at("name").get<std::string>(), r.value("overrides", json::object())});
    }
  }
  if (s.rows.empty()) s.rows.push_back({"full", json::object()});
  return s;
}

std::vector<BenchmarkRow> suiteRows(const Suite& suite,
                                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<BenchmarkRow> rows;
  for (const SuiteRow& r : suite.rows) {
    json doc = toJson(RunConfig{});
    mergeChecked(doc, suite.base);
    for (const auto& [k, v] : r.overrides.items()) mergeChecked(doc, dottedPatch(k, v));
    for (const auto& [k, v] : overrides) applyOverride(doc, k, v);
    rows.push_back({r.name, runConfigFromJson(doc).episode});
  }
  return rows;
}

}  // namespace onfly
