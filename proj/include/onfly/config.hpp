#pragma once

// Run configuration as JSON. Every key has a default; a config file or a
// --dotted.key override may only set keys that exist in the default document, and
// only with a value of the same JSON type.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "onfly/sim.hpp"

namespace onfly {

/// Configuration problem; `key()` names the offending key or path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::string world;
  std::uint64_t seed = 1;
  std::string output_dir;
  bool debug = false;
  bool parallel = true;
  EpisodeConfig episode;
};

nlohmann::json toJson(const RunConfig& config);
RunConfig runConfigFromJson(const nlohmann::json& j);

/// Recursively overlays `patch` onto `base`; unknown keys and type changes throw ConfigError.
void mergeChecked(nlohmann::json& base, const nlohmann::json& patch, const std::string& prefix = "");

/// Sets a dotted key ("planner.safety_margin") from its command-line text. The text is
/// read as JSON when possible (numbers, booleans) and as a string otherwise.
void applyOverride(nlohmann::json& doc, const std::string& dotted_key, const std::string& text);

nlohmann::json readJsonFile(const std::filesystem::path& path);

/// Defaults, then the optional file, then overrides in order (last writer wins).
RunConfig loadRunConfig(const std::filesystem::path& file,
                        const std::vector<std::pair<std::string, std::string>>& overrides);

/// Benchmark suite: worlds, repeats, seed, base config patch and ablation rows.
struct SuiteRow {
  std::string name;
  nlohmann::json overrides;  // dotted key -> value
};

struct Suite {
  std::vector<std::string> worlds;  // resolved paths
  int repeats = 3;
  std::uint64_t seed = 1;
  nlohmann::json base = nlohmann::json::object();
  std::vector<SuiteRow> rows;
};

/// World paths are resolved relative to the suite file.
Suite loadSuite(const std::filesystem::path& path);

/// Builds the per-row episode configs from the defaults + base + row overrides
/// (+ command-line overrides applied last to every row).
std::vector<BenchmarkRow> suiteRows(const Suite& suite,
                                    const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace onfly
