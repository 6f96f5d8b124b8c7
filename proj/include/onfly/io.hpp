#pragma once

// Artifact writers. Every file is produced from a string built in memory, so the
// same inputs always give byte-identical files.
//
// Episode directory:
//   result.json        summary metrics (schema "onfly.result/1")
//   trajectory.csv     t,x,y,z,vx,vy,vz,yaw,clearance
//   events.jsonl       {"t_us", "type", "data"} per line
//   ticks.csv          t_us,kind,scheduled_us
//   memory.jsonl       one memory snapshot per monitoring tick
//   monitoring.jsonl   monitoring audit (status and memory slots per call)
//   config_echo.json   the fully resolved run configuration
//   debug/*.pgm        verifier rasters when debug is on
// Benchmark directory: bench.json, bench.csv, bench.md, episodes.csv.
// Memory comparison directory: memcmp.json, memcmp.csv (per-step series).

#include <filesystem>
#include <string>

#include <json.hpp>

#include "onfly/hybrid_memory.hpp"
#include "onfly/sim.hpp"

namespace onfly {

/// Fixed-precision decimal ("%.6f"), used by all CSV and markdown output.
std::string formatNumber(double v, int precision = 6);

nlohmann::json resultJson(const EpisodeResult& result);
std::string trajectoryCsv(const EpisodeResult& result);
std::string eventsJsonl(const EpisodeResult& result);
std::string ticksCsv(const EpisodeResult& result);
std::string memoryJsonl(const EpisodeResult& result);
std::string monitoringJsonl(const EpisodeResult& result);

/// Binary PGM (P5) of an 8-bit raster.
std::string pgm(int width, int height, const std::vector<std::uint8_t>& pixels);

void writeTextFile(const std::filesystem::path& path, const std::string& content);

void writeEpisodeArtifacts(const std::filesystem::path& dir, const EpisodeResult& result,
                           const nlohmann::json& config_echo);

nlohmann::json benchmarkJson(const BenchmarkTable& table);
std::string benchmarkCsv(const BenchmarkTable& table);
/// Rows = configurations, columns SR / OSR / CR / FT / prefix reuse.
std::string benchmarkMarkdown(const BenchmarkTable& table);
std::string benchmarkEpisodesCsv(const BenchmarkTable& table);
void writeBenchmarkArtifacts(const std::filesystem::path& dir, const BenchmarkTable& table);

nlohmann::json memcmpJson(const MemoryComparison& cmp, const SyntheticStreamConfig& stream,
                          const HybridMemoryConfig& memory, std::int64_t tokens_per_slot);
/// step,hybrid,sliding,time-sampling
std::string memcmpCsv(const MemoryComparison& cmp);
void writeMemcmpArtifacts(const std::filesystem::path& dir, const MemoryComparison& cmp,
                          const SyntheticStreamConfig& stream, const HybridMemoryConfig& memory,
                          std::int64_t tokens_per_slot);

}  // namespace onfly
