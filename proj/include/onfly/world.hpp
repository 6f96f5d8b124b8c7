#pragma once

// Synthetic voxel worlds: an arena with a floor and boundary walls, labeled boxes,
// a start pose, an instruction split into subtasks, and per-subtask ground truth.
//
// World files are JSON:
//   {
//     "name": "corridor",
//     "resolution": 0.2, "size": [24, 12, 4], "origin": [0, 0, -0.2],
//     "feature_dim": 16, "feature_seed": 7,
//     "boxes": [{"min": [5, 0, 0], "max": [6, 7, 3], "label": "shelf"}],
//     "start": {"position": [2, 6, 1.5], "yaw": 0},
//     "instruction": "fly to the red door; then come back to the start",
//     "delimiter": ";",
//     "subtasks": [{"landmark": 1, "goal": [20, 6, 1.5], "radius": 2.5, "revisit": false}],
//     "goal_radius": 5.0, "time_limit": 70
//   }
// "landmark" indexes "boxes"; the subtask text is the matching instruction piece.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "onfly/geometry.hpp"
#include "onfly/planner.hpp"

namespace onfly {

struct Box {
  Vec3 min;
  Vec3 max;
  std::string label;

  bool contains(const Vec3& p, double pad = 0.0) const {
    return p.x >= min.x - pad && p.x <= max.x + pad && p.y >= min.y - pad &&
           p.y <= max.y + pad && p.z >= min.z - pad && p.z <= max.z + pad;
  }
  Vec3 center() const { return (min + max) * 0.5; }
};

struct SubtaskSpec {
  int landmark = -1;
  Vec3 goal;
  double radius = 2.5;  // arrival radius the monitor uses
  /// Returning to a place seen before the subtask began; the monitor needs evidence
  /// of it in memory.
  bool revisit = false;
};

struct WorldSpec {
  std::string name = "world";
  double resolution = 0.2;
  Vec3 size{20.0, 20.0, 4.0};
  Vec3 origin{0.0, 0.0, -0.2};
  int feature_dim = 16;
  std::uint64_t feature_seed = 1;
  std::vector<Box> boxes;
  Vec3 start_position{2.0, 2.0, 1.5};
  double start_yaw = 0.0;
  std::string instruction;
  char delimiter = ';';
  std::vector<SubtaskSpec> subtasks;
  double goal_radius = 5.0;
  double time_limit = 70.0;
};

nlohmann::json toJson(const WorldSpec& spec);
/// Throws std::invalid_argument naming the offending key.
WorldSpec worldSpecFromJson(const nlohmann::json& j);
WorldSpec loadWorldSpec(const std::filesystem::path& path);

/// Label ids: 0 = nothing hit, 1 = floor, 2 = boundary wall, then one per distinct box label.
inline constexpr std::uint16_t kLabelNone = 0;
inline constexpr std::uint16_t kLabelFloor = 1;
inline constexpr std::uint16_t kLabelWall = 2;

class World {
 public:
  /// Voxelizes the spec (a cell is occupied when its center lies in a box, the floor
  /// layer or the boundary ring) and precomputes the ground-truth ESDF and guide fields.
  explicit World(WorldSpec spec);

  const WorldSpec& spec() const { return spec_; }
  const GridGeometry& geometry() const { return occupancy_.geometry(); }
  const OccupancyGrid& occupancy() const { return occupancy_; }
  const EsdfGrid& esdf() const { return esdf_; }
  std::uint16_t label(const Cell& c) const { return labels_[geometry().index(c)]; }
  const std::vector<std::string>& labelNames() const { return label_names_; }
  /// Unit-norm feature per label id.
  const std::vector<std::vector<double>>& featureTable() const { return features_; }
  bool insideBounds(const Vec3& p) const;

  /// Flight-altitude path distance to a subtask goal (meters, +inf where unreachable).
  double guideDistance(std::size_t subtask, const Cell& planar) const;
  /// Descends the guide field from `from`; points at flight altitude, spaced one cell.
  std::vector<Vec3> guidePath(std::size_t subtask, const Vec3& from, double max_length) const;
  /// Flight altitude used by the guide fields.
  double flightAltitude() const { return spec_.start_position.z; }

  std::vector<std::string> subtaskTexts() const;

 private:
  WorldSpec spec_;
  OccupancyGrid occupancy_;
  EsdfGrid esdf_;
  std::vector<std::uint16_t> labels_;
  std::vector<std::string> label_names_;
  std::vector<std::vector<double>> features_;
  // Per subtask, row-major nx * ny planar distances.
  std::vector<std::vector<double>> guide_;
};

/// True iff some occupied voxel center lies within `radius` of p (distance <= radius).
bool checkCollision(const World& world, const Vec3& p, double radius);

/// Distance from p to the nearest occupied voxel center (searched up to `cap`).
double clearanceAt(const World& world, const Vec3& p, double cap);

}  // namespace onfly
