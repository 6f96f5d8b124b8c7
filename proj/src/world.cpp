#include "onfly/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

#include "onfly/hybrid_memory.hpp"
#include "onfly/rng.hpp"

namespace onfly {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw std::invalid_argument("world: key '" + key + "': " + why);
}

Vec3 readVec3(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) bad(key, "expected an array of 3 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) bad(key, "expected an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json writeVec3(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

void checkKeys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) bad(where.empty() ? k : where + "." + k, "unknown key");
  }
}

double readNumber(const json& j, const std::string& key) {
  if (!j.is_number()) bad(key, "expected a number");
  return j.get<double>();
}

}  // namespace

json toJson(const WorldSpec& s) {
  json boxes = json::array();
  for (const Box& b : s.boxes) {
    boxes.push_back({{"min", writeVec3(b.min)}, {"max", writeVec3(b.max)}, {"label", b.label}});
  }
  json subtasks = json::array();
  for (const SubtaskSpec& t : s.subtasks) {
    subtasks.push_back({{"landmark", t.landmark},
                        {"goal", writeVec3(t.goal)},
                        {"radius", t.radius},
                        {"revisit", t.revisit}});
  }
  return {{"name", s.name},
          {"resolution", s.resolution},
          {"size", writeVec3(s.size)},
          {"origin", writeVec3(s.origin)},
          {"feature_dim", s.feature_dim},
          {"feature_seed", s.feature_seed},
          {"boxes", boxes},
          {"start", {{"position", writeVec3(s.start_position)}, {"yaw", s.start_yaw}}},
          {"instruction", s.instruction},
          {"delimiter", std::string(1, s.delimiter)},
          {"subtasks", subtasks},
          {"goal_radius", s.goal_radius},
          {"time_limit", s.time_limit}};
}

WorldSpec worldSpecFromJson(const json& j) {
  checkKeys(j, "",
            {"name", "resolution", "size", "origin", "feature_dim", "feature_seed", "boxes",
             "start", "instruction", "delimiter", "subtasks", "goal_radius", "time_limit"});
  WorldSpec s;
  if (j.contains("name")) s.name = j["name"].get<std::string>();
  if (j.contains("resolution")) s.resolution = readNumber(j["resolution"], "resolution");
  if (!(s.resolution > 0.0)) bad("resolution", "must be > 0");
  if (j.contains("size")) s.size = readVec3(j["size"], "size");
  if (!(s.size.x > 0 && s.size.y > 0 && s.size.z > 0)) bad("size", "must be positive");
  if (j.contains("origin")) s.origin = readVec3(j["origin"], "origin");
  if (j.contains("feature_dim")) s.feature_dim = j["feature_dim"].get<int>();
  if (s.feature_dim < 2) bad("feature_dim", "must be >= 2");
  if (j.contains("feature_seed")) s.feature_seed = j["feature_seed"].get<std::uint64_t>();
  if (j.contains("boxes")) {
    if (!j["boxes"].is_array()) bad("boxes", "expected an array");
    for (std::size_t i = 0; i < j["boxes"].size(); ++i) {
      const auto& b = j["boxes"][i];
      const std::string key = "boxes[" + std::to_string(i) + "]";
      checkKeys(b, key, {"min", "max", "label"});
      if (!b.contains("min") || !b.contains("max")) bad(key, "needs min and max");
      Box box{readVec3(b["min"], key + ".min"), readVec3(b["max"], key + ".max"),
              b.value("label", std::string("box"))};
      if (!(box.max.x > box.min.x && box.max.y > box.min.y && box.max.z > box.min.z)) {
        bad(key, "max must exceed min on every axis");
      }
      s.boxes.push_back(box);
    }
  }
  if (j.contains("start")) {
    checkKeys(j["start"], "start", {"position", "yaw"});
    if (j["start"].contains("position")) {
      s.start_position = readVec3(j["start"]["position"], "start.position");
    }
    if (j["start"].contains("yaw")) s.start_yaw = readNumber(j["start"]["yaw"], "start.yaw");
  }
  if (j.contains("instruction")) s.instruction = j["instruction"].get<std::string>();
  if (j.contains("delimiter")) {
    const auto d = j["delimiter"].get<std::string>();
    if (d.size() != 1) bad("delimiter", "must be a single character");
    s.delimiter = d[0];
  }
  if (j.contains("subtasks")) {
    if (!j["subtasks"].is_array()) bad("subtasks", "expected an array");
    for (std::size_t i = 0; i < j["subtasks"].size(); ++i) {
      const auto& t = j["subtasks"][i];
      const std::string key = "subtasks[" + std::to_string(i) + "]";
      checkKeys(t, key, {"landmark", "goal", "radius", "revisit"});
      SubtaskSpec st;
      st.landmark = t.value("landmark", -1);
      if (st.landmark < -1 || st.landmark >= static_cast<int>(s.boxes.size())) {
        bad(key + ".landmark", "not a box index");
      }
      if (!t.contains("goal")) bad(key + ".goal", "missing");
      st.goal = readVec3(t["goal"], key + ".goal");
      if (t.contains("radius")) st.radius = readNumber(t["radius"], key + ".radius");
      if (!(st.radius > 0.0)) bad(key + ".radius", "must be > 0");
      st.revisit = t.value("revisit", false);
      s.subtasks.push_back(st);
    }
  }
  if (s.subtasks.empty()) bad("subtasks", "at least one subtask is required");
  if (j.contains("goal_radius")) s.goal_radius = readNumber(j["goal_radius"], "goal_radius");
  if (!(s.goal_radius > 0.0)) bad("goal_radius", "must be > 0");
  if (j.contains("time_limit")) s.time_limit = readNumber(j["time_limit"], "time_limit");
  if (!(s.time_limit > 0.0)) bad("time_limit", "must be > 0");
  return s;
}

WorldSpec loadWorldSpec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("world: cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("world: '" + path.string() + "': " + e.what());
  }
  return worldSpecFromJson(j);
}

World::World(WorldSpec spec) : spec_(std::move(spec)) {
  GridGeometry geo;
  geo.resolution = spec_.resolution;
  geo.origin = spec_.origin;
  geo.dims = {static_cast<int>(std::lround(spec_.size.x / spec_.resolution)),
              static_cast<int>(std::lround(spec_.size.y / spec_.resolution)),
              static_cast<int>(std::lround(spec_.size.z / spec_.resolution))};
  occupancy_ = OccupancyGrid(geo);
  labels_.assign(geo.cellCount(), kLabelNone);

  label_names_ = {"none", "floor", "wall"};
  std::map<std::string, std::uint16_t> ids;
  auto idOf = [&](const std::string& name) {
    if (auto it = ids.find(name); it != ids.end()) return it->second;
    const auto id = static_cast<std::uint16_t>(label_names_.size());
    label_names_.push_back(name);
    ids.emplace(name, id);
    return id;
  };

  auto mark = [&](const Cell& c, std::uint16_t label) {
    occupancy_.setOccupied(c, true);
    labels_[geo.index(c)] = label;
  };
  for (int z = 0; z < geo.dims[2]; ++z) {
    for (int y = 0; y < geo.dims[1]; ++y) {
      for (int x = 0; x < geo.dims[0]; ++x) {
        const Cell c{x, y, z};
        if (geo.center(c).z < 0.0) {
          mark(c, kLabelFloor);
        } else if (x == 0 || y == 0 || x == geo.dims[0] - 1 || y == geo.dims[1] - 1) {
          mark(c, kLabelWall);
        }
      }
    }
  }
  for (const Box& b : spec_.boxes) {
    const std::uint16_t id = idOf(b.label);
    const Cell lo = geo.clamp(geo.cellOf(b.min));
    const Cell hi = geo.clamp(geo.cellOf(b.max));
    for (int z = lo.z; z <= hi.z; ++z) {
      for (int y = lo.y; y <= hi.y; ++y) {
        for (int x = lo.x; x <= hi.x; ++x) {
          const Cell c{x, y, z};
          if (b.contains(geo.center(c))) mark(c, id);
        }
      }
    }
  }

  features_.resize(label_names_.size());
  for (std::size_t id = 0; id < features_.size(); ++id) {
    Rng rng(spec_.feature_seed, id);
    std::vector<double> f(static_cast<std::size_t>(spec_.feature_dim));
    for (auto& v : f) v = rng.normal();
    features_[id] = normalized(std::move(f));
  }

  esdf_ = buildEsdf(occupancy_, 2.0);

  if (!insideBounds(spec_.start_position)) {
    throw std::invalid_argument("world: start position outside the arena");
  }
  if (checkCollision(*this, spec_.start_position, 0.3)) {
    throw std::invalid_argument("world: start position collides");
  }

  // Planar 8-connected Dijkstra at flight altitude over cells with guide clearance.
  constexpr double kGuideClearance = 0.6;
  const int nx = geo.dims[0];
  const int ny = geo.dims[1];
  const int zc = geo.clamp(geo.cellOf(spec_.start_position)).z;
  for (const SubtaskSpec& st : spec_.subtasks) {
    std::vector<double> dist(static_cast<std::size_t>(nx) * ny,
                             std::numeric_limits<double>::infinity());
    const Cell g = geo.clamp(geo.cellOf(st.goal));
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    auto free = [&](int x, int y) {
      return x >= 0 && y >= 0 && x < nx && y < ny && esdf_.at({x, y, zc}) >= kGuideClearance;
    };
    // Seed every free cell within one meter of the goal, at its true distance.
    const int r = static_cast<int>(std::ceil(1.0 / geo.resolution));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const int x = g.x + dx;
        const int y = g.y + dy;
        if (!free(x, y)) continue;
        const Vec3 c = geo.center({x, y, zc});
        const double d = std::hypot(c.x - st.goal.x, c.y - st.goal.y);
        if (d > 1.0) continue;
        const int idx = y * nx + x;
        if (d < dist[static_cast<std::size_t>(idx)]) {
          dist[static_cast<std::size_t>(idx)] = d;
          open.push({d, idx});
        }
      }
    }
    while (!open.empty()) {
      const auto [d, idx] = open.top();
      open.pop();
      if (d > dist[static_cast<std::size_t>(idx)]) continue;
      const int x = idx % nx;
      const int y = idx / nx;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !free(x + dx, y + dy)) continue;
          // No corner cutting between two blocked cells.
          if (dx != 0 && dy != 0 && (!free(x + dx, y) || !free(x, y + dy))) continue;
          const double nd = d + geo.resolution * ((dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0);
          const int ni = (y + dy) * nx + (x + dx);
          if (nd < dist[static_cast<std::size_t>(ni)]) {
            dist[static_cast<std::size_t>(ni)] = nd;
            open.push({nd, ni});
          }
        }
      }
    }
    guide_.push_back(std::move(dist));
  }
}

bool World::insideBounds(const Vec3& p) const {
  return geometry().contains(geometry().cellOf(p));
}

double World::guideDistance(std::size_t subtask, const Cell& planar) const {
  const auto& g = guide_.at(subtask);
  const int nx = geometry().dims[0];
  const int ny = geometry().dims[1];
  if (planar.x < 0 || planar.y < 0 || planar.x >= nx || planar.y >= ny) {
    return std::numeric_limits<double>::infinity();
  }
  return g[static_cast<std::size_t>(planar.y) * nx + planar.x];
}

std::vector<Vec3> World::guidePath(std::size_t subtask, const Vec3& from,
                                   double max_length) const {
  const GridGeometry& geo = geometry();
  const double z = flightAltitude();
  Cell c = geo.cellOf({from.x, from.y, z});
  c.z = 0;
  if (!std::isfinite(guideDistance(subtask, c))) {
    // Off the guide field (e.g. hugging an obstacle): snap to the nearest guided cell.
    std::optional<Cell> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int dy = -6; dy <= 6; ++dy) {
      for (int dx = -6; dx <= 6; ++dx) {
        const Cell n{c.x + dx, c.y + dy, 0};
        if (!std::isfinite(guideDistance(subtask, n))) continue;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = n;
        }
      }
    }
    if (!best) return {};
    c = *best;
  }
  auto point = [&](const Cell& k) {
    const Vec3 p = geo.center({k.x, k.y, 0});
    return Vec3{p.x, p.y, z};
  };
  std::vector<Vec3> path{point(c)};
  double length = 0.0;
  while (length < max_length) {
    const double here = guideDistance(subtask, c);
    Cell next = c;
    double next_d = here;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Cell n{c.x + dx, c.y + dy, 0};
        const double d = guideDistance(subtask, n);
        if (d < next_d) {
          next_d = d;
          next = n;
        }
      }
    }
    if (next == c) break;
    length += distance(point(c), point(next));
    c = next;
    path.push_back(point(c));
  }
  return path;
}

std::vector<std::string> World::subtaskTexts() const {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::string& s = spec_.instruction;
  while (true) {
    const auto pos = s.find(spec_.delimiter, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool checkCollision(const World& world, const Vec3& p, double radius) {
  return clearanceAt(world, p, radius + world.geometry().resolution) <= radius;
}

double clearanceAt(const World& world, const Vec3& p, double cap) {
  const GridGeometry& geo = world.geometry();
  const int r = static_cast<int>(std::ceil(cap / geo.resolution)) + 1;
  const Cell c = geo.cellOf(p);
  double best = std::numeric_limits<double>::infinity();
  for (int dz = -r; dz <= r; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const Cell n{c.x + dx, c.y + dy, c.z + dz};
        if (!geo.contains(n) || !world.occupancy().occupied(n)) continue;
        best = std::min(best, distance(geo.center(n), p));
      }
    }
  }
  return best;
}

}  // namespace onfly
