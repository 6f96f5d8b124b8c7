#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "onfly/sim.hpp"
#include "onfly/world.hpp"

namespace test {

using namespace onfly;

inline std::filesystem::path dataDir() { return ONFLY_DATA_DIR; }

inline std::vector<std::filesystem::path> courseWorlds() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dataDir() / "worlds")) {
    if (e.path().filename().string().rfind("course_", 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::filesystem::path> bundledWorlds() {
  auto out = courseWorlds();
  out.push_back(dataDir() / "worlds" / "tutorial.json");
  return out;
}

/// Arena with nothing but a landmark 12.6 m ahead; the goal is 10 m from the start.
inline World openWorld() {
  WorldSpec s;
  s.name = "open";
  s.size = {16, 10, 4};
  s.feature_seed = 3;
  s.boxes = {{{14.0, 4.0, 0.0}, {14.8, 6.0, 2.4}, "blue sign"}};
  s.start_position = {2.0, 5.0, 1.5};
  s.instruction = "fly to the blue sign";
  s.subtasks = {{0, {12.0, 5.0, 1.5}, 2.5, false}};
  return World(s);
}

/// Full-width wall slab whose near face is at x = face_x.
inline World wallWorld(double face_x) {
  WorldSpec s;
  s.name = "wall";
  s.size = {face_x + 3.0, 12, 4};
  s.boxes = {{{face_x, 0.0, 0.0}, {face_x + 0.6, 12.0, 3.0}, "wall slab"}};
  s.start_position = {2.0, 6.1, 1.5};
  s.instruction = "approach the wall slab";
  s.subtasks = {{0, {face_x - 1.5, 6.0, 1.5}, 2.5, false}};
  return World(s);
}

/// Wall across the arena with a 3.5 m gap off the direct line to the goal.
inline World gapWorld() {
  WorldSpec s;
  s.name = "gap";
  s.size = {17, 12, 4};
  s.feature_seed = 5;
  s.boxes = {{{7.0, 0.0, 0.0}, {7.6, 5.0, 3.0}, "brick wall"},
             {{7.0, 8.5, 0.0}, {7.6, 12.0, 3.0}, "brick wall"},
             {{15.4, 5.0, 0.0}, {16.2, 7.0, 2.4}, "green kiosk"}};
  s.start_position = {2.0, 3.0, 1.5};
  s.instruction = "pass the gap and stop at the green kiosk";
  s.subtasks = {{2, {13.4, 6.0, 1.5}, 2.5, false}};
  return World(s);
}

inline EpisodeConfig fastConfig() { return EpisodeConfig{}; }

}  // namespace test
