// Serial vs OpenMP kernels: ESDF, render, feature extraction, similarity mask and
// feasible set. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "onfly/planner.hpp"
#include "onfly/rng.hpp"
#include "onfly/sim.hpp"
#include "onfly/verifier.hpp"
#include "onfly/world.hpp"

namespace {

using namespace onfly;

Execution execOf(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

OccupancyGrid randomGrid(int n, double density, std::uint64_t seed) {
  GridGeometry g;
  g.resolution = 0.2;
  g.dims = {n, n, n / 3};
  OccupancyGrid grid(g);
  Rng rng(seed);
  for (auto& c : grid.cells()) c = rng.uniform() < density ? 1 : 0;
  return grid;
}

const World& benchWorld() {
  static const World world = [] {
    WorldSpec s;
    s.size = {24.0, 24.0, 4.0};
    s.start_position = {2.0, 12.0, 1.5};
    for (int i = 0; i < 6; ++i) {
      const double x = 5.0 + 3.0 * i;
      s.boxes.push_back({{x, 4.0 + i, 0.0}, {x + 1.0, 8.0 + i, 3.0}, "pillar"});
    }
    return World(s);
  }();
  return world;
}

CameraIntrinsics benchCamera() { return CameraIntrinsics::fromFov(160, 90, 90.0 * kPi / 180.0); }

void BM_Esdf(benchmark::State& state) {
  const OccupancyGrid grid = randomGrid(100, 0.02, 3);
  for (auto _ : state) benchmark::DoNotOptimize(buildEsdf(grid, 2.0, execOf(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid.geometry().cellCount()));
}
BENCHMARK(BM_Esdf)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const World& world = benchWorld();
  const Pose pose({2.0, 12.0, 1.5}, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render(world, pose, benchCamera(), 30.0, execOf(state)));
  }
}
BENCHMARK(BM_Render)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Features(benchmark::State& state) {
  const World& world = benchWorld();
  const Pose pose({2.0, 12.0, 1.5}, 0.0);
  const RenderOutput r = render(world, pose, benchCamera(), 30.0);
  std::int64_t frame = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        extractFeatures(r.labels, world.featureTable(), 0.05, 1, frame++, execOf(state)));
  }
}
BENCHMARK(BM_Features)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SimilarityMask(benchmark::State& state) {
  const World& world = benchWorld();
  const Pose pose({2.0, 12.0, 1.5}, 0.0);
  const RenderOutput r = render(world, pose, benchCamera(), 30.0);
  const FeatureMap f = extractFeatures(r.labels, world.featureTable(), 0.05, 1, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(similarityMask(f, {80, 45}, 0.5, 48, execOf(state)));
  }
}
BENCHMARK(BM_SimilarityMask)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_FeasibleSet(benchmark::State& state) {
  const World& world = benchWorld();
  const Pose pose({2.0, 12.0, 1.5}, 0.0);
  const RenderOutput r = render(world, pose, benchCamera(), 30.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(feasibleSet(r.depth, 1.2, 6, execOf(state)));
  }
}
BENCHMARK(BM_FeasibleSet)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
