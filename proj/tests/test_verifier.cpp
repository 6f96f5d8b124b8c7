#include <doctest.h>

#include <cmath>

#include "onfly/rng.hpp"
#include "onfly/verifier.hpp"
#include "oracles.hpp"

using namespace onfly;

namespace {

CameraIntrinsics vga() { return CameraIntrinsics::fromFocal(320, 320, 320, 240, 640, 480); }

FeatureMap uniformFeatures(int w, int h, const std::vector<double>& f) {
  FeatureMap m(w, h, static_cast<int>(f.size()));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (std::size_t d = 0; d < f.size(); ++d) m.at(x, y)[d] = static_cast<float>(f[d]);
    }
  }
  return m;
}

RoiMask fullRoi(const BinaryMask& bits) {
  RoiMask m;
  m.roi = {0, 0, bits.width() - 1, bits.height() - 1};
  m.bits = bits;
  return m;
}

// Depth scene: far background with random near blobs; features follow the blobs.
struct Scene {
  DepthMap depth;
  FeatureMap features;
};

Scene randomScene(Rng& rng, int w, int h) {
  Scene s{DepthMap(w, h, 0.0), oracle::blobFeatures(rng, w, h, 4, 3, 0.15)};
  const double base = rng.uniform(2.0, 9.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) s.depth(x, y) = base + 0.01 * y;
  }
  const int blobs = rng.uniformInt(0, 4);
  for (int b = 0; b < blobs; ++b) {
    const int x0 = rng.uniformInt(0, w - 1), y0 = rng.uniformInt(0, h - 1);
    const int bw = rng.uniformInt(1, w / 2), bh = rng.uniformInt(1, h / 2);
    const double d = rng.uniform(0.3, 1.1);
    for (int y = y0; y < std::min(h, y0 + bh); ++y) {
      for (int x = x0; x < std::min(w, x0 + bw); ++x) s.depth(x, y) = d;
    }
  }
  if (rng.uniform() < 0.2) s.depth(rng.uniformInt(0, w - 1), rng.uniformInt(0, h - 1)) = kFarDepth;
  return s;
}

}  // namespace

TEST_CASE("similarity mask") {
  const auto uniform = uniformFeatures(40, 30, {0.0, 1.0, 0.0});
  const auto m = similarityMask(uniform, {20, 15}, 0.5, 8);
  CHECK(m.count() == static_cast<std::size_t>(m.roi.width() * m.roi.height()));
  CHECK(m.roi.width() == 17);

  FeatureMap two(40, 30, 2);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) {
      two.at(x, y)[x < 20 ? 0 : 1] = 1.0f;
    }
  }
  const auto half = similarityMask(two, {10, 10}, 0.5, 48);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) CHECK(half.test({x, y}) == (x < 20));
  }

  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    const FeatureMap f = oracle::blobFeatures(rng, 16, 16, 5, 3, 0.6);
    const Pixel p{rng.uniformInt(0, 15), rng.uniformInt(0, 15)};
    const int half_extent = rng.uniformInt(0, 12);
    PixelRect roi;
    const BinaryMask ref = oracle::similarity(f, p, 0.7, half_extent, &roi);
    const RoiMask got = similarityMask(f, p, 0.7, half_extent);
    CHECK(got.roi.x0 == roi.x0);
    CHECK(got.roi.y1 == roi.y1);
    CHECK(got.bits == ref);
    CHECK(got.test(p));
  }
}

TEST_CASE("connected region") {
  const RoiMask full = fullRoi(BinaryMask(10, 8, 1));
  CHECK(connectedRegion(full, {3, 3}).count() == 80);

  BinaryMask diag(6, 6, 0);
  diag(0, 0) = diag(1, 0) = diag(0, 1) = diag(1, 1) = 1;  // blob A
  diag(2, 2) = diag(3, 2) = diag(2, 3) = 1;  // blob B touches A at a corner
  const auto a = connectedRegion(fullRoi(diag), {0, 0});
  CHECK(a.count() == 4);
  CHECK_FALSE(a.test({2, 2}));

  BinaryMask empty(4, 4, 0);
  const auto single = connectedRegion(fullRoi(empty), {1, 2});
  CHECK(single.count() == 1);
  CHECK(single.test({1, 2}));

  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    BinaryMask bits(32, 32, 0);
    const double density = rng.uniform(0.3, 0.8);
    for (auto& b : bits.data()) b = rng.uniform() < density ? 1 : 0;
    const Pixel p{rng.uniformInt(0, 31), rng.uniformInt(0, 31)};
    bits[p] = 1;
    CHECK(connectedRegion(fullRoi(bits), p).bits == oracle::floodFill(bits, p));
  }
}

TEST_CASE("feasible set") {
  CHECK(feasibleSet(DepthMap(20, 10, kFarDepth), 1.2, 5) == BinaryMask(20, 10, 1));

  DepthMap one(20, 10, 5.0);
  one(4, 4) = 0.5;
  const auto f0 = feasibleSet(one, 1.2, 0);
  BinaryMask expect(20, 10, 1);
  expect(4, 4) = 0;
  CHECK(f0 == expect);

  // Wall on the left half at 1 m, r = 0.2 m converted at a 2 m target depth.
  const auto k = vga();
  VerifierConfig cfg;
  CHECK(dilationRadiusPixels(cfg, k, 2.0) == 32);
  DepthMap wall(640, 40, 4.0);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 320; ++x) wall(x, y) = 1.0;
  }
  const auto band = feasibleSet(wall, cfg.obstacle_depth_margin, 32);
  for (int y = 0; y < 40; ++y) {
    CHECK(band(351, y) == 0);
    CHECK(band(352, y) == 1);
  }

  VerifierConfig px = cfg;
  px.dilation_units = DilationUnits::Pixels;
  px.dilation_radius = 3.0;
  CHECK(dilationRadiusPixels(px, k, 100.0) == 3);
  CHECK(dilationRadiusPixels(cfg, k, 0.1) == dilationRadiusPixels(cfg, k, 0.5));

  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Scene s = randomScene(rng, rng.uniformInt(4, 40), rng.uniformInt(4, 30));
    const int r = rng.uniformInt(0, 9);
    const auto got = feasibleSet(s.depth, 1.2, r, Execution::Serial);
    CHECK(got == oracle::feasible(s.depth, 1.2, r));
    CHECK(got == feasibleSet(s.depth, 1.2, r, Execution::Parallel));
  }
}

TEST_CASE("target refinement") {
  const auto k = vga();
  const VerifierConfig cfg;
  const FeatureMap f = uniformFeatures(640, 480, {1.0, 0.0});

  DepthMap far(640, 480, 9.0);
  CandidateGoal g{{100, 100}, &far, &f, Pose(), false};
  auto r = refineTarget(g, cfg, k);
  CHECK(r.pixel == Pixel{100, 100});
  CHECK(r.depth == 7.0);
  CHECK(r.skipped);

  DepthMap open(640, 480, 4.0);
  g.depth_map = &open;
  r = refineTarget(g, cfg, k);
  CHECK(r.pixel == Pixel{100, 100});
  CHECK(r.depth == 4.0);
  CHECK_FALSE(r.skipped);
  CHECK_FALSE(r.unrefined);

  DepthMap inf(640, 480, kFarDepth);
  g.depth_map = &inf;
  CHECK(refineTarget(g, cfg, k).skipped);

  // Target on the edge of an obstacle that sits on a uniform floor region.
  DepthMap edge(640, 480, 3.0);
  for (int y = 200; y < 480; ++y) {
    for (int x = 0; x < 640; ++x) edge(x, y) = 1.0;
  }
  g.pixel = {300, 195};
  g.depth_map = &edge;
  r = refineTarget(g, cfg, k);
  const auto sim = similarityMask(f, g.pixel, cfg.tau, cfg.roi_half_extent);
  const auto comp = connectedRegion(sim, g.pixel);
  const int radius = dilationRadiusPixels(cfg, k, 3.0);
  const auto feas = oracle::feasible(edge, cfg.obstacle_depth_margin, radius);
  const auto best = oracle::nearestFeasible(comp.bits, comp.roi, feas, g.pixel);
  REQUIRE(best);
  CHECK(r.pixel == *best);
  CHECK(r.pixel == Pixel{300, 200 - radius - 1});
}

TEST_CASE("refinement matches the exhaustive nearest-feasible search") {
  Rng rng(99);
  const auto k = CameraIntrinsics::fromFov(64, 48, kPi / 2);
  int refined = 0;
  for (int i = 0; i < 100; ++i) {
    const Scene s = randomScene(rng, 64, 48);
    VerifierConfig cfg;
    cfg.roi_half_extent = rng.uniformInt(2, 20);
    cfg.tau = rng.uniform(0.3, 0.9);
    cfg.dilation_radius = rng.uniform(0.0, 0.4);
    const Pixel p{rng.uniformInt(0, 63), rng.uniformInt(0, 47)};
    const CandidateGoal g{p, &s.depth, &s.features, Pose(), false};
    const RefinedTarget r = refineTarget(g, cfg, k);
    const double d = s.depth[p];
    if (!std::isfinite(d) || d > cfg.max_depth) {
      CHECK(r.skipped);
      CHECK(r.pixel == p);
      continue;
    }
    PixelRect roi;
    const BinaryMask sim = oracle::similarity(s.features, p, cfg.tau, cfg.roi_half_extent, &roi);
    const BinaryMask comp = oracle::floodFill(sim, {p.x - roi.x0, p.y - roi.y0});
    const BinaryMask feas = oracle::feasible(s.depth, cfg.obstacle_depth_margin, dilationRadiusPixels(cfg, k, d));
    const auto best = oracle::nearestFeasible(comp, roi, feas, p);
    if (!best) {
      CHECK(r.unrefined);
      CHECK(r.pixel == p);
      continue;
    }
    CHECK(r.pixel == *best);
    CHECK(roi.contains(r.pixel));
    CHECK(r.depth <= cfg.max_depth);
    if (r.pixel != p) {
      ++refined;
      CHECK(dotProduct(s.features.at(r.pixel), s.features.at(p)) >= cfg.tau);
    }
  }
  CHECK(refined >= 5);
}

TEST_CASE("gated range") {
  const auto k = CameraIntrinsics::fromFov(640, 480, kPi / 2);
  VerifierConfig cfg;
  CHECK(gateRange(5.0, 0.0, cfg, k) == 5.0);
  const double at_sigma = cfg.sigma_theta * k.halfFovX();
  CHECK(std::abs(gateRange(2.0, at_sigma, cfg, k) - 2.0 * std::exp(-0.5)) <= 1e-12);
  CHECK(std::abs(gateRange(7.0, kPi / 8, cfg, k) - 4.245714617988434) <= 1e-9);
  CHECK(std::abs(gateRange(7.0, kPi / 8, cfg, k) - 7.0 * std::exp(-0.5)) <= 1e-12);

  double prev = gateRange(4.0, 0.0, cfg, k);
  for (int i = 1; i <= 100; ++i) {
    const double theta = k.halfFovX() * i / 100.0;
    const double v = gateRange(4.0, theta, cfg, k);
    CHECK(v < prev);
    CHECK(v > 0.0);
    CHECK(gateRange(4.0, -theta, cfg, k) == v);
    prev = v;
  }
}

TEST_CASE("goal lifting") {
  const auto k = vga();
  const auto g = liftGoal({320, 240}, 3.0, k, Pose());
  CHECK(std::abs(g.point.x - 3.0) <= 1e-12);
  CHECK(std::abs(g.point.y) <= 1e-12);
  CHECK(std::abs(g.point.z) <= 1e-12);
  CHECK(g.gated_range == 3.0);

  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Pixel p{rng.uniformInt(0, 639), rng.uniformInt(0, 479)};
    const double d = rng.uniform(0.1, 20.0);
    const Pose pose({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)}, rng.uniform(-3, 3));
    const auto lifted = liftGoal(p, d, k, pose);
    CHECK(lifted.point == cameraToOdom(pixelToCamera(p, d, k), pose));
    CHECK(lifted.bearing == bearing(p, k));
    CHECK(lifted.refined_pixel == p);
  }
}

TEST_CASE("unverified lifting caps depth without gating") {
  const auto k = vga();
  const VerifierConfig cfg;
  const FeatureMap f = uniformFeatures(640, 480, {1.0});
  const DepthMap d(640, 480, 12.0);
  const CandidateGoal g{{600, 240}, &d, &f, Pose(), false};
  const auto n = liftUnverified(g, cfg, k);
  CHECK(n.gated_range == 7.0);
  CHECK(std::abs(pixelToCamera(Pixel{600, 240}, 7.0, k).z - n.point.x) <= 1e-12);
}

TEST_CASE("verifier config validation") {
  VerifierConfig c;
  c.tau = 1.5;
  CHECK_THROWS(c.validate());
  c = {};
  c.sigma_theta = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("similarity mask serial and parallel agree") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const FeatureMap f = oracle::blobFeatures(rng, 80, 60, 8, 4, 0.3);
    const Pixel p{rng.uniformInt(0, 79), rng.uniformInt(0, 59)};
    CHECK(similarityMask(f, p, 0.5, 30, Execution::Serial).bits ==
          similarityMask(f, p, 0.5, 30, Execution::Parallel).bits);
  }
}
