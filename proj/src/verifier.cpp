#include "onfly/verifier.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <vector>

namespace onfly {

void VerifierConfig::validate() const {
  if (!(tau >= -1.0 && tau <= 1.0)) throw std::invalid_argument("verifier: tau must be in [-1, 1]");
  if (!(max_depth > 0.0)) throw std::invalid_argument("verifier: max_depth must be > 0");
  if (!(dilation_radius >= 0.0)) throw std::invalid_argument("verifier: dilation_radius must be >= 0");
  if (!(sigma_theta > 0.0)) throw std::invalid_argument("verifier: sigma_theta must be > 0");
  if (roi_half_extent < 0) throw std::invalid_argument("verifier: roi_half_extent must be >= 0");
}

std::size_t RoiMask::count() const {
  std::size_t n = 0;
  for (auto b : bits.data()) n += b != 0 ? 1 : 0;
  return n;
}

RoiMask similarityMask(const FeatureMap& features, Pixel p, double tau, int roi_half_extent,
                       Execution exec) {
  if (!features.contains(p)) throw std::out_of_range("similarityMask: pixel outside the image");
  RoiMask out;
  out.roi = PixelRect::around(p, roi_half_extent, features.width(), features.height());
  out.bits = BinaryMask(out.roi.width(), out.roi.height(), 0);
  const auto ref = features.at(p);
  const PixelRect roi = out.roi;
  auto row = [&](int y) {
    for (int x = roi.x0; x <= roi.x1; ++x) {
      out.bits(x - roi.x0, y - roi.y0) = dotProduct(features.at(x, y), ref) >= tau ? 1 : 0;
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (int y = roi.y0; y <= roi.y1; ++y) row(y);
  } else {
    for (int y = roi.y0; y <= roi.y1; ++y) row(y);
  }
  out.set(p, true);
  return out;
}

RoiMask connectedRegion(const RoiMask& mask, Pixel p) {
  RoiMask out;
  out.roi = mask.roi;
  out.bits = BinaryMask(mask.roi.width(), mask.roi.height(), 0);
  if (!mask.roi.contains(p)) throw std::out_of_range("connectedRegion: seed outside the ROI");
  out.set(p, true);
  if (!mask.test(p)) return out;
  std::deque<Pixel> frontier{p};
  constexpr Pixel kSteps[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (!frontier.empty()) {
    const Pixel c = frontier.front();
    frontier.pop_front();
    for (Pixel d : kSteps) {
      const Pixel n{c.x + d.x, c.y + d.y};
      if (mask.test(n) && !out.test(n)) {
        out.set(n, true);
        frontier.push_back(n);
      }
    }
  }
  return out;
}

int dilationRadiusPixels(const VerifierConfig& cfg, const CameraIntrinsics& k,
                         double reference_depth) {
  if (cfg.dilation_units == DilationUnits::Pixels) {
    return static_cast<int>(std::lround(cfg.dilation_radius));
  }
  const double depth = std::max(reference_depth, cfg.min_conversion_depth);
  if (!std::isfinite(depth)) return 0;
  return static_cast<int>(std::lround(cfg.dilation_radius * k.f_x / depth));
}

BinaryMask feasibleSet(const DepthMap& depth, double obstacle_depth_margin, int radius_px,
                       Execution exec) {
  if (radius_px < 0) throw std::invalid_argument("feasibleSet: negative dilation radius");
  const int w = depth.width();
  const int h = depth.height();
  constexpr int kNone = std::numeric_limits<int>::max() / 4;

  // Horizontal distance to the nearest obstacle pixel in the same row.
  Raster<int> row_distance(w, h, kNone);
  auto row_pass = [&](int y) {
    int last = -kNone;
    for (int x = 0; x < w; ++x) {
      if (depth(x, y) < obstacle_depth_margin) last = x;
      row_distance(x, y) = x - last;
    }
    last = 2 * kNone;
    for (int x = w - 1; x >= 0; --x) {
      if (depth(x, y) < obstacle_depth_margin) last = x;
      row_distance(x, y) = std::min(row_distance(x, y), last - x);
    }
  };
  // A pixel is covered when some obstacle lies within the disk: dx^2 + dy^2 <= R^2.
  BinaryMask feasible(w, h, 1);
  const long long r2 = static_cast<long long>(radius_px) * radius_px;
  auto column_pass = [&](int y) {
    const int y_lo = std::max(0, y - radius_px);
    const int y_hi = std::min(h - 1, y + radius_px);
    for (int x = 0; x < w; ++x) {
      for (int yy = y_lo; yy <= y_hi; ++yy) {
        const long long dx = row_distance(x, yy);
        if (dx > radius_px) continue;
        const long long dy = yy - y;
        if (dx * dx + dy * dy <= r2) {
          feasible(x, y) = 0;
          break;
        }
      }
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) row_pass(y);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) column_pass(y);
  } else {
    for (int y = 0; y < h; ++y) row_pass(y);
    for (int y = 0; y < h; ++y) column_pass(y);
  }
  return feasible;
}

namespace {

std::optional<Pixel> nearestFeasible(const RoiMask& component, const BinaryMask& feasible,
                                     Pixel p) {
  std::optional<Pixel> best;
  long long best_d2 = 0;
  // Row-major scan with a strict comparison keeps the smaller row, then column, on ties.
  for (int y = component.roi.y0; y <= component.roi.y1; ++y) {
    for (int x = component.roi.x0; x <= component.roi.x1; ++x) {
      const Pixel q{x, y};
      if (!component.test(q) || feasible[q] == 0) continue;
      const long long dx = x - p.x, dy = y - p.y;
      const long long d2 = dx * dx + dy * dy;
      if (!best || d2 < best_d2) {
        best = q;
        best_d2 = d2;
      }
    }
  }
  return best;
}

void checkGoal(const CandidateGoal& goal) {
  if (goal.depth_map == nullptr || goal.feature_map == nullptr) {
    throw std::invalid_argument("candidate goal: missing depth or feature raster");
  }
  if (goal.depth_map->width() != goal.feature_map->width() ||
      goal.depth_map->height() != goal.feature_map->height()) {
    throw std::invalid_argument("candidate goal: depth and feature rasters differ in size");
  }
  if (!goal.depth_map->contains(goal.pixel)) {
    throw std::out_of_range("candidate goal: pixel outside the image");
  }
}

}  // namespace

VerificationTrace traceVerification(const CandidateGoal& goal, const VerifierConfig& cfg,
                                    const CameraIntrinsics& k) {
  checkGoal(goal);
  VerificationTrace trace;
  const DepthMap& depth = *goal.depth_map;
  const double d = depth[goal.pixel];
  if (!std::isfinite(d) || d > cfg.max_depth) {
    trace.refined = {goal.pixel, cfg.max_depth, false, true};
    return trace;
  }
  trace.similarity = similarityMask(*goal.feature_map, goal.pixel, cfg.tau, cfg.roi_half_extent);
  trace.component = connectedRegion(trace.similarity, goal.pixel);
  trace.feasible =
      feasibleSet(depth, cfg.obstacle_depth_margin, dilationRadiusPixels(cfg, k, d));
  if (auto q = nearestFeasible(trace.component, trace.feasible, goal.pixel)) {
    trace.refined = {*q, std::min(depth[*q], cfg.max_depth), false, false};
  } else {
    trace.refined = {goal.pixel, std::min(d, cfg.max_depth), true, false};
  }
  return trace;
}

RefinedTarget refineTarget(const CandidateGoal& goal, const VerifierConfig& cfg,
                           const CameraIntrinsics& k) {
  return traceVerification(goal, cfg, k).refined;
}

double gateRange(double refined_depth, double theta, const VerifierConfig& cfg,
                 const CameraIntrinsics& k) {
  const double theta_max = k.halfFovX();
  const double z = theta / (cfg.sigma_theta * theta_max);
  return refined_depth * std::exp(-0.5 * z * z);
}

NavigationGoal liftGoal(Pixel refined, double gated_range, const CameraIntrinsics& k,
                        const Pose& pose) {
  NavigationGoal g;
  g.refined_pixel = refined;
  g.gated_range = gated_range;
  g.bearing = bearing(refined, k);
  g.point = cameraToOdom(pixelToCamera(refined, gated_range, k), pose);
  g.origin = pose.position();
  return g;
}

NavigationGoal verify(const CandidateGoal& goal, const VerifierConfig& cfg,
                      const CameraIntrinsics& k) {
  const RefinedTarget r = refineTarget(goal, cfg, k);
  const double theta = bearing(r.pixel, k);
  NavigationGoal g = liftGoal(r.pixel, gateRange(r.depth, theta, cfg, k), k, goal.pose);
  g.refined_depth = r.depth;
  g.unrefined = r.unrefined;
  g.skipped = r.skipped;
  return g;
}

NavigationGoal liftUnverified(const CandidateGoal& goal, const VerifierConfig& cfg,
                              const CameraIntrinsics& k) {
  checkGoal(goal);
  const double d = goal.depth_map->operator[](goal.pixel);
  const double capped = std::isfinite(d) ? std::min(d, cfg.max_depth) : cfg.max_depth;
  NavigationGoal g = liftGoal(goal.pixel, capped, k, goal.pose);
  g.refined_depth = capped;
  return g;
}

}  // namespace onfly
