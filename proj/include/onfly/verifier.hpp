#pragma once

// Semantic-geometric verification of a VLM-predicted pixel.
//
// The pixel is pulled to the nearest depth-feasible pixel inside the connected,
// feature-similar region that contains it; its depth is capped at D_max; the range
// is attenuated by a Gaussian in bearing; the result is lifted to the odometry frame.

#include <optional>

#include "onfly/execution.hpp"
#include "onfly/geometry.hpp"
#include "onfly/raster.hpp"

namespace onfly {

/// Packaged decision output: pixel plus the depth, features and pose of the same frame.
struct CandidateGoal {
  Pixel pixel;
  const DepthMap* depth_map = nullptr;
  const FeatureMap* feature_map = nullptr;
  Pose pose;
  /// Set when the oracle's pixel had to be clamped into the frame.
  bool clamped = false;
};

enum class DilationUnits { Metric, Pixels };

struct VerifierConfig {
  double tau = 0.5;
  int roi_half_extent = 48;
  double max_depth = 7.0;  // D_max
  double dilation_radius = 0.2;  // r, meters (or pixels, see units)
  DilationUnits dilation_units = DilationUnits::Metric;
  double sigma_theta = 0.5;
  double obstacle_depth_margin = 1.2;
  /// Depth floor used when converting a metric radius to pixels.
  double min_conversion_depth = 0.5;

  void validate() const;
};

struct NavigationGoal {
  Vec3 point;  // G_p, odometry frame
  Vec3 origin;  // camera position the goal was lifted from
  Pixel refined_pixel;
  double refined_depth = 0.0;  // d'
  double gated_range = 0.0;  // d_f
  double bearing = 0.0;
  /// C_p and the feasible set did not intersect; the planner treats the goal with caution.
  bool unrefined = false;
  /// Target beyond D_max; local refinement skipped.
  bool skipped = false;
};

/// Binary mask over a rectangular window of the image.
struct RoiMask {
  PixelRect roi;
  BinaryMask bits;  // roi.width() x roi.height()

  bool test(Pixel p) const {
    return roi.contains(p) && bits(p.x - roi.x0, p.y - roi.y0) != 0;
  }
  void set(Pixel p, bool v) { bits(p.x - roi.x0, p.y - roi.y0) = v ? 1 : 0; }
  std::size_t count() const;
};

/// q in ROI(p) with dot(f(q), f(p)) >= tau; p itself is always set.
RoiMask similarityMask(const FeatureMap& features, Pixel p, double tau, int roi_half_extent,
                       Execution exec = Execution::Parallel);

/// 4-connected component of `mask` containing p; {p} alone when mask(p) is clear.
RoiMask connectedRegion(const RoiMask& mask, Pixel p);

/// Dilation radius in pixels for the configured units at a reference depth.
int dilationRadiusPixels(const VerifierConfig& cfg, const CameraIntrinsics& k,
                         double reference_depth);

/// Feasible pixels: complement of (depth < margin) dilated by a disk of radius_px.
BinaryMask feasibleSet(const DepthMap& depth, double obstacle_depth_margin, int radius_px,
                       Execution exec = Execution::Parallel);

struct RefinedTarget {
  Pixel pixel;
  double depth = 0.0;  // d'
  bool unrefined = false;
  bool skipped = false;
};

RefinedTarget refineTarget(const CandidateGoal& goal, const VerifierConfig& cfg,
                           const CameraIntrinsics& k);

/// d' * exp(-0.5 * (theta / (sigma_theta * theta_max))^2), theta_max = fov_x / 2.
double gateRange(double refined_depth, double theta, const VerifierConfig& cfg,
                 const CameraIntrinsics& k);

NavigationGoal liftGoal(Pixel refined, double gated_range, const CameraIntrinsics& k,
                        const Pose& pose);

/// Full pipeline: refine, gate, lift.
NavigationGoal verify(const CandidateGoal& goal, const VerifierConfig& cfg,
                      const CameraIntrinsics& k);

/// Ablation path without verification: raw pixel, depth capped at D_max, no gating.
NavigationGoal liftUnverified(const CandidateGoal& goal, const VerifierConfig& cfg,
                              const CameraIntrinsics& k);

/// Intermediate rasters of one verification, for debug dumps.
struct VerificationTrace {
  RoiMask similarity;
  RoiMask component;
  BinaryMask feasible;
  RefinedTarget refined;
};
VerificationTrace traceVerification(const CandidateGoal& goal, const VerifierConfig& cfg,
                                    const CameraIntrinsics& k);

}  // namespace onfly
