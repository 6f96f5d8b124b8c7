#include "onfly/geometry.hpp"

#include <stdexcept>
#include <string>

namespace onfly {

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
    }
  }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
  }
  return r;
}

CameraIntrinsics CameraIntrinsics::fromFov(int width, int height, double fov_x) {
  if (width <= 0 || height <= 0 || !(fov_x > 0.0) || !(fov_x < kPi)) {
    throw std::invalid_argument("camera: width/height must be positive and fov_x in (0, pi)");
  }
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  k.fov_x = fov_x;
  k.f_x = static_cast<double>(width) / (2.0 * std::tan(0.5 * fov_x));
  k.f_y = k.f_x;
  k.c_x = 0.5 * width;
  k.c_y = 0.5 * height;
  return k;
}

CameraIntrinsics CameraIntrinsics::fromFocal(double f_x, double f_y, double c_x, double c_y,
                                             int width, int height) {
  CameraIntrinsics k;
  k.f_x = f_x;
  k.f_y = f_y;
  k.c_x = c_x;
  k.c_y = c_y;
  k.width = width;
  k.height = height;
  k.fov_x = 2.0 * std::atan(static_cast<double>(width) / (2.0 * f_x));
  k.validate();
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(f_x > 0.0) || !(f_y > 0.0)) throw std::invalid_argument("camera: focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be > 0");
  if (!(c_x >= 0.0 && c_x < width && c_y >= 0.0 && c_y < height)) {
    throw std::invalid_argument("camera: principal point outside the image");
  }
  const double expected = 2.0 * std::atan(static_cast<double>(width) / (2.0 * f_x));
  if (std::abs(expected - fov_x) > 1e-6) {
    throw std::invalid_argument("camera: fov_x inconsistent with f_x and width");
  }
}

Pose::Pose(Vec3 position, double yaw, double pitch)
    : position_(position), yaw_(wrapAngle(yaw)), pitch_(pitch) {
  const double cy = std::cos(yaw_), sy = std::sin(yaw_);
  const double cp = std::cos(pitch_), sp = std::sin(pitch_);
  Mat3 rz;
  rz(0, 0) = cy;
  rz(0, 1) = -sy;
  rz(1, 0) = sy;
  rz(1, 1) = cy;
  // Ry(-pitch): nose-up pitch tilts forward toward +z.
  Mat3 ry;
  ry(0, 0) = cp;
  ry(0, 2) = -sp;
  ry(2, 0) = sp;
  ry(2, 2) = cp;
  rotation_ = rz * ry;
}

Vec3 pixelToCamera(double u, double v, double depth, const CameraIntrinsics& k) {
  return {depth * (u - k.c_x) / k.f_x, depth * (v - k.c_y) / k.f_y, depth};
}

Vec3 pixelToCamera(Pixel p, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw std::domain_error("pixelToCamera: depth must be positive and finite, got " +
                            std::to_string(depth));
  }
  return pixelToCamera(static_cast<double>(p.x), static_cast<double>(p.y), depth, k);
}

Vec3 cameraToOdom(const Vec3& x_cam, const Pose& pose) {
  return pose.rotation() * cameraToBody(x_cam) + pose.position();
}

Vec3 odomToCamera(const Vec3& x_odom, const Pose& pose) {
  return bodyToCamera(pose.rotation().transposed() * (x_odom - pose.position()));
}

std::optional<Pixel> projectToPixel(const Vec3& x_odom, const Pose& pose,
                                    const CameraIntrinsics& k) {
  const Vec3 c = odomToCamera(x_odom, pose);
  if (!(c.z > 0.0)) return std::nullopt;
  const double u = k.f_x * c.x / c.z + k.c_x;
  const double v = k.f_y * c.y / c.z + k.c_y;
  if (!std::isfinite(u) || !std::isfinite(v)) return std::nullopt;
  const double ru = std::round(u);
  const double rv = std::round(v);
  if (ru < 0.0 || rv < 0.0 || ru >= k.width || rv >= k.height) return std::nullopt;
  return Pixel{static_cast<int>(ru), static_cast<int>(rv)};
}

double wrapAngle(double a) {
  if (!std::isfinite(a)) throw std::domain_error("wrapAngle: non-finite angle");
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

double bearing(Pixel p, const CameraIntrinsics& k) {
  return std::atan((static_cast<double>(p.x) - k.c_x) / k.f_x);
}

}  // namespace onfly
