#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

namespace onfly {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  double squaredNorm() const { return dot(*this); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  static Mat3 identity() { return {}; }
};

/// Pinhole intrinsics. Pixel (x, y) integer coordinates address the ray through
/// u = x, v = y; x grows to the right, y grows downward.
struct CameraIntrinsics {
  double f_x = 0.0;
  double f_y = 0.0;
  double c_x = 0.0;
  double c_y = 0.0;
  int width = 0;
  int height = 0;
  double fov_x = 0.0;

  /// Square pixels, principal point at the image center.
  static CameraIntrinsics fromFov(int width, int height, double fov_x);
  /// Derives fov_x from f_x and width. Throws std::invalid_argument on bad values.
  static CameraIntrinsics fromFocal(double f_x, double f_y, double c_x, double c_y, int width,
                                    int height);

  double halfFovX() const { return 0.5 * fov_x; }
  void validate() const;
};

struct Pixel {
  int x = 0;
  int y = 0;
  constexpr bool operator==(const Pixel&) const = default;
};

inline bool inBounds(Pixel p, int width, int height) {
  return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
}
inline bool inBounds(Pixel p, const CameraIntrinsics& k) { return inBounds(p, k.width, k.height); }

/// Body frame: x forward, y left, z up. Roll is always zero.
class Pose {
 public:
  Pose() = default;
  Pose(Vec3 position, double yaw, double pitch = 0.0);

  const Vec3& position() const { return position_; }
  double yaw() const { return yaw_; }
  double pitch() const { return pitch_; }
  /// Body-to-odometry rotation, Rz(yaw) * Ry(-pitch) (positive pitch is nose up).
  const Mat3& rotation() const { return rotation_; }

  Vec3 forward() const { return rotation_ * Vec3{1, 0, 0}; }

 private:
  Vec3 position_{};
  double yaw_ = 0.0;
  double pitch_ = 0.0;
  Mat3 rotation_{};
};

/// Camera optical frame (x right, y down, z forward) to body frame:
/// body_forward = cam_z, body_left = -cam_x, body_up = -cam_y.
inline constexpr Vec3 cameraToBody(const Vec3& c) { return {c.z, -c.x, -c.y}; }
inline constexpr Vec3 bodyToCamera(const Vec3& b) { return {-b.y, -b.z, b.x}; }

/// d * K^-1 [x, y, 1]. The z component equals d. Throws std::domain_error for d <= 0.
Vec3 pixelToCamera(Pixel p, double depth, const CameraIntrinsics& k);
/// Unrounded variant used by the renderer and depth integration.
Vec3 pixelToCamera(double u, double v, double depth, const CameraIntrinsics& k);

Vec3 cameraToOdom(const Vec3& x_cam, const Pose& pose);
Vec3 odomToCamera(const Vec3& x_odom, const Pose& pose);

/// Rounded (half away from zero) pixel, or nullopt when behind the camera or out of frame.
std::optional<Pixel> projectToPixel(const Vec3& x_odom, const Pose& pose,
                                    const CameraIntrinsics& k);

/// Maps to (-pi, pi]. Throws std::domain_error on non-finite input.
double wrapAngle(double a);

/// Horizontal bearing of a pixel's ray, positive to the right of c_x.
double bearing(Pixel p, const CameraIntrinsics& k);

}  // namespace onfly
