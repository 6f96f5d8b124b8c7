#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "onfly/geometry.hpp"
#include "onfly/rng.hpp"

using namespace onfly;

namespace {

CameraIntrinsics vga() { return CameraIntrinsics::fromFocal(320, 320, 320, 240, 640, 480); }

void checkVec(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

}  // namespace

TEST_CASE("pixel to camera") {
  const auto k = vga();
  checkVec(pixelToCamera(Pixel{320, 240}, 2.0, k), {0, 0, 2.0});
  checkVec(pixelToCamera(Pixel{480, 300}, 3.5, k), {1.75, 0.65625, 3.5});

  const auto wide = CameraIntrinsics::fromFocal(320, 320, 320, 240, 800, 480);
  checkVec(pixelToCamera(Pixel{640, 240}, 1.0, wide), {1.0, 0.0, 1.0});

  CHECK_THROWS_AS(pixelToCamera(Pixel{1, 1}, 0.0, k), std::domain_error);
  CHECK_THROWS_AS(pixelToCamera(Pixel{1, 1}, -1.0, k), std::domain_error);
}

TEST_CASE("camera to odometry") {
  checkVec(cameraToOdom({0, 0, 2}, Pose({0, 0, 0}, 0.0)), {2, 0, 0});
  checkVec(cameraToOdom({0, 0, 1}, Pose({1, 1, 0}, kPi / 2)), {1, 2, 0}, 1e-12);
  // Right of the optical axis is the body's -y, down is -z.
  checkVec(cameraToOdom({1, 0, 0}, Pose({0, 0, 0}, 0.0)), {0, -1, 0});
  checkVec(cameraToOdom({0, 1, 0}, Pose({0, 0, 0}, 0.0)), {0, 0, -1});
}

TEST_CASE("project to pixel") {
  const auto k = vga();
  const Pose pose({0, 0, 0}, 0.0);
  const auto ahead = projectToPixel({2, 0, 0}, pose, k);
  REQUIRE(ahead);
  CHECK(*ahead == Pixel{320, 240});
  CHECK_FALSE(projectToPixel({-2, 0, 0}, pose, k));
  CHECK_FALSE(projectToPixel({1, 50, 0}, pose, k));

  const Vec3 x = cameraToOdom(pixelToCamera(Pixel{480, 300}, 3.5, k), pose);
  const auto back = projectToPixel(x, pose, k);
  REQUIRE(back);
  CHECK(*back == Pixel{480, 300});
}

TEST_CASE("project/unproject roundtrip over random pixels and poses") {
  const auto k = CameraIntrinsics::fromFov(160, 90, kPi / 2);
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Pixel p{rng.uniformInt(0, k.width - 1), rng.uniformInt(0, k.height - 1)};
    const double d = rng.uniform(0.5, 50.0);
    const Pose pose({rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(0, 3)},
                    rng.uniform(-kPi, kPi), rng.uniform(-0.3, 0.3));
    const auto q = projectToPixel(cameraToOdom(pixelToCamera(p, d, k), pose), pose, k);
    REQUIRE(q);
    CHECK(*q == p);
  }
}

TEST_CASE("wrap angle") {
  CHECK(wrapAngle(0.0) == 0.0);
  CHECK(std::abs(wrapAngle(1.5 * kPi) - (-0.5 * kPi)) <= 1e-12);
  CHECK(wrapAngle(-kPi) == kPi);
  CHECK(wrapAngle(kPi) == kPi);
  CHECK_THROWS_AS(wrapAngle(std::nan("")), std::domain_error);
  CHECK_THROWS_AS(wrapAngle(INFINITY), std::domain_error);

  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    const double a = rng.uniform(-100.0, 100.0);
    const double w = wrapAngle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(wrapAngle(w) == w);
    const double turns = (a - w) / (2.0 * kPi);
    CHECK(std::abs(turns - std::round(turns)) < 1e-9);
  }
}

TEST_CASE("bearing") {
  const auto k = vga();
  CHECK(bearing(Pixel{320, 10}, k) == 0.0);
  const auto wide = CameraIntrinsics::fromFocal(320, 320, 320, 240, 800, 480);
  CHECK(std::abs(bearing(Pixel{640, 0}, wide) - kPi / 4) <= 1e-12);
  CHECK(std::abs(bearing(Pixel{160, 0}, k) - std::atan(-0.5)) <= 1e-12);
  CHECK(std::abs(bearing(Pixel{160, 0}, k) - (-0.4636476090008061)) <= 1e-12);

  double prev = -10.0;
  for (int x = 0; x < k.width; ++x) {
    const double b = bearing(Pixel{x, 0}, k);
    CHECK(b > prev);
    CHECK(std::abs(b) <= k.halfFovX() + 1e-12);
    prev = b;
  }
}

TEST_CASE("intrinsics validation") {
  CHECK_THROWS_AS(CameraIntrinsics::fromFocal(0, 1, 1, 1, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(CameraIntrinsics::fromFov(0, 10, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(CameraIntrinsics::fromFov(10, 10, kPi), std::invalid_argument);
  const auto k = CameraIntrinsics::fromFov(160, 90, kPi / 2);
  CHECK(std::abs(k.f_x - 80.0) < 1e-12);
  CHECK(k.c_x == 80.0);
}
