#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "onfly/geometry.hpp"

namespace onfly {

/// Dense row-major image.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checkedSize(width, height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool contains(Pixel p) const { return inBounds(p, width_, height_); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](Pixel p) { return (*this)(p.x, p.y); }
  const T& operator[](Pixel p) const { return (*this)(p.x, p.y); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  static std::size_t checkedSize(int w, int h) {
    if (w < 0 || h < 0) throw std::invalid_argument("raster: negative dimensions");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using BinaryMask = Raster<std::uint8_t>;

/// Per-pixel depth along the optical axis in meters. kFarDepth marks "no return".
using DepthMap = Raster<double>;
inline constexpr double kFarDepth = std::numeric_limits<double>::infinity();

/// Per-pixel feature vectors of a fixed dimension, stored contiguously.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int width, int height, int dim)
      : width_(width), height_(height), dim_(dim),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                  static_cast<std::size_t>(dim),
              0.0f) {
    if (width < 0 || height < 0 || dim <= 0) throw std::invalid_argument("feature map: bad shape");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int dim() const { return dim_; }
  bool contains(Pixel p) const { return inBounds(p, width_, height_); }

  std::span<float> at(int x, int y) { return {data_.data() + offset(x, y), static_cast<std::size_t>(dim_)}; }
  std::span<const float> at(int x, int y) const {
    return {data_.data() + offset(x, y), static_cast<std::size_t>(dim_)};
  }
  std::span<const float> at(Pixel p) const { return at(p.x, p.y); }

  std::span<const float> data() const { return data_; }
  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(dim_);
  }

  int width_ = 0;
  int height_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
};

/// Plain dot product accumulated in double, in index order.
inline double dotProduct(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

/// Axis-aligned pixel rectangle, inclusive bounds.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  bool contains(Pixel p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }

  /// Square window of the given half extent around p, clipped to the image.
  static PixelRect around(Pixel p, int half_extent, int width, int height);
};

inline PixelRect PixelRect::around(Pixel p, int half_extent, int width, int height) {
  PixelRect r;
  r.x0 = std::max(0, p.x - half_extent);
  r.y0 = std::max(0, p.y - half_extent);
  r.x1 = std::min(width - 1, p.x + half_extent);
  r.y1 = std::min(height - 1, p.y + half_extent);
  return r;
}

}  // namespace onfly
