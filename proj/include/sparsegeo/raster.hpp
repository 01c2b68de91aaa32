#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sparsegeo/error.hpp"

namespace sparsegeo {

// Row-major 2-D grid. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width, height)), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(int w, int h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return same_shape(other.width(), other.height());
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static long long checked(int w, int h) {
    if (w < 0 || h < 0) throw ShapeError("negative raster dimensions");
    return static_cast<long long>(w) * h;
  }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Rgb = std::array<std::uint8_t, 3>;

// Depth in scene units (or arbitrary monocular units before alignment).
// Values <= 0 or NaN mean "no estimate".
using DepthMap = Raster<float>;
// Nonzero = set. Stored as bytes to keep the raster contiguous.
using Mask = Raster<std::uint8_t>;
using Image = Raster<Rgb>;

inline bool valid_depth(float d) { return d > 0.0f && !std::isnan(d); }

template <typename A, typename B>
void require_same_shape(const Raster<A>& a, const Raster<B>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": " + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                     "x" + std::to_string(b.height()));
}

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Rgb> colors;

  std::size_t size() const { return positions.size(); }
  void push_back(const Eigen::Vector3f& p, const Rgb& c) {
    positions.push_back(p);
    colors.push_back(c);
  }
  void append(const PointCloud& other) {
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  }
};

}  // namespace sparsegeo
