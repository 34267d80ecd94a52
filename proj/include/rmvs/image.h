#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmvs/geometry.h"

namespace rmvs {

// Row-major interleaved grid: element (x, y, c) lives at (y * width + x) *
// channels + c.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw std::invalid_argument("grid: invalid shape");
    }
    data_.assign(static_cast<size_t>(width) * height * channels, fill);
  }
  Grid(int width, int height, int channels, std::vector<T> data)
      : width_(width), height_(height), channels_(channels),
        data_(std::move(data)) {
    if (width < 0 || height < 0 || channels < 1 ||
        data_.size() != static_cast<size_t>(width) * height * channels) {
      throw std::invalid_argument("grid: data length does not match shape");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& operator()(int x, int y, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  bool SameShape(int width, int height) const {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool SameShape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Grid& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

// Intensity image with 1 or 3 channels. Loaded images hold values in [0, 1];
// warped images may additionally hold 0 at invalid pixels.
class Image : public Grid<double> {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> data);

  // Throws unless all values are finite and inside [0, 1].
  void ValidateIntensities() const;
};

class ValidityMask : public Grid<uint8_t> {
 public:
  ValidityMask() = default;
  ValidityMask(int width, int height, uint8_t fill = 0)
      : Grid<uint8_t>(width, height, 1, fill) {}

  bool valid(int x, int y) const { return (*this)(x, y) != 0; }
  int64_t CountValid() const;
};

// Per-pixel depth in scene units. Non-positive or non-finite entries are
// invalid.
class DepthMap : public Grid<double> {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0)
      : Grid<double>(width, height, 1, fill) {}
  DepthMap(int width, int height, std::vector<double> data)
      : Grid<double>(width, height, 1, std::move(data)) {}

  static bool IsValid(double d) { return d > 0.0 && d < 1e300; }
  bool valid(int x, int y) const { return IsValid((*this)(x, y)); }
};

struct GradientImage {
  Grid<double> gx;
  Grid<double> gy;
};

struct WarpedImage {
  Image image;
  ValidityMask mask;
};

inline constexpr int kMaxChannels = 3;

struct Sample {
  std::array<double, kMaxChannels> value{};
  bool valid = false;
};

// Sample plus the derivative of each channel w.r.t. the x and y coordinate.
struct SampleDerivative {
  std::array<double, kMaxChannels> value{};
  std::array<double, kMaxChannels> dx{};
  std::array<double, kMaxChannels> dy{};
  bool valid = false;
};

// Bilinear interpolation of the 2x2 neighborhood. A coordinate is valid when
// it lies in [0, width-1] x [0, height-1]; on the last row/column the
// neighborhood is taken one cell inward so every neighbor stays in bounds.
// Invalid samples return 0.
Sample BilinearSample(const Grid<double>& img, const PixelCoord& coord);
SampleDerivative BilinearSampleDerivative(const Grid<double>& img,
                                          const PixelCoord& coord);

// Gradient stencil weights at position i of an axis with n samples: central
// difference inside, one-sided difference at both ends. Requires n >= 2.
struct Stencil {
  int lo;
  int hi;
  double weight;  // gradient = weight * (v[hi] - v[lo])
};
inline Stencil GradientStencil(int i, int n) {
  if (i == 0) return {0, 1, 1.0};
  if (i == n - 1) return {n - 2, n - 1, 1.0};
  return {i - 1, i + 1, 0.5};
}

GradientImage ImageGradient(const Grid<double>& img);

// Warps img_view into the source frame: every source pixel u is mapped by
// WarpPixel(u, depth(u)) and sampled bilinearly. Pixels with invalid depth or
// an out-of-bounds neighborhood get value 0 and mask 0.
WarpedImage InverseWarp(const DepthMap& depth, const Image& img_view,
                        const Camera& cam_src, const Camera& cam_view);

// Warps through the fronto-parallel plane homography at a single depth.
WarpedImage WarpByHomography(const Eigen::Matrix3d& H, const Image& img_view,
                             int width, int height, const Camera& cam_view);

}  // namespace rmvs
