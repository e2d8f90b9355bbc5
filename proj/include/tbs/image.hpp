#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tbs {

/// Subpixel Cartesian position; x is the column, y is the row.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

/// Row-major single-channel raster.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative raster size");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(const auto& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GrayImage = Raster<float>;
/// Foreground is 1, background 0.
using BinaryMask = Raster<std::uint8_t>;
using RealRaster = Raster<double>;

std::size_t count_foreground(const BinaryMask& mask);

/// Pixel-major multi-channel raster: the channel vector of pixel (x, y) is contiguous.
class ChannelRaster {
 public:
  ChannelRaster() = default;
  ChannelRaster(int width, int height, int channels, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  double& at(int x, int y, int c) { return data_[offset(x, y) + static_cast<std::size_t>(c)]; }
  double at(int x, int y, int c) const { return data_[offset(x, y) + static_cast<std::size_t>(c)]; }

  std::span<const double> pixel(int x, int y) const {
    return {data_.data() + offset(x, y), static_cast<std::size_t>(channels_)};
  }

  /// Copies one channel out as a plain raster.
  RealRaster channel(int c) const;
  void set_channel(int c, const RealRaster& values);

  std::span<const double> values() const { return data_; }

  bool operator==(const ChannelRaster&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(channels_);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

}  // namespace tbs
