#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tbs/geometry.hpp"
#include "tbs/image.hpp"

namespace tbs {

/// Fixed handcrafted channels computed at every pyramid scale.
enum FeatureChannel : int {
  kIntensity = 0,
  kGradX,
  kGradY,
  kGradMagnitude,
  kLocalMean,
  kLocalStd,
  kLaplacian,
  kSignedDistance,
  kChannelsPerScale
};

/// Downsampling factors of the pyramid, finest first. The finest is also the grid scale.
inline constexpr std::array<int, 4> kPyramidStrides{4, 8, 16, 32};
inline constexpr int kGridStride = kPyramidStrides[0];
inline constexpr int kMergedChannels = kChannelsPerScale * static_cast<int>(kPyramidStrides.size());
inline constexpr int kCoordChannels = 2;

struct FeaturePyramid {
  std::vector<ChannelRaster> scales;  // one per stride, finest first
};

/// Merged pyramid channels followed by the two coordinate channels.
struct FeatureGrid {
  ChannelRaster values;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  int dim() const { return values.channels(); }
  int feature_channels() const { return values.channels() - kCoordChannels; }
};

/// N x D, row k holds the sampled feature of vertex k.
using SequenceFeatures = Eigen::MatrixXd;

struct FeatureOptions {
  bool use_pyramid = true;  // false zeroes every channel coarser than the grid scale
  bool use_coords = true;   // false zeroes the coordinate channels
  bool operator==(const FeatureOptions&) const = default;
};

/// Mean over stride x stride blocks; trailing rows/columns that do not fill a block are dropped.
RealRaster area_downsample(const RealRaster& src, int stride);

/// Euclidean distance from each pixel centre to the nearest pixel of the other label,
/// positive inside the mask, divided by max(width, height).
RealRaster signed_distance(const BinaryMask& mask);

FeaturePyramid build_pyramid(const GrayImage& image, const BinaryMask& mask);

/// Corner-aligned bilinear resize of every channel.
ChannelRaster upsample_bilinear(const ChannelRaster& src, int width, int height);

ChannelRaster merge_pyramid(const FeaturePyramid& pyramid);

/// Per channel: subtract the mean over all cells and divide by the standard deviation.
/// Constant channels become zero.
void standardize_channels(ChannelRaster& raster);

ChannelRaster coord_map(int height, int width);

FeatureGrid assemble_grid(const ChannelRaster& merged, const ChannelRaster& coords);
std::pair<ChannelRaster, ChannelRaster> split_grid(const FeatureGrid& grid);

/// Full-resolution point -> grid coordinates (divide by the grid stride), clamped to the
/// border, then bilinear over the four surrounding cells.
void bilinear_sample(const FeatureGrid& grid, Point p, std::span<double> out);
std::vector<double> bilinear_sample(const FeatureGrid& grid, Point p);

SequenceFeatures sequence_features(const FeatureGrid& grid, const VertexSequence& vertices);

/// image + mask -> pyramid -> merge -> standardize -> coordinate map -> grid, with the ablation switches applied.
FeatureGrid build_feature_grid(const GrayImage& image, const BinaryMask& mask, const FeatureOptions& options);

}  // namespace tbs
