#include "tbs/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tbs {

namespace {

double clamped(const RealRaster& r, int x, int y) {
  return r(std::clamp(x, 0, r.width() - 1), std::clamp(y, 0, r.height() - 1));
}

// The eight channels of one scale, replicate border.
ChannelRaster scale_channels(const RealRaster& intensity, const RealRaster& sdf) {
  const int w = intensity.width();
  const int h = intensity.height();
  ChannelRaster out(w, h, kChannelsPerScale);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = intensity(x, y);
      const double gx = 0.5 * (clamped(intensity, x + 1, y) - clamped(intensity, x - 1, y));
      const double gy = 0.5 * (clamped(intensity, x, y + 1) - clamped(intensity, x, y - 1));
      double mean = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) mean += clamped(intensity, x + dx, y + dy);
      mean /= 9.0;
      // Two-pass variance so a constant neighbourhood gives exactly zero.
      double var = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const double d = clamped(intensity, x + dx, y + dy) - mean;
          var += d * d;
        }
      }
      var /= 9.0;
      const double lap = clamped(intensity, x + 1, y) + clamped(intensity, x - 1, y) +
                         clamped(intensity, x, y + 1) + clamped(intensity, x, y - 1) - 4.0 * c;
      out.at(x, y, kIntensity) = c;
      out.at(x, y, kGradX) = gx;
      out.at(x, y, kGradY) = gy;
      out.at(x, y, kGradMagnitude) = std::hypot(gx, gy);
      out.at(x, y, kLocalMean) = mean;
      out.at(x, y, kLocalStd) = std::sqrt(var);
      out.at(x, y, kLaplacian) = lap;
      out.at(x, y, kSignedDistance) = sdf(x, y);
    }
  }
  return out;
}

}  // namespace

RealRaster area_downsample(const RealRaster& src, int stride) {
  const int w = src.width() / stride;
  const int h = src.height() / stride;
  RealRaster out(w, h);
  const double inv = 1.0 / (static_cast<double>(stride) * stride);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < stride; ++dy)
        for (int dx = 0; dx < stride; ++dx) s += src(x * stride + dx, y * stride + dy);
      out(x, y) = s * inv;
    }
  }
  return out;
}

RealRaster signed_distance(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  // Edge pixels: those with a 4-neighbour of the other label. Distances are measured to them.
  std::vector<Point> inner_edge;
  std::vector<Point> outer_edge;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fg = mask(x, y) != 0;
      bool edge = false;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        if (mask.contains(x + dx, y + dy) && (mask(x + dx, y + dy) != 0) != fg) edge = true;
      }
      if (edge) (fg ? inner_edge : outer_edge).push_back({static_cast<double>(x), static_cast<double>(y)});
    }
  }
  const double norm = static_cast<double>(std::max(w, h));
  RealRaster out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fg = mask(x, y) != 0;
      const auto& targets = fg ? outer_edge : inner_edge;
      if (targets.empty()) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const Point& t : targets) best = std::min(best, (t.x - x) * (t.x - x) + (t.y - y) * (t.y - y));
      out(x, y) = (fg ? 1.0 : -1.0) * std::sqrt(best) / norm;
    }
  }
  return out;
}

FeaturePyramid build_pyramid(const GrayImage& image, const BinaryMask& mask) {
  if (!image.same_shape(mask)) throw std::invalid_argument("image and mask dimensions differ");
  if (image.width() < kPyramidStrides.back() || image.height() < kPyramidStrides.back())
    throw std::invalid_argument("image smaller than the coarsest pyramid stride");
  RealRaster intensity(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) intensity(x, y) = image(x, y);
  const RealRaster sdf = signed_distance(mask);

  FeaturePyramid pyr;
  for (int stride : kPyramidStrides)
    pyr.scales.push_back(scale_channels(area_downsample(intensity, stride), area_downsample(sdf, stride)));
  return pyr;
}

ChannelRaster upsample_bilinear(const ChannelRaster& src, int width, int height) {
  ChannelRaster out(width, height, src.channels());
  const double sx = width > 1 ? static_cast<double>(src.width() - 1) / (width - 1) : 0.0;
  const double sy = height > 1 ? static_cast<double>(src.height() - 1) / (height - 1) : 0.0;
  for (int y = 0; y < height; ++y) {
    const double fy_src = y * sy;
    const int y0 = std::min(static_cast<int>(std::floor(fy_src)), src.height() - 1);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double fy = fy_src - y0;
    for (int x = 0; x < width; ++x) {
      const double fx_src = x * sx;
      const int x0 = std::min(static_cast<int>(std::floor(fx_src)), src.width() - 1);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double fx = fx_src - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = src.at(x0, y0, c) + fx * (src.at(x1, y0, c) - src.at(x0, y0, c));
        const double bot = src.at(x0, y1, c) + fx * (src.at(x1, y1, c) - src.at(x0, y1, c));
        out.at(x, y, c) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

ChannelRaster merge_pyramid(const FeaturePyramid& pyr) {
  if (pyr.scales.empty()) throw std::invalid_argument("empty pyramid");
  const int w = pyr.scales.front().width();
  const int h = pyr.scales.front().height();
  int total = 0;
  for (const auto& s : pyr.scales) total += s.channels();
  ChannelRaster out(w, h, total);
  int base = 0;
  for (const auto& s : pyr.scales) {
    const ChannelRaster up = upsample_bilinear(s, w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < s.channels(); ++c) out.at(x, y, base + c) = up.at(x, y, c);
    base += s.channels();
  }
  return out;
}

void standardize_channels(ChannelRaster& r) {
  const double n = static_cast<double>(r.width()) * r.height();
  for (int c = 0; c < r.channels(); ++c) {
    double mean = 0.0;
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) mean += r.at(x, y, c);
    mean /= n;
    double var = 0.0;
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) var += (r.at(x, y, c) - mean) * (r.at(x, y, c) - mean);
    const double sd = std::sqrt(var / n);
    const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) r.at(x, y, c) = (r.at(x, y, c) - mean) * inv;
  }
}

ChannelRaster coord_map(int height, int width) {
  if (height < 2 || width < 2) throw std::invalid_argument("coordinate map needs at least 2x2 cells");
  ChannelRaster out(width, height, kCoordChannels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.at(x, y, 0) = -1.0 + 2.0 * x / (width - 1);
      out.at(x, y, 1) = -1.0 + 2.0 * y / (height - 1);
    }
  }
  return out;
}

FeatureGrid assemble_grid(const ChannelRaster& merged, const ChannelRaster& coords) {
  if (merged.width() != coords.width() || merged.height() != coords.height())
    throw std::invalid_argument("feature and coordinate rasters differ in size");
  const int c = merged.channels();
  FeatureGrid g{ChannelRaster(merged.width(), merged.height(), c + coords.channels())};
  for (int y = 0; y < merged.height(); ++y) {
    for (int x = 0; x < merged.width(); ++x) {
      for (int i = 0; i < c; ++i) g.values.at(x, y, i) = merged.at(x, y, i);
      for (int i = 0; i < coords.channels(); ++i) g.values.at(x, y, c + i) = coords.at(x, y, i);
    }
  }
  return g;
}

std::pair<ChannelRaster, ChannelRaster> split_grid(const FeatureGrid& grid) {
  const int c = grid.feature_channels();
  ChannelRaster merged(grid.width(), grid.height(), c);
  ChannelRaster coords(grid.width(), grid.height(), kCoordChannels);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      for (int i = 0; i < c; ++i) merged.at(x, y, i) = grid.values.at(x, y, i);
      for (int i = 0; i < kCoordChannels; ++i) coords.at(x, y, i) = grid.values.at(x, y, c + i);
    }
  }
  return {std::move(merged), std::move(coords)};
}

void bilinear_sample(const FeatureGrid& grid, Point p, std::span<double> out) {
  if (out.size() != static_cast<std::size_t>(grid.dim())) throw std::invalid_argument("sample buffer size");
  const double gx = std::clamp(p.x / kGridStride, 0.0, static_cast<double>(grid.width() - 1));
  const double gy = std::clamp(p.y / kGridStride, 0.0, static_cast<double>(grid.height() - 1));
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, grid.width() - 1);
  const int y1 = std::min(y0 + 1, grid.height() - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;
  const auto a = grid.values.pixel(x0, y0);
  const auto b = grid.values.pixel(x1, y0);
  const auto c = grid.values.pixel(x0, y1);
  const auto d = grid.values.pixel(x1, y1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double top = a[i] + fx * (b[i] - a[i]);
    const double bot = c[i] + fx * (d[i] - c[i]);
    out[i] = top + fy * (bot - top);
  }
}

std::vector<double> bilinear_sample(const FeatureGrid& grid, Point p) {
  std::vector<double> out(static_cast<std::size_t>(grid.dim()));
  bilinear_sample(grid, p, out);
  return out;
}

SequenceFeatures sequence_features(const FeatureGrid& grid, const VertexSequence& vertices) {
  const auto n = static_cast<Eigen::Index>(vertices.points.size());
  SequenceFeatures out(n, grid.dim());
  std::vector<double> row(static_cast<std::size_t>(grid.dim()));
  for (Eigen::Index k = 0; k < n; ++k) {
    bilinear_sample(grid, vertices.points[static_cast<std::size_t>(k)], row);
    for (int i = 0; i < grid.dim(); ++i) out(k, i) = row[static_cast<std::size_t>(i)];
  }
  return out;
}

FeatureGrid build_feature_grid(const GrayImage& image, const BinaryMask& mask, const FeatureOptions& options) {
  ChannelRaster merged = merge_pyramid(build_pyramid(image, mask));
  standardize_channels(merged);
  if (!options.use_pyramid) {
    for (int y = 0; y < merged.height(); ++y)
      for (int x = 0; x < merged.width(); ++x)
        for (int c = kChannelsPerScale; c < merged.channels(); ++c) merged.at(x, y, c) = 0.0;
  }
  ChannelRaster coords = coord_map(merged.height(), merged.width());
  if (!options.use_coords) coords = ChannelRaster(merged.width(), merged.height(), kCoordChannels, 0.0);
  return assemble_grid(merged, coords);
}

}  // namespace tbs
