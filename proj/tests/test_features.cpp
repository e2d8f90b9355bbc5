#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tbs/features.hpp"
#include "tbs/phantom.hpp"

using namespace tbs;

namespace {

GrayImage noise_image(int size, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  GrayImage img(size, size);
  for (float& v : img.values()) v = static_cast<float>(uniform01(rng));
  return img;
}

}  // namespace

TEST(Pyramid, Shapes) {
  const GrayImage img(64, 64, 0.5f);
  const FeaturePyramid p = build_pyramid(img, oracle::disk(64, 32, 32, 10));
  ASSERT_EQ(p.scales.size(), 4u);
  const int sizes[4] = {16, 8, 4, 2};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p.scales[static_cast<std::size_t>(i)].width(), sizes[i]);
    EXPECT_EQ(p.scales[static_cast<std::size_t>(i)].height(), sizes[i]);
    EXPECT_EQ(p.scales[static_cast<std::size_t>(i)].channels(), kChannelsPerScale);
  }
}

TEST(Pyramid, ConstantImageHasFlatChannels) {
  const GrayImage img(64, 64, 0.7f);
  const FeaturePyramid p = build_pyramid(img, oracle::disk(64, 32, 32, 10));
  for (const auto& s : p.scales)
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x) {
        for (int c : {kGradX, kGradY, kGradMagnitude, kLocalStd, kLaplacian}) EXPECT_EQ(s.at(x, y, c), 0.0);
        EXPECT_NEAR(s.at(x, y, kIntensity), 0.7, 1e-6);
      }
}

TEST(Pyramid, Errors) {
  EXPECT_THROW(build_pyramid(GrayImage(64, 64), BinaryMask(32, 32)), std::invalid_argument);
  EXPECT_THROW(build_pyramid(GrayImage(16, 16), BinaryMask(16, 16)), std::invalid_argument);
}

TEST(Pyramid, ShiftEquivariantByCoarsestStride) {
  // Shifting image and mask by 32 pixels shifts every scale by 32 / stride cells.
  const GrayImage small = noise_image(64, 3);
  GrayImage img(128, 64, 0.0f);
  GrayImage shifted(128, 64, 0.0f);
  BinaryMask mask(128, 64);
  BinaryMask mask_shifted(128, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      img(x, y) = small(x, y);
      shifted(x + 32, y) = small(x, y);
      const bool in = std::hypot(x - 32.0, y - 32.0) < 12;
      mask(x, y) = in;
      mask_shifted(x + 32, y) = in;
    }
  const FeaturePyramid a = build_pyramid(img, mask);
  const FeaturePyramid b = build_pyramid(shifted, mask_shifted);
  for (std::size_t s = 0; s < a.scales.size(); ++s) {
    const int stride = kPyramidStrides[s];
    const int off = 32 / stride;
    // Compare away from the borders, where the replicate padding differs.
    for (int y = 1; y < a.scales[s].height() - 1; ++y)
      for (int x = 1; x < 64 / stride - 1; ++x)
        for (int c = 0; c < kSignedDistance; ++c)
          EXPECT_NEAR(a.scales[s].at(x, y, c), b.scales[s].at(x + off, y, c), 1e-9) << s << " " << c;
  }
}

TEST(Pyramid, SignedDistanceSign) {
  const BinaryMask m = oracle::disk(64, 32, 32, 10);
  const RealRaster d = signed_distance(m);
  EXPECT_GT(d(32, 32), 0.0);
  EXPECT_LT(d(2, 2), 0.0);
  EXPECT_NEAR(d(32, 32), 10.0 / 64.0, 1.5 / 64.0);
}

TEST(Merge, ConstantPyramidStaysConstant) {
  FeaturePyramid p;
  for (int s : {16, 8, 4, 2}) p.scales.emplace_back(s, s, kChannelsPerScale, 0.25);
  const ChannelRaster m = merge_pyramid(p);
  EXPECT_EQ(m.channels(), kMergedChannels);
  EXPECT_EQ(m.width(), 16);
  for (double v : m.values()) EXPECT_EQ(v, 0.25);
}

TEST(Merge, UpsampleBilinearCorners) {
  ChannelRaster src(2, 2, 1);
  src.at(0, 0, 0) = 0;
  src.at(1, 0, 0) = 1;
  src.at(0, 1, 0) = 0;
  src.at(1, 1, 0) = 1;
  const ChannelRaster up = upsample_bilinear(src, 3, 3);
  EXPECT_EQ(up.at(0, 0, 0), 0.0);
  EXPECT_EQ(up.at(2, 0, 0), 1.0);
  EXPECT_EQ(up.at(2, 2, 0), 1.0);
  EXPECT_DOUBLE_EQ(up.at(1, 1, 0), 0.5);
  const ChannelRaster up4 = upsample_bilinear(src, 4, 4);
  EXPECT_EQ(up4.at(0, 3, 0), 0.0);
  EXPECT_EQ(up4.at(3, 3, 0), 1.0);
  EXPECT_NEAR(up4.at(1, 2, 0), 1.0 / 3.0, 1e-15);
}

TEST(Coords, Corners) {
  const ChannelRaster c = coord_map(5, 7);
  EXPECT_EQ(c.at(0, 0, 0), -1.0);
  EXPECT_EQ(c.at(0, 0, 1), -1.0);
  EXPECT_EQ(c.at(6, 4, 0), 1.0);
  EXPECT_EQ(c.at(6, 4, 1), 1.0);
  EXPECT_EQ(c.at(3, 2, 0), 0.0);
  EXPECT_EQ(c.at(3, 2, 1), 0.0);
  EXPECT_THROW(coord_map(1, 4), std::invalid_argument);
}

TEST(Grid, AssembleAndSplit) {
  ChannelRaster merged(16, 16, kMergedChannels);
  Rng rng = make_rng(1, {});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < kMergedChannels; ++c) merged.at(x, y, c) = uniform01(rng);
  const ChannelRaster coords = coord_map(16, 16);
  const FeatureGrid g = assemble_grid(merged, coords);
  EXPECT_EQ(g.dim(), 34);
  EXPECT_EQ(g.values.at(0, 0, kMergedChannels), -1.0);
  const auto [m2, c2] = split_grid(g);
  EXPECT_EQ(m2, merged);
  EXPECT_EQ(c2, coords);
  EXPECT_THROW(assemble_grid(merged, coord_map(8, 8)), std::invalid_argument);
}

TEST(Sample, LatticeMidpointAndClamp) {
  ChannelRaster merged(4, 4, kMergedChannels);
  merged.at(1, 1, 0) = 0;
  merged.at(2, 1, 0) = 0;
  merged.at(1, 2, 0) = 1;
  merged.at(2, 2, 0) = 1;
  merged.at(3, 3, 5) = 7;
  const FeatureGrid g = assemble_grid(merged, coord_map(4, 4));
  const auto at_lattice = bilinear_sample(g, {8.0, 4.0});
  const auto stored = g.values.pixel(2, 1);
  for (std::size_t i = 0; i < at_lattice.size(); ++i) EXPECT_EQ(at_lattice[i], stored[i]);
  EXPECT_DOUBLE_EQ(bilinear_sample(g, {6.0, 6.0})[0], 0.5);
  const auto far = bilinear_sample(g, {1000.0, 1000.0});
  const auto corner = g.values.pixel(3, 3);
  for (std::size_t i = 0; i < far.size(); ++i) EXPECT_EQ(far[i], corner[i]);
  const auto neg = bilinear_sample(g, {-50.0, -3.0});
  EXPECT_EQ(neg[kMergedChannels], -1.0);
  EXPECT_EQ(neg[kMergedChannels + 1], -1.0);
}

TEST(Sample, LinearAlongAxis) {
  ChannelRaster merged(4, 4, kMergedChannels);
  merged.at(1, 0, 3) = 2.0;
  merged.at(2, 0, 3) = 6.0;
  const FeatureGrid g = assemble_grid(merged, coord_map(4, 4));
  for (double t : {0.0, 0.25, 0.5, 0.9})
    EXPECT_NEAR(bilinear_sample(g, {4.0 + 4.0 * t, 0.0})[3], 2.0 + 4.0 * t, 1e-12);
}

TEST(Sequence, ShapeCoordsAndPermutation) {
  PhantomConfig cfg;
  const PhantomSlice s = generate_slice(cfg, 42, 0);
  const FeatureGrid g = build_feature_grid(s.image, s.mask, {});
  const Centroid c = centroid(s.mask);
  const VertexSequence v = generate_vertices_test(extract_boundary(s.mask), c, 90);
  const SequenceFeatures f = sequence_features(g, v);
  ASSERT_EQ(f.rows(), 90);
  ASSERT_EQ(f.cols(), 34);
  EXPECT_TRUE(f.allFinite());
  const double cell = 2.0 / (g.width() - 1);
  for (int k = 0; k < 90; ++k) {
    const auto& p = v.points[static_cast<std::size_t>(k)];
    EXPECT_NEAR(f(k, 32), -1.0 + 2.0 * (p.x / kGridStride) / (g.width() - 1), cell);
    EXPECT_NEAR(f(k, 33), -1.0 + 2.0 * (p.y / kGridStride) / (g.height() - 1), cell);
    EXPECT_GE(f(k, 32), -1.0);
    EXPECT_LE(f(k, 32), 1.0);
  }
  VertexSequence rev = v;
  std::reverse(rev.points.begin(), rev.points.end());
  const SequenceFeatures fr = sequence_features(g, rev);
  for (int k = 0; k < 90; ++k) EXPECT_EQ(fr.row(k), f.row(89 - k));
}

TEST(Ablation, SwitchesZeroChannels) {
  PhantomConfig cfg;
  const PhantomSlice s = generate_slice(cfg, 7, 0);
  const FeatureGrid full = build_feature_grid(s.image, s.mask, {});
  const FeatureGrid no_pyr = build_feature_grid(s.image, s.mask, {false, true});
  const FeatureGrid no_xy = build_feature_grid(s.image, s.mask, {true, false});
  EXPECT_EQ(no_pyr.dim(), 34);
  for (int y = 0; y < full.height(); ++y)
    for (int x = 0; x < full.width(); ++x) {
      for (int c = 0; c < kChannelsPerScale; ++c) EXPECT_EQ(no_pyr.values.at(x, y, c), full.values.at(x, y, c));
      for (int c = kChannelsPerScale; c < kMergedChannels; ++c) EXPECT_EQ(no_pyr.values.at(x, y, c), 0.0);
      for (int c = kMergedChannels; c < 34; ++c) EXPECT_EQ(no_xy.values.at(x, y, c), 0.0);
    }
}

TEST(Standardize, ZeroMeanUnitStd) {
  ChannelRaster r(5, 3, 2);
  Rng rng = make_rng(4, {});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) {
      r.at(x, y, 0) = 3.0 + 2.0 * uniform01(rng);
      r.at(x, y, 1) = 1.5;
    }
  standardize_channels(r);
  double mean = 0, sq = 0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) {
      mean += r.at(x, y, 0);
      sq += r.at(x, y, 0) * r.at(x, y, 0);
      EXPECT_EQ(r.at(x, y, 1), 0.0);
    }
  EXPECT_NEAR(mean / 15, 0.0, 1e-12);
  EXPECT_NEAR(sq / 15, 1.0, 1e-12);
}
