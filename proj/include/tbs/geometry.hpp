#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tbs/image.hpp"
#include "tbs/rng.hpp"

namespace tbs {

/// Dilation/erosion residual of a mask after a 5x5 Gaussian blur.
struct BoundaryMask {
  RealRaster weights;  // blurred residual, in [0, 1]
  BinaryMask support;  // weights > 0.5 * peak

  int width() const { return weights.width(); }
  int height() const { return weights.height(); }
};

/// The pole of the polar transform: the mask's centre of mass.
struct Centroid {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Centroid&) const = default;
};

/// Radius in pixels, angle in degrees in [0, 360), measured from +x toward +y (clockwise on screen).
struct PolarPoint {
  double r = 0.0;
  double theta = 0.0;
  bool operator==(const PolarPoint&) const = default;
};

struct AngularGrids {
  int n_rays = 0;
  double delta_theta = 0.0;
  Centroid pole;
  /// grids[k] holds the boundary pixels whose nearest ray is k-1, k or k+1 (mod N).
  std::vector<std::vector<PolarPoint>> grids;
  /// 1 where grid k was empty and holds a single interpolated candidate.
  std::vector<std::uint8_t> synthetic;

  int fallback_count() const;
};

struct VertexSequence {
  int n_rays = 0;
  std::vector<Point> points;
  Centroid pole;
  std::vector<std::uint8_t> synthetic;

  int fallback_count() const;
  bool operator==(const VertexSequence&) const = default;
};

inline constexpr int kMinRays = 4;

/// Normalized 5x5 Gaussian (sigma 1), row-major.
std::array<double, 25> gaussian_kernel_5x5();

BoundaryMask extract_boundary(const BinaryMask& mask);

Centroid centroid(const BinaryMask& mask);

PolarPoint to_polar(Point p, Centroid pole);
Point from_polar(PolarPoint q, Centroid pole);

/// Index of the ray nearest to angle theta for N equidistant rays.
int nearest_ray(double theta, int n_rays);

/// Circular distance between two angles in degrees, in [0, 180].
double angular_distance(double a, double b);

AngularGrids build_angular_grids(const BoundaryMask& boundary, Centroid pole, int n_rays);

/// Train-time generator: one uniformly drawn candidate per grid.
VertexSequence sample_vertices_train(const AngularGrids& grids, Rng& rng);

/// Test-time generator: per ray, the support pixel with the nearest angle.
VertexSequence generate_vertices_test(const BoundaryMask& boundary, Centroid pole, int n_rays);

/// Moves the boundary of a star-shaped mask along rays from its centroid by a smooth
/// random field bounded by `magnitude` pixels.
BinaryMask perturb_mask(const BinaryMask& mask, double magnitude, Rng& rng);

}  // namespace tbs
