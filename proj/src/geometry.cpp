#include "tbs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace tbs {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Reflect-101 border: -1 -> 1, n -> n-2.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// Out-of-image neighbours count as background for both operators.
BinaryMask morph3x3(const BinaryMask& mask, bool dilate) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool any = false;
      bool all = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const bool fg = mask.contains(x + dx, y + dy) && mask(x + dx, y + dy) != 0;
          any = any || fg;
          all = all && fg;
        }
      }
      out(x, y) = dilate ? any : all;
    }
  }
  return out;
}

void require_nonempty(const BinaryMask& mask) {
  if (count_foreground(mask) == 0) throw std::invalid_argument("empty mask");
}

struct RayBins {
  std::vector<std::vector<PolarPoint>> bins;
  std::vector<std::vector<Point>> pixels;
};

RayBins bin_support(const BoundaryMask& boundary, Centroid pole, int n_rays) {
  RayBins out;
  out.bins.resize(static_cast<std::size_t>(n_rays));
  out.pixels.resize(static_cast<std::size_t>(n_rays));
  bool any = false;
  for (int y = 0; y < boundary.height(); ++y) {
    for (int x = 0; x < boundary.width(); ++x) {
      if (!boundary.support(x, y)) continue;
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const PolarPoint q = to_polar(p, pole);
      const auto k = static_cast<std::size_t>(nearest_ray(q.theta, n_rays));
      out.bins[k].push_back(q);
      out.pixels[k].push_back(p);
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("empty boundary support");
  return out;
}

double mean_radius(const std::vector<PolarPoint>& bin) {
  double s = 0.0;
  for (const auto& q : bin) s += q.r;
  return s / static_cast<double>(bin.size());
}

// Radius for an empty ray, linearly interpolated (in ray index) between the nearest
// nonempty rays on either side.
double interpolated_radius(const std::vector<std::vector<PolarPoint>>& bins, int k) {
  const int n = static_cast<int>(bins.size());
  int back = 1;
  while (back < n && bins[static_cast<std::size_t>(((k - back) % n + n) % n)].empty()) ++back;
  int fwd = 1;
  while (fwd < n && bins[static_cast<std::size_t>((k + fwd) % n)].empty()) ++fwd;
  const double rb = mean_radius(bins[static_cast<std::size_t>(((k - back) % n + n) % n)]);
  const double rf = mean_radius(bins[static_cast<std::size_t>((k + fwd) % n)]);
  return rb + (rf - rb) * static_cast<double>(back) / static_cast<double>(back + fwd);
}

void require_rays(int n_rays) {
  if (n_rays < kMinRays) throw std::invalid_argument("too few rays");
}

double bilinear_mask(const BinaryMask& mask, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto v = [&](int xi, int yi) -> double { return mask.contains(xi, yi) && mask(xi, yi) ? 1.0 : 0.0; };
  return (1 - fy) * ((1 - fx) * v(x0, y0) + fx * v(x0 + 1, y0)) +
         fy * ((1 - fx) * v(x0, y0 + 1) + fx * v(x0 + 1, y0 + 1));
}

}  // namespace

int AngularGrids::fallback_count() const {
  return static_cast<int>(std::count(synthetic.begin(), synthetic.end(), std::uint8_t{1}));
}

int VertexSequence::fallback_count() const {
  return static_cast<int>(std::count(synthetic.begin(), synthetic.end(), std::uint8_t{1}));
}

std::array<double, 25> gaussian_kernel_5x5() {
  std::array<double, 25> k{};
  double sum = 0.0;
  for (int dy = -2; dy <= 2; ++dy) {
    for (int dx = -2; dx <= 2; ++dx) {
      const double w = std::exp(-0.5 * static_cast<double>(dx * dx + dy * dy));
      k[static_cast<std::size_t>((dy + 2) * 5 + (dx + 2))] = w;
      sum += w;
    }
  }
  for (double& w : k) w /= sum;
  return k;
}

BoundaryMask extract_boundary(const BinaryMask& mask) {
  require_nonempty(mask);
  const BinaryMask dil = morph3x3(mask, true);
  const BinaryMask ero = morph3x3(mask, false);
  const int w = mask.width();
  const int h = mask.height();

  RealRaster residual(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) residual(x, y) = (dil(x, y) && !ero(x, y)) ? 1.0 : 0.0;

  const auto kernel = gaussian_kernel_5x5();
  BoundaryMask out{RealRaster(w, h), BinaryMask(w, h)};
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          acc += kernel[static_cast<std::size_t>((dy + 2) * 5 + (dx + 2))] *
                 residual(reflect_index(x + dx, w), reflect_index(y + dy, h));
        }
      }
      out.weights(x, y) = acc;
      peak = std::max(peak, acc);
    }
  }
  const double threshold = 0.5 * peak;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.support(x, y) = out.weights(x, y) > threshold;
  return out;
}

Centroid centroid(const BinaryMask& mask) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

PolarPoint to_polar(Point p, Centroid pole) {
  const double dx = p.x - pole.x;
  const double dy = p.y - pole.y;
  const double r = std::hypot(dx, dy);
  if (r == 0.0) return {0.0, 0.0};
  double theta = std::atan2(dy, dx) / kDegToRad;
  if (theta < 0.0) theta += 360.0;
  if (theta >= 360.0) theta -= 360.0;
  return {r, theta};
}

Point from_polar(PolarPoint q, Centroid pole) {
  const double t = q.theta * kDegToRad;
  return {q.r * std::cos(t) + pole.x, q.r * std::sin(t) + pole.y};
}

int nearest_ray(double theta, int n_rays) {
  const double delta = 360.0 / n_rays;
  return static_cast<int>(std::lround(theta / delta)) % n_rays;
}

double angular_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

AngularGrids build_angular_grids(const BoundaryMask& boundary, Centroid pole, int n_rays) {
  require_rays(n_rays);
  const RayBins rb = bin_support(boundary, pole, n_rays);
  AngularGrids g;
  g.n_rays = n_rays;
  g.delta_theta = 360.0 / n_rays;
  g.pole = pole;
  g.grids.resize(static_cast<std::size_t>(n_rays));
  g.synthetic.assign(static_cast<std::size_t>(n_rays), 0);
  for (int k = 0; k < n_rays; ++k) {
    auto& grid = g.grids[static_cast<std::size_t>(k)];
    for (int j : {k - 1, k, k + 1}) {
      const auto& bin = rb.bins[static_cast<std::size_t>((j % n_rays + n_rays) % n_rays)];
      grid.insert(grid.end(), bin.begin(), bin.end());
    }
    if (grid.empty()) {
      grid.push_back({interpolated_radius(rb.bins, k), k * g.delta_theta});
      g.synthetic[static_cast<std::size_t>(k)] = 1;
    }
  }
  return g;
}

VertexSequence sample_vertices_train(const AngularGrids& grids, Rng& rng) {
  VertexSequence vs;
  vs.n_rays = grids.n_rays;
  vs.pole = grids.pole;
  vs.synthetic = grids.synthetic;
  vs.points.reserve(grids.grids.size());
  for (const auto& grid : grids.grids) {
    const int i = uniform_int(rng, 0, static_cast<int>(grid.size()) - 1);
    vs.points.push_back(from_polar(grid[static_cast<std::size_t>(i)], grids.pole));
  }
  return vs;
}

VertexSequence generate_vertices_test(const BoundaryMask& boundary, Centroid pole, int n_rays) {
  require_rays(n_rays);
  const RayBins rb = bin_support(boundary, pole, n_rays);
  const double delta = 360.0 / n_rays;
  VertexSequence vs;
  vs.n_rays = n_rays;
  vs.pole = pole;
  vs.synthetic.assign(static_cast<std::size_t>(n_rays), 0);
  vs.points.reserve(static_cast<std::size_t>(n_rays));
  for (int k = 0; k < n_rays; ++k) {
    const auto& bin = rb.bins[static_cast<std::size_t>(k)];
    const double ray_angle = k * delta;
    if (bin.empty()) {
      vs.points.push_back(from_polar({interpolated_radius(rb.bins, k), ray_angle}, pole));
      vs.synthetic[static_cast<std::size_t>(k)] = 1;
      continue;
    }
    const auto& px = rb.pixels[static_cast<std::size_t>(k)];
    std::size_t best = 0;
    auto key = [&](std::size_t i) {
      return std::make_tuple(angular_distance(bin[i].theta, ray_angle), bin[i].r, px[i].y, px[i].x);
    };
    for (std::size_t i = 1; i < bin.size(); ++i)
      if (key(i) < key(best)) best = i;
    vs.points.push_back(px[best]);
  }
  return vs;
}

BinaryMask perturb_mask(const BinaryMask& mask, double magnitude, Rng& rng) {
  if (magnitude < 0.0) throw std::invalid_argument("negative perturbation magnitude");
  if (magnitude == 0.0) return mask;
  const Centroid pole = centroid(mask);

  // delta(theta) = magnitude * sum_j a_j cos(j theta + phi_j) with sum_j a_j = 1.
  constexpr int kTerms = 4;
  std::array<double, kTerms> amp{};
  std::array<double, kTerms> phase{};
  double total = 0.0;
  for (int j = 0; j < kTerms; ++j) {
    amp[static_cast<std::size_t>(j)] = uniform(rng, 0.2, 1.0);
    phase[static_cast<std::size_t>(j)] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    total += amp[static_cast<std::size_t>(j)];
  }
  for (double& a : amp) a /= total;
  auto field = [&](double theta_rad) {
    double d = 0.0;
    for (int j = 0; j < kTerms; ++j)
      d += amp[static_cast<std::size_t>(j)] * std::cos(j * theta_rad + phase[static_cast<std::size_t>(j)]);
    return magnitude * d;
  };

  // Pull each pixel back along its ray by the displacement and read the source mask there.
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const double dx = x - pole.x;
      const double dy = y - pole.y;
      const double rho = std::hypot(dx, dy);
      const double theta = std::atan2(dy, dx);
      const double src = std::max(0.0, rho - field(theta));
      const double v = bilinear_mask(mask, pole.x + src * std::cos(theta), pole.y + src * std::sin(theta));
      out(x, y) = v >= 0.5;
    }
  }
  return out;
}

}  // namespace tbs
