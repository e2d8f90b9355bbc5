#include "tbs/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace tbs {

namespace {

constexpr double kScale = 8.0;  // SVG units per pixel
constexpr double kStripHeight = 16.0;
constexpr double kMargin = 12.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string_view color_of(int cls) {
  if (cls < 0 || cls >= kNumClasses) throw std::invalid_argument("label out of range");
  return kClassColors[static_cast<std::size_t>(cls)];
}

void band_strip(std::ostringstream& svg, const char* id, const char* caption, const LabelSequence& labels,
                double top, double width) {
  const double cell = width / static_cast<double>(labels.size());
  svg << "  <g id=\"" << id << "\">\n";
  svg << "    <text x=\"" << fmt(kMargin) << "\" y=\"" << fmt(top - 3) << "\" font-size=\"10\">" << caption
      << "</text>\n";
  for (std::size_t k = 0; k < labels.size(); ++k) {
    svg << "    <rect x=\"" << fmt(kMargin + cell * static_cast<double>(k)) << "\" y=\"" << fmt(top)
        << "\" width=\"" << fmt(cell) << "\" height=\"" << fmt(kStripHeight) << "\" fill=\"" << color_of(labels[k])
        << "\"/>\n";
  }
  svg << "  </g>\n";
}

}  // namespace

std::string render_overlay_svg(const OverlayInput& in) {
  const auto& pts = in.vertices.points;
  if (pts.size() != in.predicted.size()) throw std::invalid_argument("one predicted label per vertex required");
  if (!in.ground_truth.empty() && in.ground_truth.size() != pts.size())
    throw std::invalid_argument("one ground-truth label per vertex required");

  const double view_w = in.width * kScale;
  const double view_h = in.height * kScale;
  const double strips_top = kMargin + view_h + 2 * kMargin;
  const double total_w = view_w + 2 * kMargin;
  const double total_h = strips_top + 2 * (kStripHeight + 2 * kMargin);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(total_w) << "\" height=\""
      << fmt(total_h) << "\" viewBox=\"0 0 " << fmt(total_w) << " " << fmt(total_h) << "\">\n";
  if (!in.title.empty()) svg << "  <title>" << in.title << "</title>\n";
  svg << "  <rect x=\"" << fmt(kMargin) << "\" y=\"" << fmt(kMargin) << "\" width=\"" << fmt(view_w)
      << "\" height=\"" << fmt(view_h) << "\" fill=\"#202020\"/>\n";

  auto sx = [&](double x) { return fmt(kMargin + (x + 0.5) * kScale); };
  auto sy = [&](double y) { return fmt(kMargin + (y + 0.5) * kScale); };

  svg << "  <g id=\"start-ray\" stroke=\"#ffffff\" stroke-width=\"1.5\" stroke-dasharray=\"4,3\">\n";
  if (!pts.empty())
    svg << "    <line x1=\"" << sx(in.vertices.pole.x) << "\" y1=\"" << sy(in.vertices.pole.y) << "\" x2=\""
        << sx(pts[0].x) << "\" y2=\"" << sy(pts[0].y) << "\"/>\n";
  svg << "  </g>\n";

  // Segment k joins vertex k to vertex k+1 (closing back to vertex 0).
  svg << "  <g id=\"boundary\" stroke-width=\"3\" stroke-linecap=\"round\">\n";
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Point& a = pts[k];
    const Point& b = pts[(k + 1) % pts.size()];
    svg << "    <line x1=\"" << sx(a.x) << "\" y1=\"" << sy(a.y) << "\" x2=\"" << sx(b.x) << "\" y2=\"" << sy(b.y)
        << "\" stroke=\"" << color_of(in.predicted[k]) << "\"/>\n";
  }
  svg << "  </g>\n";

  band_strip(svg, "band-prediction", "prediction (clockwise from 0 deg)", in.predicted, strips_top, view_w);
  if (!in.ground_truth.empty())
    band_strip(svg, "band-ground-truth", "ground truth", in.ground_truth,
               strips_top + kStripHeight + 2 * kMargin, view_w);
  svg << "</svg>\n";
  return svg.str();
}

std::string render_ppm(const GrayImage& image, const VertexSequence* vertices, const LabelSequence* labels) {
  const int w = image.width();
  const int h = image.height();
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  auto px = [&](int x, int y) { return header + (static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = std::clamp(static_cast<double>(image(x, y)) / 1.2, 0.0, 1.0);
      const auto g = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
      out[px(x, y)] = out[px(x, y) + 1] = out[px(x, y) + 2] = g;
    }
  }
  if (vertices && labels) {
    for (std::size_t k = 0; k < vertices->points.size() && k < labels->size(); ++k) {
      const int x = static_cast<int>(std::lround(vertices->points[k].x));
      const int y = static_cast<int>(std::lround(vertices->points[k].y));
      if (!image.contains(x, y)) continue;
      const std::string_view hex = color_of((*labels)[k]);
      for (int c = 0; c < 3; ++c)
        out[px(x, y) + static_cast<std::size_t>(c)] =
            static_cast<char>(std::stoi(std::string(hex.substr(1 + 2 * static_cast<std::size_t>(c), 2)), nullptr, 16));
    }
  }
  return out;
}

}  // namespace tbs
