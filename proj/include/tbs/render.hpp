#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "tbs/geometry.hpp"
#include "tbs/image.hpp"
#include "tbs/labels.hpp"

namespace tbs {

/// Class colours: 0 green, 1 orange, 2 red.
inline constexpr std::array<std::string_view, kNumClasses> kClassColors{"#2ca02c", "#ff7f0e", "#d62728"};

struct OverlayInput {
  int width = 0;   // slice size in pixels
  int height = 0;
  VertexSequence vertices;
  LabelSequence predicted;
  LabelSequence ground_truth;  // may be empty
  std::string title;
};

/// SVG 1.1 document: boundary polyline with one coloured segment per vertex (group
/// id="boundary"), the 0-degree start ray, and two band strips flattened in ray order
/// (ids "band-prediction" and "band-ground-truth").
std::string render_overlay_svg(const OverlayInput& input);

/// Binary PPM (P6) of the slice, grey levels clamped from [0, 1.2]; vertex pixels are
/// painted with their predicted class colour when labels are given.
std::string render_ppm(const GrayImage& image, const VertexSequence* vertices = nullptr,
                       const LabelSequence* labels = nullptr);

}  // namespace tbs
