#pragma once

#include <vector>

namespace tbs {

/// Boundary-semantic classes, stored 0-based (clinical scale 1..3).
inline constexpr int kNumClasses = 3;

/// One class index per ray, ordered by ray index.
using LabelSequence = std::vector<int>;

}  // namespace tbs
