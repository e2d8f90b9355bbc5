#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "tbs/image.hpp"
#include "tbs/labels.hpp"

namespace tbs {

/// Per-patient share of boundary elements in each class.
struct BiomarkerVector {
  std::array<double, kNumClasses> ratios{};

  /// The first two ratios; the third is implied by the sum.
  std::array<double, 2> independent() const { return {ratios[0], ratios[1]}; }
};

/// Pools vertex labels over all slices of one patient; every vertex counts once.
BiomarkerVector patient_biomarker(std::span<const LabelSequence> slice_labels);

/// Pixel-count path: 0 marks non-boundary pixels, 1..K mark boundary pixels of class 0..K-1.
BiomarkerVector patient_biomarker_from_masks(std::span<const Raster<std::uint8_t>> class_masks);

using Feature2 = std::array<double, 2>;

struct LogRegModel {
  Feature2 weights{};
  double bias = 0.0;
  double class_weight_pos = 1.0;
  double threshold = 0.5;
  /// Standardization applied before the linear score (fit-set mean and std).
  Feature2 feature_mean{};
  Feature2 feature_scale{1.0, 1.0};

  double score(const Feature2& x) const;
  int predict(const Feature2& x) const { return score(x) >= threshold ? 1 : 0; }
};

struct ProgMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::optional<double> auc;  // absent when only one class is present
  double j = 0.0;
};

struct LogRegOptions {
  int iterations = 5000;
  double lr = 0.1;
};

/// Class-weighted negative log-likelihood (mean over samples) of `model` on the data.
double logreg_loss(const LogRegModel& model, std::span<const Feature2> x, std::span<const int> y);

/// Full-batch gradient descent from zero on standardized features; positives are
/// weighted by class_weight_pos, negatives by 1.
LogRegModel fit_logreg(std::span<const Feature2> x, std::span<const int> y, double class_weight_pos,
                       const LogRegOptions& options = {});

/// Sensitivity/specificity at `threshold` (score >= threshold is positive), rank AUC, J.
/// A rate with an empty denominator is reported as 0.
ProgMetrics prog_metrics(std::span<const double> scores, std::span<const int> labels, double threshold);

std::vector<double> default_weight_grid();
std::vector<double> default_threshold_grid();

struct YoudenFit {
  LogRegModel model;
  ProgMetrics metrics;  // on the data the grid was swept over
};

/// One fit per class weight, every threshold swept; keeps the (weight, threshold) pair with
/// the largest J, ties toward the smaller weight and then the smaller threshold.
YoudenFit tune_youden(std::span<const Feature2> x, std::span<const int> y, std::span<const double> weight_grid,
                      std::span<const double> threshold_grid, const LogRegOptions& options = {});

}  // namespace tbs
