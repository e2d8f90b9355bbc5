#include "tbs/biomarker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tbs/metrics.hpp"

namespace tbs {

namespace {

BiomarkerVector from_counts(const std::array<std::size_t, kNumClasses>& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw std::invalid_argument("no boundary elements to count");
  BiomarkerVector v;
  for (int c = 0; c < kNumClasses; ++c)
    v.ratios[static_cast<std::size_t>(c)] =
        static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(total);
  return v;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_binary(std::span<const Feature2> x, std::span<const int> y) {
  if (x.size() != y.size()) throw std::invalid_argument("feature/label count mismatch");
  if (x.size() < 2) throw std::invalid_argument("need at least two samples");
  bool pos = false;
  bool neg = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("labels must be 0 or 1");
    (v ? pos : neg) = true;
  }
  if (!pos || !neg) throw std::invalid_argument("degenerate labels");
}

}  // namespace

BiomarkerVector patient_biomarker(std::span<const LabelSequence> slice_labels) {
  if (slice_labels.empty()) throw std::invalid_argument("no slices");
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& seq : slice_labels) {
    for (int l : seq) {
      if (l < 0 || l >= kNumClasses) throw std::invalid_argument("label out of range");
      ++counts[static_cast<std::size_t>(l)];
    }
  }
  return from_counts(counts);
}

BiomarkerVector patient_biomarker_from_masks(std::span<const Raster<std::uint8_t>> class_masks) {
  if (class_masks.empty()) throw std::invalid_argument("no slices");
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& m : class_masks) {
    for (std::uint8_t v : m.values()) {
      if (v == 0) continue;
      if (v > kNumClasses) throw std::invalid_argument("class mask value out of range");
      ++counts[static_cast<std::size_t>(v - 1)];
    }
  }
  return from_counts(counts);
}

double LogRegModel::score(const Feature2& x) const {
  double z = bias;
  for (std::size_t i = 0; i < 2; ++i) z += weights[i] * (x[i] - feature_mean[i]) / feature_scale[i];
  return sigmoid(z);
}

double logreg_loss(const LogRegModel& model, std::span<const Feature2> x, std::span<const int> y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = std::clamp(model.score(x[i]), 1e-15, 1.0 - 1e-15);
    loss -= y[i] ? model.class_weight_pos * std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(x.size());
}

LogRegModel fit_logreg(std::span<const Feature2> x, std::span<const int> y, double class_weight_pos,
                       const LogRegOptions& options) {
  check_binary(x, y);
  if (!(class_weight_pos >= 0.0)) throw std::invalid_argument("class weight must be nonnegative");
  LogRegModel m;
  m.class_weight_pos = class_weight_pos;
  const auto n = static_cast<double>(x.size());
  for (std::size_t f = 0; f < 2; ++f) {
    double mean = 0.0;
    for (const auto& v : x) mean += v[f];
    mean /= n;
    double var = 0.0;
    for (const auto& v : x) var += (v[f] - mean) * (v[f] - mean);
    const double sd = std::sqrt(var / n);
    m.feature_mean[f] = mean;
    m.feature_scale[f] = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<Feature2> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t f = 0; f < 2; ++f) z[i][f] = (x[i][f] - m.feature_mean[f]) / m.feature_scale[f];

  for (int it = 0; it < options.iterations; ++it) {
    Feature2 gw{};
    double gb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = sigmoid(m.bias + m.weights[0] * z[i][0] + m.weights[1] * z[i][1]);
      const double r = y[i] ? class_weight_pos * (p - 1.0) : p;
      gw[0] += r * z[i][0];
      gw[1] += r * z[i][1];
      gb += r;
    }
    m.weights[0] -= options.lr * gw[0] / n;
    m.weights[1] -= options.lr * gw[1] / n;
    m.bias -= options.lr * gb / n;
  }
  return m;
}

ProgMetrics prog_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("score/label count mismatch");
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  std::vector<std::uint8_t> pos(labels.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    pos[i] = labels[i] ? 1 : 0;
    if (labels[i]) {
      (predicted ? tp : fn) += 1;
    } else {
      (predicted ? fp : tn) += 1;
    }
  }
  ProgMetrics m;
  m.sensitivity = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.specificity = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  m.j = m.sensitivity + m.specificity - 1.0;
  m.auc = rank_auc(scores, pos);
  return m;
}

std::vector<double> default_weight_grid() { return {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}; }

std::vector<double> default_threshold_grid() {
  std::vector<double> t;
  for (int i = 0; i <= 100; ++i) t.push_back(i / 100.0);
  return t;
}

YoudenFit tune_youden(std::span<const Feature2> x, std::span<const int> y, std::span<const double> weight_grid,
                      std::span<const double> threshold_grid, const LogRegOptions& options) {
  check_binary(x, y);
  if (weight_grid.empty() || threshold_grid.empty()) throw std::invalid_argument("empty tuning grid");
  std::vector<double> weights(weight_grid.begin(), weight_grid.end());
  std::vector<double> thresholds(threshold_grid.begin(), threshold_grid.end());
  std::sort(weights.begin(), weights.end());
  std::sort(thresholds.begin(), thresholds.end());

  std::vector<LogRegModel> models(weights.size());
  const auto nw = static_cast<std::ptrdiff_t>(weights.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nw; ++i)
    models[static_cast<std::size_t>(i)] = fit_logreg(x, y, weights[static_cast<std::size_t>(i)], options);

  std::optional<YoudenFit> best;
  std::vector<double> scores(x.size());
  for (auto& model : models) {
    for (std::size_t i = 0; i < x.size(); ++i) scores[i] = model.score(x[i]);
    for (double t : thresholds) {
      const ProgMetrics pm = prog_metrics(scores, y, t);
      // Strict improvement only, so the first (smallest) weight and threshold win ties.
      if (!best || pm.j > best->metrics.j) {
        model.threshold = t;
        best = YoudenFit{model, pm};
      }
    }
  }
  return *best;
}

}  // namespace tbs
