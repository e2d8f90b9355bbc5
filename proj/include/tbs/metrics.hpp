#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tbs/image.hpp"
#include "tbs/labels.hpp"

namespace tbs {

/// K x K counts; rows are ground truth, columns are predictions.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth * classes + pred)];
  }
  std::int64_t total() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::int64_t support = 0;
};

/// Macro averages over the K classes, each a fraction in [0, 1].
struct SeqMetrics {
  double f1 = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> auc;  // absent when no probabilities were supplied
  std::vector<ClassMetrics> per_class;
};

ConfusionMatrix confusion(std::span<const LabelSequence> preds, std::span<const LabelSequence> gts,
                          int classes = kNumClasses);

/// Mann-Whitney rank statistic; tied scores share their average rank, so a tie counts 1/2.
/// Empty when either group is empty.
std::optional<double> rank_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Per-class precision/recall/F1 (0 when the denominator is 0), macro averaged; accuracy is
/// trace/total. AUC is macro one-vs-rest over the classes that have both positives and
/// negatives, computed only when `probs` is nonempty (one N x K matrix per sequence).
SeqMetrics seq_metrics(std::span<const LabelSequence> preds, std::span<const LabelSequence> gts,
                       std::span<const Eigen::MatrixXd> probs = {}, int classes = kNumClasses);

/// Dice similarity 2|A n B| / (|A| + |B|), 1 when both masks are empty.
double dsc(const BinaryMask& a, const BinaryMask& b);

/// Reader a scored against reader b as ground truth; AUC uses a's labels as one-hot scores.
SeqMetrics inter_reader(std::span<const LabelSequence> a, std::span<const LabelSequence> b,
                        int classes = kNumClasses);

/// Highest-probability class per row, ties toward the smaller index.
LabelSequence argmax_rows(const Eigen::MatrixXd& probs);

}  // namespace tbs
