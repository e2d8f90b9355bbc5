#include "tbs/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tbs {

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ConfusionMatrix confusion(std::span<const LabelSequence> preds, std::span<const LabelSequence> gts, int classes) {
  if (preds.empty() || gts.empty()) throw std::invalid_argument("no sequences");
  if (preds.size() != gts.size()) throw std::invalid_argument("prediction and ground-truth counts differ");
  ConfusionMatrix cm{classes, std::vector<std::int64_t>(static_cast<std::size_t>(classes * classes), 0)};
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].size() != gts[s].size()) throw std::invalid_argument("sequence length mismatch");
    for (std::size_t k = 0; k < preds[s].size(); ++k) {
      const int t = gts[s][k];
      const int p = preds[s][k];
      if (t < 0 || t >= classes || p < 0 || p >= classes) throw std::invalid_argument("label out of range");
      ++cm.counts[static_cast<std::size_t>(t * classes + p)];
    }
  }
  return cm;
}

std::optional<double> rank_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("score/label length mismatch");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), std::uint8_t{1}));
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j+1 share their mean.
    const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (positive[order[t]]) rank_sum += avg;
    i = j + 1;
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

SeqMetrics seq_metrics(std::span<const LabelSequence> preds, std::span<const LabelSequence> gts,
                       std::span<const Eigen::MatrixXd> probs, int classes) {
  const ConfusionMatrix cm = confusion(preds, gts, classes);
  SeqMetrics m;
  m.per_class.resize(static_cast<std::size_t>(classes));
  std::int64_t trace = 0;
  for (int c = 0; c < classes; ++c) {
    std::int64_t tp = cm.at(c, c);
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (int o = 0; o < classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    trace += tp;
    ClassMetrics& cls = m.per_class[static_cast<std::size_t>(c)];
    cls.support = tp + fn;
    cls.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    cls.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double pr = cls.precision + cls.recall;
    cls.f1 = pr > 0.0 ? 2.0 * cls.precision * cls.recall / pr : 0.0;
    m.precision += cls.precision;
    m.recall += cls.recall;
    m.f1 += cls.f1;
  }
  m.precision /= classes;
  m.recall /= classes;
  m.f1 /= classes;
  m.accuracy = static_cast<double>(trace) / static_cast<double>(cm.total());

  if (!probs.empty()) {
    if (probs.size() != gts.size()) throw std::invalid_argument("probability and ground-truth counts differ");
    std::vector<double> scores;
    std::vector<std::uint8_t> pos;
    double auc_sum = 0.0;
    int auc_classes = 0;
    for (int c = 0; c < classes; ++c) {
      scores.clear();
      pos.clear();
      for (std::size_t s = 0; s < gts.size(); ++s) {
        if (probs[s].rows() != static_cast<Eigen::Index>(gts[s].size()) || probs[s].cols() != classes)
          throw std::invalid_argument("probability matrix shape mismatch");
        for (std::size_t k = 0; k < gts[s].size(); ++k) {
          scores.push_back(probs[s](static_cast<Eigen::Index>(k), c));
          pos.push_back(gts[s][k] == c ? 1 : 0);
        }
      }
      const auto auc = rank_auc(scores, pos);
      m.per_class[static_cast<std::size_t>(c)].auc = auc;
      if (auc) {
        auc_sum += *auc;
        ++auc_classes;
      }
    }
    if (auc_classes > 0) m.auc = auc_sum / auc_classes;
  }
  return m;
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask dimensions differ");
  std::size_t inter = 0;
  std::size_t na = 0;
  std::size_t nb = 0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool x = va[i] != 0;
    const bool y = vb[i] != 0;
    inter += x && y;
    na += x;
    nb += y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

SeqMetrics inter_reader(std::span<const LabelSequence> a, std::span<const LabelSequence> b, int classes) {
  std::vector<Eigen::MatrixXd> onehot;
  onehot.reserve(a.size());
  for (const auto& seq : a) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seq.size()), classes);
    for (std::size_t k = 0; k < seq.size(); ++k)
      if (seq[k] >= 0 && seq[k] < classes) m(static_cast<Eigen::Index>(k), seq[k]) = 1.0;
    onehot.push_back(std::move(m));
  }
  return seq_metrics(a, b, onehot, classes);
}

LabelSequence argmax_rows(const Eigen::MatrixXd& probs) {
  LabelSequence out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace tbs
