#include "tbs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tbs/labels.hpp"
#include "tbs/rng.hpp"
#include "tbs/training.hpp"

namespace tbs {

namespace {

constexpr double kRelErrorFloor = 1e-7;

double loss_of_logits(const Eigen::MatrixXd& logits, const LabelSequence& labels) {
  return seq_dice_ce_loss(softmax_rows(logits), labels).value.total;
}

double loss_of_params(const MlpParams& p, const SequenceFeatures& x, const LabelSequence& labels) {
  return seq_dice_ce_loss(forward(p, x).first, labels).value.total;
}

void record(TensorError& e, int instance, int row, int col, double analytic, double numeric) {
  const double r = relative_error(analytic, numeric);
  if (r > e.max_rel_error || e.worst_instance < 0) {
    e.max_rel_error = r;
    e.worst_instance = instance;
    e.worst_row = row;
    e.worst_col = col;
    e.analytic = analytic;
    e.numeric = numeric;
  }
}

template <typename Tensor, typename Loss>
void check_tensor(Tensor& t, const Tensor& analytic, double h, int instance, TensorError& e, Loss&& loss) {
  for (Eigen::Index c = 0; c < t.cols(); ++c) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      const double saved = t(r, c);
      t(r, c) = saved + h;
      const double up = loss();
      t(r, c) = saved - h;
      const double down = loss();
      t(r, c) = saved;
      record(e, instance, static_cast<int>(r), static_cast<int>(c), analytic(r, c), (up - down) / (2.0 * h));
    }
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
  return m;
}

const TensorError& GradcheckReport::worst() const {
  if (tensors.empty()) throw std::logic_error("empty gradcheck report");
  return *std::max_element(tensors.begin(), tensors.end(),
                           [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  if (o.instances < 1 || o.max_input_dim < 1 || o.max_hidden < 1 || o.max_vertices < 1)
    throw std::invalid_argument("gradcheck sizes must be positive");
  GradcheckReport report;
  report.instances = o.instances;
  report.tolerance = o.tolerance;
  for (const char* name : {"w1", "b1", "w2", "b2", "logits"}) report.tensors.push_back({name});
  auto& e_logits = report.tensors[4];

  for (int inst = 0; inst < o.instances; ++inst) {
    Rng rng = make_rng(o.seed, {0x67726164ULL, static_cast<std::uint64_t>(inst)});
    const int d = uniform_int(rng, 1, o.max_input_dim);
    const int hd = uniform_int(rng, 1, o.max_hidden);
    const int n = uniform_int(rng, 1, o.max_vertices);

    MlpParams p = MlpParams::glorot(d, hd, kNumClasses, rng());
    // Nonzero biases so their gradients are exercised away from the initial point.
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = uniform(rng, -0.5, 0.5);
    for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2(i) = uniform(rng, -0.5, 0.5);
    SequenceFeatures x(n, d);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = standard_normal(rng);
    LabelSequence labels(static_cast<std::size_t>(n));
    for (int& l : labels) l = uniform_int(rng, 0, kNumClasses - 1);

    const auto [probs, cache] = forward(p, x);
    const SeqLoss loss = seq_dice_ce_loss(probs, labels);
    const MlpGradients g = backward(p, cache, loss.dlogits, o.activation_derivative);

    Eigen::MatrixXd logits = cache.logits;
    check_tensor(logits, loss.dlogits, o.step, inst, e_logits, [&] { return loss_of_logits(logits, labels); });

    auto loss_fn = [&] { return loss_of_params(p, x, labels); };
    check_tensor(p.w1, g.params.w1, o.step, inst, report.tensors[0], loss_fn);
    check_tensor(p.b1, g.params.b1, o.step, inst, report.tensors[1], loss_fn);
    check_tensor(p.w2, g.params.w2, o.step, inst, report.tensors[2], loss_fn);
    check_tensor(p.b2, g.params.b2, o.step, inst, report.tensors[3], loss_fn);
  }
  return report;
}

}  // namespace tbs
