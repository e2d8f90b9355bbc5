#include "tbs/mlp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tbs/rng.hpp"

namespace tbs {

MlpParams MlpParams::zeros(int input_dim, int hidden_dim, int classes) {
  return {Eigen::MatrixXd::Zero(input_dim, hidden_dim), Eigen::VectorXd::Zero(hidden_dim),
          Eigen::MatrixXd::Zero(hidden_dim, classes), Eigen::VectorXd::Zero(classes)};
}

MlpParams MlpParams::glorot(int input_dim, int hidden_dim, int classes, std::uint64_t seed) {
  MlpParams p = zeros(input_dim, hidden_dim, classes);
  Rng rng = make_rng(seed, {0x1417});
  auto fill = [&](Eigen::MatrixXd& m) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    // Row-major draw order so the stream maps onto the checkpoint layout.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = uniform(rng, -a, a);
  };
  fill(p.w1);
  fill(p.w2);
  return p;
}

bool MlpParams::same_shape(const MlpParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && b1.size() == o.b1.size() &&
         w2.rows() == o.w2.rows() && w2.cols() == o.w2.cols() && b2.size() == o.b2.size();
}

bool MlpParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

void MlpParams::add_scaled(const MlpParams& o, double scale) {
  if (!same_shape(o)) throw std::invalid_argument("parameter shape mismatch");
  w1 += scale * o.w1;
  b1 += scale * o.b1;
  w2 += scale * o.w2;
  b2 += scale * o.b2;
}

void MlpParams::scale(double f) {
  w1 *= f;
  b1 *= f;
  w2 *= f;
  b2 *= f;
}

bool MlpParams::operator==(const MlpParams& o) const {
  return same_shape(o) && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) out.row(r) = softmax(logits.row(r).transpose()).transpose();
  return out;
}

std::pair<ClassProbSequence, ForwardCache> forward(const MlpParams& params, const SequenceFeatures& xs) {
  if (xs.cols() != params.w1.rows()) throw std::invalid_argument("feature dimension does not match the decoder");
  ForwardCache cache;
  cache.inputs = xs;
  cache.pre = (xs * params.w1).rowwise() + params.b1.transpose();
  cache.hidden = cache.pre.unaryExpr([](double v) { return gelu(v); });
  cache.logits = (cache.hidden * params.w2).rowwise() + params.b2.transpose();
  return {softmax_rows(cache.logits), std::move(cache)};
}

MlpGradients backward(const MlpParams& params, const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                      ActivationDerivative activation_derivative) {
  if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols())
    throw std::invalid_argument("logit gradient shape mismatch");
  if (cache.inputs.cols() != params.w1.rows() || cache.pre.cols() != params.w1.cols())
    throw std::invalid_argument("forward cache does not match the parameters");
  MlpGradients g;
  g.params.w2 = cache.hidden.transpose() * dlogits;
  g.params.b2 = dlogits.colwise().sum().transpose();
  const Eigen::MatrixXd dhidden = dlogits * params.w2.transpose();
  const Eigen::MatrixXd dpre = dhidden.cwiseProduct(cache.pre.unaryExpr(activation_derivative));
  g.params.w1 = cache.inputs.transpose() * dpre;
  g.params.b1 = dpre.colwise().sum().transpose();
  g.inputs = dpre * params.w1.transpose();
  return g;
}

}  // namespace tbs
