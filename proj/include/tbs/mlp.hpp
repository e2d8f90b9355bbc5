#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "tbs/features.hpp"

namespace tbs {

/// Two-layer per-vertex decoder: softmax(gelu(x W1 + b1) W2 + b2), weights shared across rows.
struct MlpParams {
  Eigen::MatrixXd w1;  // D x Hd
  Eigen::VectorXd b1;  // Hd
  Eigen::MatrixXd w2;  // Hd x K
  Eigen::VectorXd b2;  // K

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int hidden_dim() const { return static_cast<int>(w1.cols()); }
  int classes() const { return static_cast<int>(w2.cols()); }

  static MlpParams zeros(int input_dim, int hidden_dim, int classes);
  /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static MlpParams glorot(int input_dim, int hidden_dim, int classes, std::uint64_t seed);

  bool same_shape(const MlpParams& other) const;
  bool all_finite() const;

  /// Visits (name, tensor) for w1, b1, w2, b2 in that order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(std::string_view("w1"), w1);
    f(std::string_view("b1"), b1);
    f(std::string_view("w2"), w2);
    f(std::string_view("b2"), b2);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(std::string_view("w1"), w1);
    f(std::string_view("b1"), b1);
    f(std::string_view("w2"), w2);
    f(std::string_view("b2"), b2);
  }

  /// this += scale * other
  void add_scaled(const MlpParams& other, double scale);
  void scale(double factor);

  bool operator==(const MlpParams& other) const;
};

/// N x K; row k is the class distribution of vertex k.
using ClassProbSequence = Eigen::MatrixXd;

struct ForwardCache {
  Eigen::MatrixXd inputs;  // N x D
  Eigen::MatrixXd pre;     // N x Hd, before GELU
  Eigen::MatrixXd hidden;  // N x Hd
  Eigen::MatrixXd logits;  // N x K
};

struct MlpGradients {
  MlpParams params;
  Eigen::MatrixXd inputs;
};

double gelu(double x);
/// Phi(x) + x * phi(x)
double gelu_derivative(double x);

using ActivationDerivative = double (*)(double);

Eigen::VectorXd softmax(const Eigen::VectorXd& v);
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

std::pair<ClassProbSequence, ForwardCache> forward(const MlpParams& params, const SequenceFeatures& xs);

/// Reverse pass for gradients w.r.t. the logits. `activation_derivative` exists so fault
/// injection can swap in a broken derivative; production callers leave the default.
MlpGradients backward(const MlpParams& params, const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                      ActivationDerivative activation_derivative = gelu_derivative);

}  // namespace tbs
