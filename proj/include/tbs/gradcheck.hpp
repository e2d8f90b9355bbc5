#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbs/mlp.hpp"

namespace tbs {

struct GradcheckOptions {
  int instances = 20;
  int max_input_dim = 8;
  int max_hidden = 8;
  int max_vertices = 7;
  double step = 1e-5;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  ActivationDerivative activation_derivative = gelu_derivative;
};

struct TensorError {
  std::string tensor;  // w1, b1, w2, b2 or logits
  double max_rel_error = 0.0;
  int worst_instance = -1;
  int worst_row = -1;
  int worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<TensorError> tensors;
  int instances = 0;
  double tolerance = 0.0;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
  const TensorError& worst() const;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero coordinates from
/// reporting finite-difference roundoff as a relative error.
double relative_error(double analytic, double numeric);

/// Random MLP + label instances; every parameter coordinate and every logit is compared
/// against central differences of the dice + cross-entropy loss.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace tbs
