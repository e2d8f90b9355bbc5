#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tbs/features.hpp"
#include "tbs/geometry.hpp"
#include "tbs/labels.hpp"
#include "tbs/metrics.hpp"
#include "tbs/mlp.hpp"
#include "tbs/phantom.hpp"

namespace tbs {

inline constexpr double kDiceSmoothing = 1e-6;
inline constexpr double kProbabilityFloor = 1e-12;

struct SeqLossValue {
  double total = 0.0;
  double dice_part = 0.0;
  double ce_part = 0.0;
};

struct SeqLoss {
  SeqLossValue value;
  Eigen::MatrixXd dlogits;  // d total / d pre-softmax logits, N x K
};

/// Soft dice averaged over classes plus vertex-averaged cross entropy:
///   dice = (1/K) sum_c [1 - 2 sum_k p_kc y_kc / (sum_k p_kc + sum_k y_kc + eps)]
///   ce   = (1/N) sum_k -log max(p_k,label_k, floor)
SeqLoss seq_dice_ce_loss(const ClassProbSequence& probs, const LabelSequence& labels);

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 300;

  void validate() const;
};

struct SgdState {
  MlpParams velocity;
  static SgdState zeros_like(const MlpParams& params);
};

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v, for every tensor.
void sgd_step(MlpParams& params, const MlpParams& grads, SgdState& state, const SgdConfig& cfg);

struct PipelineConfig {
  int n_vertices = 90;
  int hidden = 64;
  FeatureOptions features;
};

/// Everything about a slice that does not change between epochs.
struct PreparedSlice {
  FeatureGrid grid;
  AngularGrids grids;            // train-time candidates
  VertexSequence test_vertices;  // deterministic test-time vertices
  LabelSequence labels;          // ground truth at the N ray angles
  BinaryMask mask;               // the mask the geometry was built from
};

/// `mask` stands in for the predicted tumour mask; pass the slice's own mask for ground truth.
PreparedSlice prepare_slice(const PhantomSlice& slice, const BinaryMask& mask, const PipelineConfig& pipeline);

std::vector<PreparedSlice> prepare_slices(std::span<const PhantomSlice> slices, const PipelineConfig& pipeline);

struct BatchGradient {
  MlpParams grads;          // mean over the batch
  double mean_loss = 0.0;
};

/// Per-slice forward/backward in parallel, then a fixed-order reduction, so the result is
/// bit-identical to batch_gradient_serial.
BatchGradient batch_gradient(const MlpParams& params, std::span<const PreparedSlice* const> batch,
                             std::span<const std::uint64_t> augmentation_seeds);
BatchGradient batch_gradient_serial(const MlpParams& params, std::span<const PreparedSlice* const> batch,
                                    std::span<const std::uint64_t> augmentation_seeds);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  MlpParams best;   // highest validation macro-F1; earliest epoch wins ties
  MlpParams final;
  int best_epoch = -1;
  TrainHistory history;
};

/// Mini-batch SGD on the sequence loss. Shuffling and vertex resampling are keyed by
/// (seed, epoch, slice), so a run is reproducible bit for bit.
TrainResult train(std::span<const PhantomSlice> train_split, std::span<const PhantomSlice> val_split,
                  const SgdConfig& cfg, const PipelineConfig& pipeline, std::uint64_t seed);

struct Prediction {
  VertexSequence vertices;
  ClassProbSequence probs;
  LabelSequence labels;
};

Prediction predict_prepared(const MlpParams& params, const PreparedSlice& prepared);

struct PredictOptions {
  PipelineConfig pipeline;
  double perturb_magnitude = 0.0;  // > 0 replaces the mask by perturb_mask(...)
  std::uint64_t perturb_seed = 0;
};

/// Mask actually used for a slice under `options` (ground truth, or its perturbation).
BinaryMask inference_mask(const PhantomSlice& slice, const PredictOptions& options);

Prediction predict_slice(const MlpParams& params, const PhantomSlice& slice, const PredictOptions& options);

struct Evaluation {
  std::vector<Prediction> predictions;
  std::vector<LabelSequence> ground_truth;
  std::vector<double> dsc;  // used mask vs ground-truth mask, per slice
  SeqMetrics metrics;
  double mean_loss = 0.0;
};

/// Predicts every slice (in parallel) and scores the sequences.
Evaluation evaluate(const MlpParams& params, std::span<const PhantomSlice> slices, const PredictOptions& options);
Evaluation evaluate_serial(const MlpParams& params, std::span<const PhantomSlice> slices,
                           const PredictOptions& options);

}  // namespace tbs
