#include "tbs/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string_view>

#include "tbs/rng.hpp"

namespace tbs {

namespace {

constexpr std::uint64_t kTagInit = 0x71;
constexpr std::uint64_t kTagShuffle = 0x72;
constexpr std::uint64_t kTagAugment = 0x73;
constexpr std::uint64_t kTagPerturb = 0x74;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct SliceResult {
  MlpParams grads;
  double loss = 0.0;
};

SliceResult slice_gradient(const MlpParams& params, const PreparedSlice& s, std::uint64_t aug_seed) {
  Rng rng(aug_seed);
  const VertexSequence vs = sample_vertices_train(s.grids, rng);
  const SequenceFeatures xs = sequence_features(s.grid, vs);
  auto [probs, cache] = forward(params, xs);
  const SeqLoss loss = seq_dice_ce_loss(probs, s.labels);
  MlpGradients g = backward(params, cache, loss.dlogits);
  return {std::move(g.params), loss.value.total};
}

BatchGradient reduce(const MlpParams& params, std::vector<SliceResult>& results) {
  BatchGradient out{MlpParams::zeros(params.input_dim(), params.hidden_dim(), params.classes()), 0.0};
  const double inv = 1.0 / static_cast<double>(results.size());
  for (const auto& r : results) {
    out.grads.add_scaled(r.grads, 1.0);
    out.mean_loss += r.loss;
  }
  out.grads.scale(inv);
  out.mean_loss *= inv;
  return out;
}

void check_batch(std::span<const PreparedSlice* const> batch, std::span<const std::uint64_t> seeds) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (batch.size() != seeds.size()) throw std::invalid_argument("one augmentation seed per slice required");
}

double mean_loss(const std::vector<Prediction>& preds, std::span<const LabelSequence> gts) {
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += seq_dice_ce_loss(preds[i].probs, gts[i]).value.total;
  return preds.empty() ? 0.0 : s / static_cast<double>(preds.size());
}

}  // namespace

SeqLoss seq_dice_ce_loss(const ClassProbSequence& probs, const LabelSequence& labels) {
  const Eigen::Index n = probs.rows();
  const Eigen::Index k = probs.cols();
  if (n != static_cast<Eigen::Index>(labels.size())) throw std::invalid_argument("label length mismatch");
  if (n == 0) throw std::invalid_argument("empty sequence");
  for (int l : labels)
    if (l < 0 || l >= k) throw std::invalid_argument("label out of range");

  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  SeqLoss out;
  // Dice part and its gradient w.r.t. probabilities.
  Eigen::MatrixXd g(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double inter = probs.col(c).dot(y.col(c));
    const double denom = probs.col(c).sum() + y.col(c).sum() + kDiceSmoothing;
    out.value.dice_part += 1.0 - 2.0 * inter / denom;
    g.col(c) = (-2.0 / static_cast<double>(k)) * (y.col(c).array() / denom - inter / (denom * denom)).matrix();
  }
  out.value.dice_part /= static_cast<double>(k);

  // Softmax Jacobian: dz_j = p_j (g_j - sum_c g_c p_c).
  const Eigen::VectorXd gp = probs.cwiseProduct(g).rowwise().sum();
  out.dlogits = probs.cwiseProduct(g.colwise() - gp);

  // Cross entropy; its logit gradient is (p - y) / N wherever the floor is inactive.
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    const double p = probs(i, l);
    if (p > kProbabilityFloor) {
      out.value.ce_part -= std::log(p);
      out.dlogits.row(i) += inv_n * (probs.row(i) - y.row(i));
    } else {
      out.value.ce_part -= std::log(kProbabilityFloor);
    }
  }
  out.value.ce_part *= inv_n;
  out.value.total = out.value.dice_part + out.value.ce_part;
  return out;
}

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
}

SgdState SgdState::zeros_like(const MlpParams& p) {
  return {MlpParams::zeros(p.input_dim(), p.hidden_dim(), p.classes())};
}

void sgd_step(MlpParams& params, const MlpParams& grads, SgdState& state, const SgdConfig& cfg) {
  if (!params.same_shape(grads) || !params.same_shape(state.velocity))
    throw std::invalid_argument("optimizer shape mismatch");
  auto update = [&](auto& w, const auto& g, auto& v) {
    v = cfg.momentum * v + g + cfg.weight_decay * w;
    w -= cfg.lr * v;
  };
  update(params.w1, grads.w1, state.velocity.w1);
  update(params.b1, grads.b1, state.velocity.b1);
  update(params.w2, grads.w2, state.velocity.w2);
  update(params.b2, grads.b2, state.velocity.b2);
}

PreparedSlice prepare_slice(const PhantomSlice& slice, const BinaryMask& mask, const PipelineConfig& pipeline) {
  PreparedSlice p;
  p.mask = mask;
  p.grid = build_feature_grid(slice.image, mask, pipeline.features);
  const BoundaryMask boundary = extract_boundary(mask);
  const Centroid pole = centroid(mask);
  p.grids = build_angular_grids(boundary, pole, pipeline.n_vertices);
  p.test_vertices = generate_vertices_test(boundary, pole, pipeline.n_vertices);
  p.labels = labels_at_rays(slice.gt_angle_labels, pipeline.n_vertices);
  return p;
}

std::vector<PreparedSlice> prepare_slices(std::span<const PhantomSlice> slices, const PipelineConfig& pipeline) {
  std::vector<PreparedSlice> out(slices.size());
  const auto n = static_cast<std::ptrdiff_t>(slices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = slices[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = prepare_slice(s, s.mask, pipeline);
  }
  return out;
}

BatchGradient batch_gradient(const MlpParams& params, std::span<const PreparedSlice* const> batch,
                             std::span<const std::uint64_t> seeds) {
  check_batch(batch, seeds);
  std::vector<SliceResult> results(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    results[u] = slice_gradient(params, *batch[u], seeds[u]);
  }
  return reduce(params, results);
}

BatchGradient batch_gradient_serial(const MlpParams& params, std::span<const PreparedSlice* const> batch,
                                    std::span<const std::uint64_t> seeds) {
  check_batch(batch, seeds);
  std::vector<SliceResult> results;
  results.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) results.push_back(slice_gradient(params, *batch[i], seeds[i]));
  return reduce(params, results);
}

Prediction predict_prepared(const MlpParams& params, const PreparedSlice& prepared) {
  Prediction p;
  p.vertices = prepared.test_vertices;
  p.probs = forward(params, sequence_features(prepared.grid, prepared.test_vertices)).first;
  p.labels = argmax_rows(p.probs);
  return p;
}

TrainResult train(std::span<const PhantomSlice> train_split, std::span<const PhantomSlice> val_split,
                  const SgdConfig& cfg, const PipelineConfig& pipeline, std::uint64_t seed) {
  cfg.validate();
  if (train_split.empty()) throw std::invalid_argument("empty training split");

  TrainResult result;
  const int dim = kMergedChannels + kCoordChannels;
  MlpParams params = MlpParams::glorot(dim, pipeline.hidden, kNumClasses, derive_seed(seed, {kTagInit}));
  result.best = params;
  result.final = params;
  if (cfg.epochs == 0) return result;

  const std::vector<PreparedSlice> train_prep = prepare_slices(train_split, pipeline);
  const std::vector<PreparedSlice> val_prep = prepare_slices(val_split, pipeline);
  std::vector<LabelSequence> val_labels;
  for (const auto& v : val_prep) val_labels.push_back(v.labels);

  SgdState state = SgdState::zeros_like(params);
  std::vector<std::size_t> order(train_prep.size());
  double best_f1 = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
    // Fisher-Yates with our own uniform draw; std::shuffle's draw pattern is library specific.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle_rng, 0, static_cast<int>(i - 1)))]);

    double loss_sum = 0.0;
    std::vector<const PreparedSlice*> batch;
    std::vector<std::uint64_t> seeds;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      seeds.clear();
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = b; i < end; ++i) {
        batch.push_back(&train_prep[order[i]]);
        seeds.push_back(derive_seed(seed, {kTagAugment, static_cast<std::uint64_t>(epoch), order[i]}));
      }
      const BatchGradient bg = batch_gradient(params, batch, seeds);
      loss_sum += bg.mean_loss * static_cast<double>(batch.size());
      sgd_step(params, bg.grads, state, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.seed = seed;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_prep.empty()) {
      std::vector<Prediction> preds(val_prep.size());
      const auto n = static_cast<std::ptrdiff_t>(val_prep.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < n; ++i)
        preds[static_cast<std::size_t>(i)] = predict_prepared(params, val_prep[static_cast<std::size_t>(i)]);
      std::vector<LabelSequence> pl;
      for (const auto& p : preds) pl.push_back(p.labels);
      rec.val_macro_f1 = seq_metrics(pl, val_labels).f1;
      rec.val_loss = mean_loss(preds, val_labels);
      if (rec.val_macro_f1 > best_f1) {
        best_f1 = rec.val_macro_f1;
        result.best = params;
        result.best_epoch = epoch;
      }
    } else {
      result.best = params;
      result.best_epoch = epoch;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
  }
  result.final = params;
  return result;
}

BinaryMask inference_mask(const PhantomSlice& slice, const PredictOptions& options) {
  if (options.perturb_magnitude <= 0.0) return slice.mask;
  Rng rng = make_rng(options.perturb_seed,
                     {kTagPerturb, fnv1a(slice.patient_id), static_cast<std::uint64_t>(slice.slice_index)});
  return perturb_mask(slice.mask, options.perturb_magnitude, rng);
}

Prediction predict_slice(const MlpParams& params, const PhantomSlice& slice, const PredictOptions& options) {
  return predict_prepared(params, prepare_slice(slice, inference_mask(slice, options), options.pipeline));
}

namespace {

Evaluation score(std::vector<Prediction> preds, std::vector<double> dscs, std::span<const PhantomSlice> slices,
                 const PredictOptions& options) {
  Evaluation ev;
  ev.predictions = std::move(preds);
  ev.dsc = std::move(dscs);
  for (const auto& s : slices) ev.ground_truth.push_back(labels_at_rays(s.gt_angle_labels, options.pipeline.n_vertices));
  std::vector<LabelSequence> labels;
  std::vector<Eigen::MatrixXd> probs;
  for (const auto& p : ev.predictions) {
    labels.push_back(p.labels);
    probs.push_back(p.probs);
  }
  ev.metrics = seq_metrics(labels, ev.ground_truth, probs);
  ev.mean_loss = mean_loss(ev.predictions, ev.ground_truth);
  return ev;
}

}  // namespace

Evaluation evaluate(const MlpParams& params, std::span<const PhantomSlice> slices, const PredictOptions& options) {
  if (slices.empty()) throw std::invalid_argument("no slices to evaluate");
  std::vector<Prediction> preds(slices.size());
  std::vector<double> dscs(slices.size());
  const auto n = static_cast<std::ptrdiff_t>(slices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const BinaryMask used = inference_mask(slices[u], options);
    dscs[u] = dsc(used, slices[u].mask);
    preds[u] = predict_prepared(params, prepare_slice(slices[u], used, options.pipeline));
  }
  return score(std::move(preds), std::move(dscs), slices, options);
}

Evaluation evaluate_serial(const MlpParams& params, std::span<const PhantomSlice> slices,
                           const PredictOptions& options) {
  if (slices.empty()) throw std::invalid_argument("no slices to evaluate");
  std::vector<Prediction> preds;
  std::vector<double> dscs;
  for (const auto& s : slices) {
    const BinaryMask used = inference_mask(s, options);
    dscs.push_back(dsc(used, s.mask));
    preds.push_back(predict_prepared(params, prepare_slice(s, used, options.pipeline)));
  }
  return score(std::move(preds), std::move(dscs), slices, options);
}

}  // namespace tbs
