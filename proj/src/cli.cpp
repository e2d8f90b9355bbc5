#include "tbs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "tbs/biomarker.hpp"
#include "tbs/error.hpp"
#include "tbs/gradcheck.hpp"
#include "tbs/phantom.hpp"
#include "tbs/render.hpp"
#include "tbs/rng.hpp"

namespace tbs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagBiomarkerSplit = 0x62696f6dULL;

double percent(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_percent(const std::optional<double>& v) { return v ? json(percent(*v)) : json(nullptr); }

double flipped_gelu_derivative(double x) { return -gelu_derivative(x); }

PipelineConfig effective_pipeline(const Checkpoint& ckpt, bool no_pyrafeat, bool no_coordpos, int n_vertices) {
  PipelineConfig p = ckpt.pipeline;
  p.features.use_pyramid = p.features.use_pyramid && !no_pyrafeat;
  p.features.use_coords = p.features.use_coords && !no_coordpos;
  if (n_vertices != 0) {
    if (n_vertices < kMinRays) throw std::invalid_argument("--n-vertices must be at least " + std::to_string(kMinRays));
    p.n_vertices = n_vertices;
  }
  return p;
}

json pipeline_json(const PipelineConfig& p) {
  return {{"n_vertices", p.n_vertices},
          {"hidden", p.hidden},
          {"use_pyramid", p.features.use_pyramid},
          {"use_coords", p.features.use_coords}};
}

json metrics_json(const SeqMetrics& m) {
  json per_class = json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    per_class.push_back({{"class", c},
                         {"support", pc.support},
                         {"precision", percent(pc.precision)},
                         {"recall", percent(pc.recall)},
                         {"f1", percent(pc.f1)},
                         {"auc", optional_percent(pc.auc)}});
  }
  return {{"percent",
           {{"f1", percent(m.f1)},
            {"accuracy", percent(m.accuracy)},
            {"auc", optional_percent(m.auc)},
            {"precision", percent(m.precision)},
            {"recall", percent(m.recall)}}},
          {"fraction",
           {{"f1", m.f1},
            {"accuracy", m.accuracy},
            {"auc", optional_number(m.auc)},
            {"precision", m.precision},
            {"recall", m.recall}}},
          {"per_class", per_class}};
}

json prog_json(const ProgMetrics& m) {
  return {{"sensitivity", m.sensitivity}, {"specificity", m.specificity}, {"auc", optional_number(m.auc)}, {"j", m.j}};
}

json model_json(const LogRegModel& m) {
  return {{"weights", m.weights},
          {"bias", m.bias},
          {"class_weight_pos", m.class_weight_pos},
          {"threshold", m.threshold},
          {"feature_mean", m.feature_mean},
          {"feature_scale", m.feature_scale}};
}

void require_dir_for(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw DataError("cannot create " + parent.string() + ": " + ec.message());
}

const PhantomSlice& find_slice(const Dataset& d, const std::vector<PhantomSlice>& split_slices,
                               const InferOptions& o) {
  if (!o.patient.empty()) {
    const int idx = std::max(o.slice_index, 0);
    for (const auto& p : d.patients)
      for (const auto& s : p.slices)
        if (s.patient_id == o.patient && s.slice_index == idx) return s;
    throw DataError("no slice " + std::to_string(idx) + " for patient " + o.patient);
  }
  const auto pos = static_cast<std::size_t>(std::max(o.slice_index, 0));
  if (pos >= split_slices.size())
    throw DataError(std::string("split ") + split_name(o.split) + " has no slice at position " + std::to_string(pos));
  return split_slices[pos];
}

// Held-out membership for n stratum members: position i is held out when floor((i+1)f) > floor(i f),
// which spreads the held-out picks evenly through the (shuffled) stratum.
std::vector<bool> even_selection(std::size_t n, double f) {
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::floor(static_cast<double>(i + 1) * f) > std::floor(static_cast<double>(i) * f);
  return out;
}

}  // namespace

int cmd_gen(const GenOptions& o, std::ostream& log) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  if (o.train < 0 || o.val < 0 || o.test < 0) throw std::invalid_argument("slice counts must be nonnegative");
  const int total = o.train + o.val + o.test;
  if (total <= 0) throw std::invalid_argument("at least one slice is required");
  const int patients = o.patients > 0 ? o.patients : std::max(1, (total + 4) / 5);
  if (patients > total) throw std::invalid_argument("more patients than slices");

  PhantomConfig cfg;
  cfg.image_size = o.size;
  cfg.n_vertices = o.n_vertices;
  cfg.mvi_flip_prob = o.mvi_flip_prob;
  cfg.seed = o.seed;
  if (!(cfg.clamped() == cfg)) throw std::invalid_argument("--size, --n-vertices or --mvi-flip-prob out of range");

  std::vector<int> counts(static_cast<std::size_t>(patients), total / patients);
  for (int i = 0; i < total % patients; ++i) ++counts[static_cast<std::size_t>(i)];
  const std::vector<PatientRecord> records = generate_cohort(cfg, counts);

  const double n = total;
  const SplitSpec spec{o.train / n, o.val / n, o.test / n};
  const SplitCounts got = split_counts(static_cast<std::size_t>(total), spec);
  if (got.train != static_cast<std::size_t>(o.train) || got.val != static_cast<std::size_t>(o.val))
    throw std::logic_error("split counts did not round trip");
  const fs::path manifest = write_dataset(records, spec, o.out, cfg);
  log << manifest.string() << "\n";
  return kExitOk;
}

int cmd_train(const TrainOptions& o, std::ostream& log) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  if (o.hidden < 1) throw std::invalid_argument("--hidden must be positive");
  if (o.n_vertices < kMinRays) throw std::invalid_argument("--n-vertices must be at least " + std::to_string(kMinRays));
  o.sgd.validate();
  const Dataset d = load_dataset(o.data);
  const auto train_slices = d.slices(Split::train);
  const auto val_slices = d.slices(Split::val);
  if (train_slices.empty()) throw DataError("dataset has no training slices");

  PipelineConfig pipeline;
  pipeline.n_vertices = o.n_vertices;
  pipeline.hidden = o.hidden;
  pipeline.features.use_pyramid = !o.no_pyrafeat;
  pipeline.features.use_coords = !o.no_coordpos;

  const TrainResult r = train(train_slices, val_slices, o.sgd, pipeline, o.seed);
  Checkpoint ckpt{r.best, pipeline, o.sgd, o.seed, r.best_epoch};
  require_dir_for(o.out);
  write_checkpoint(ckpt, o.out);
  fs::path history = o.history;
  if (history.empty()) history = fs::path(o.out).replace_extension(".history.jsonl");
  write_history(r.history, history, o.timing);

  log << "checkpoint " << o.out.string() << "\n";
  log << "history " << history.string() << "\n";
  if (r.best_epoch >= 0) {
    const auto& e = r.history.epochs[static_cast<std::size_t>(r.best_epoch)];
    log << "best epoch " << r.best_epoch << " val macro-F1 " << e.val_macro_f1 << "\n";
  } else {
    log << "no epochs run; initial parameters saved\n";
  }
  return kExitOk;
}

json eval_report(const EvalOptions& o) {
  if (o.perturb < 0.0) throw std::invalid_argument("--perturb must be nonnegative");
  const Checkpoint ckpt = read_checkpoint(o.model);
  const Dataset d = load_dataset(o.data);
  const auto slices = d.slices(o.split);
  if (slices.empty()) throw DataError(std::string("split ") + split_name(o.split) + " is empty");

  PredictOptions popt;
  popt.pipeline = effective_pipeline(ckpt, o.no_pyrafeat, o.no_coordpos, o.n_vertices);
  popt.perturb_magnitude = o.perturb;
  popt.perturb_seed = o.seed;
  const Evaluation ev = evaluate(ckpt.params, slices, popt);

  const double mean_dsc = std::accumulate(ev.dsc.begin(), ev.dsc.end(), 0.0) / static_cast<double>(ev.dsc.size());
  json j = metrics_json(ev.metrics);
  j["format_version"] = kFormatVersion;
  j["split"] = split_name(o.split);
  j["slices"] = slices.size();
  j["mean_loss"] = ev.mean_loss;
  j["dsc"] = {{"percent", percent(mean_dsc)}, {"fraction", mean_dsc}};
  j["config"] = pipeline_json(popt.pipeline);
  j["config"]["perturb_px"] = o.perturb;
  j["config"]["seed"] = o.seed;
  j["config"]["checkpoint_best_epoch"] = ckpt.best_epoch;
  return j;
}

int cmd_eval(const EvalOptions& o, std::ostream& log) {
  const json j = eval_report(o);
  if (!o.out.empty()) {
    require_dir_for(o.out);
    write_json_atomic(j, o.out);
  }
  log << "split " << j["split"].get<std::string>() << ": macro-F1 " << j["percent"]["f1"] << "  accuracy "
      << j["percent"]["accuracy"] << "  AUC " << j["percent"]["auc"] << "  precision " << j["percent"]["precision"]
      << "  recall " << j["percent"]["recall"] << "  DSC " << j["dsc"]["percent"] << "\n";
  return kExitOk;
}

int cmd_infer(const InferOptions& o, std::ostream& log) {
  if (o.out.empty()) throw std::invalid_argument("--out is required");
  const Checkpoint ckpt = read_checkpoint(o.model);
  const Dataset d = load_dataset(o.data);
  const auto split_slices = o.patient.empty() ? d.slices(o.split) : std::vector<PhantomSlice>{};
  const PhantomSlice& slice = find_slice(d, split_slices, o);

  PredictOptions popt;
  popt.pipeline = effective_pipeline(ckpt, false, false, o.n_vertices);
  const Prediction pred = predict_slice(ckpt.params, slice, popt);

  OverlayInput in;
  in.width = slice.image.width();
  in.height = slice.image.height();
  in.vertices = pred.vertices;
  in.predicted = pred.labels;
  in.ground_truth = labels_at_rays(slice.gt_angle_labels, popt.pipeline.n_vertices);
  in.title = slice.patient_id + " slice " + std::to_string(slice.slice_index);
  require_dir_for(o.out);
  write_text_atomic(render_overlay_svg(in), o.out);
  if (!o.ppm.empty()) {
    const std::string ppm = render_ppm(slice.image, &pred.vertices, &pred.labels);
    require_dir_for(o.ppm);
    write_bytes_atomic(std::span<const char>(ppm.data(), ppm.size()), o.ppm);
  }

  std::size_t agree = 0;
  for (std::size_t k = 0; k < pred.labels.size(); ++k) agree += pred.labels[k] == in.ground_truth[k];
  log << in.title << ": " << agree << "/" << pred.labels.size() << " vertices match ground truth\n";
  log << "overlay " << o.out.string() << "\n";
  return kExitOk;
}

json biomarker_report(const BiomarkerOptions& o) {
  if (!(o.heldout_fraction > 0.0 && o.heldout_fraction < 1.0))
    throw std::invalid_argument("--heldout-fraction must be in (0, 1)");
  const Checkpoint ckpt = read_checkpoint(o.model);
  const Dataset d = load_dataset(o.data);
  const auto slices = d.all_slices();
  if (slices.empty()) throw DataError("dataset is empty");

  PredictOptions popt;
  popt.pipeline = ckpt.pipeline;
  const Evaluation ev = evaluate(ckpt.params, slices, popt);

  struct PatientRow {
    std::string id;
    int mvi = 0;
    BiomarkerVector gt;
    BiomarkerVector pred;
    bool heldout = false;
  };
  std::vector<PatientRow> rows;
  std::size_t flat = 0;
  for (const auto& p : d.patients) {
    std::vector<LabelSequence> gt;
    std::vector<LabelSequence> pr;
    for (std::size_t s = 0; s < p.slices.size(); ++s, ++flat) {
      gt.push_back(ev.ground_truth[flat]);
      pr.push_back(ev.predictions[flat].labels);
    }
    if (gt.empty()) throw DataError("patient " + p.patient_id + " has no slices");
    rows.push_back({p.patient_id, p.mvi_label, patient_biomarker(gt), patient_biomarker(pr), false});
  }

  // Stratified held-out selection: each MVI class is shuffled under the seed, then an even
  // fraction of it is held out.
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].mvi == cls) members.push_back(i);
    if (members.size() < 2)
      throw DataError("biomarker analysis needs at least 2 patients per MVI class; class " + std::to_string(cls) +
                      " has " + std::to_string(members.size()));
    Rng rng = make_rng(o.seed, {kTagBiomarkerSplit, static_cast<std::uint64_t>(cls)});
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)))]);
    const auto pick = even_selection(members.size(), o.heldout_fraction);
    for (std::size_t i = 0; i < members.size(); ++i) rows[members[i]].heldout = pick[i];
  }

  const LogRegOptions lro{o.iterations, o.lr};
  const auto weights = default_weight_grid();
  const auto thresholds = default_threshold_grid();
  json report;
  report["format_version"] = kFormatVersion;
  report["patients"] = rows.size();
  report["heldout_fraction"] = o.heldout_fraction;
  report["seed"] = o.seed;
  report["n_vertices"] = popt.pipeline.n_vertices;
  report["rows"] = json::array();

  for (const bool use_pred : {false, true}) {
    std::vector<Feature2> fit_x, held_x;
    std::vector<int> fit_y, held_y;
    for (const auto& r : rows) {
      const Feature2 f = (use_pred ? r.pred : r.gt).independent();
      (r.heldout ? held_x : fit_x).push_back(f);
      (r.heldout ? held_y : fit_y).push_back(r.mvi);
    }
    const YoudenFit fit = tune_youden(fit_x, fit_y, weights, thresholds, lro);
    std::vector<double> scores;
    for (const auto& x : held_x) scores.push_back(fit.model.score(x));
    const ProgMetrics held = prog_metrics(scores, held_y, fit.model.threshold);
    report["rows"].push_back({{"name", use_pred ? "prediction" : "upper_bound"},
                              {"heldout", prog_json(held)},
                              {"fit", prog_json(fit.metrics)},
                              {"model", model_json(fit.model)},
                              {"fit_patients", fit_x.size()},
                              {"heldout_patients", held_x.size()}});
  }

  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"patient_id", r.id},
                     {"mvi", r.mvi},
                     {"heldout", r.heldout},
                     {"gt_ratios", r.gt.ratios},
                     {"pred_ratios", r.pred.ratios}});
  report["per_patient"] = table;
  return report;
}

int cmd_biomarker(const BiomarkerOptions& o, std::ostream& log) {
  const json j = biomarker_report(o);
  if (!o.out.empty()) {
    require_dir_for(o.out);
    write_json_atomic(j, o.out);
  }
  for (const auto& row : j["rows"]) {
    const auto& h = row["heldout"];
    log << row["name"].get<std::string>() << ": sensitivity " << h["sensitivity"] << "  specificity "
        << h["specificity"] << "  AUC " << h["auc"] << "  J " << h["j"] << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckCliOptions& o, std::ostream& log) {
  GradcheckOptions g;
  g.instances = o.instances;
  g.seed = o.seed;
  g.tolerance = o.tolerance;
  if (o.inject_gelu_sign_flip) g.activation_derivative = flipped_gelu_derivative;
  const GradcheckReport r = run_gradcheck(g);

  json tensors = json::array();
  for (const auto& t : r.tensors) {
    log << t.tensor << ": max relative error " << t.max_rel_error << "\n";
    tensors.push_back({{"tensor", t.tensor},
                       {"max_rel_error", t.max_rel_error},
                       {"worst", {{"instance", t.worst_instance}, {"row", t.worst_row}, {"col", t.worst_col}}},
                       {"analytic", t.analytic},
                       {"numeric", t.numeric}});
  }
  if (!o.out.empty()) {
    require_dir_for(o.out);
    write_json_atomic({{"format_version", kFormatVersion},
                       {"instances", r.instances},
                       {"tolerance", r.tolerance},
                       {"passed", r.passed()},
                       {"tensors", tensors}},
                      o.out);
  }
  if (r.passed()) {
    log << "gradcheck PASS over " << r.instances << " instances (tolerance " << r.tolerance << ")\n";
    return kExitOk;
  }
  const TensorError& w = r.worst();
  log << "gradcheck FAIL: worst " << w.tensor << "[" << w.worst_row << "," << w.worst_col << "] in instance "
      << w.worst_instance << ": analytic " << w.analytic << " numeric " << w.numeric << " relative error "
      << w.max_rel_error << "\n";
  return kExitCheckFailed;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Boundary-semantics toolkit: phantom data, per-vertex boundary classification, biomarkers"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a phantom dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--train", gen.train, "Training slices");
  g->add_option("--val", gen.val, "Validation slices");
  g->add_option("--test", gen.test, "Test slices");
  g->add_option("--patients", gen.patients, "Patients (default: one per five slices)");
  g->add_option("--seed", gen.seed, "Seed");
  g->add_option("--size", gen.size, "Image side in pixels");
  g->add_option("--n-vertices", gen.n_vertices, "Vertices per boundary");
  g->add_option("--mvi-flip-prob", gen.mvi_flip_prob, "Probability of flipping each MVI label");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train the vertex classifier");
  t->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  t->add_option("--out,--model", tr.out, "Checkpoint path")->required();
  t->add_option("--history", tr.history, "Per-epoch history (JSON lines)");
  t->add_option("--epochs", tr.sgd.epochs, "Epochs");
  t->add_option("--lr", tr.sgd.lr, "Learning rate");
  t->add_option("--momentum", tr.sgd.momentum, "Momentum");
  t->add_option("--weight-decay", tr.sgd.weight_decay, "Weight decay");
  t->add_option("--batch", tr.sgd.batch_size, "Batch size in slices");
  t->add_option("--hidden", tr.hidden, "Hidden units");
  t->add_option("--n-vertices", tr.n_vertices, "Vertices per boundary");
  t->add_flag("--no-pyrafeat", tr.no_pyrafeat, "Keep only the finest feature scale");
  t->add_flag("--no-coordpos", tr.no_coordpos, "Zero the coordinate channels");
  t->add_flag("--timing", tr.timing, "Record wall time in the history");
  t->add_option("--seed", tr.seed, "Seed");

  EvalOptions ev;
  std::string ev_split = "test";
  auto* e = app.add_subcommand("eval", "Score a checkpoint on one split");
  e->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  e->add_option("--model", ev.model, "Checkpoint")->required();
  e->add_option("--out", ev.out, "Report path");
  e->add_option("--split", ev_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  e->add_flag("--no-pyrafeat", ev.no_pyrafeat, "Keep only the finest feature scale");
  e->add_flag("--no-coordpos", ev.no_coordpos, "Zero the coordinate channels");
  e->add_option("--n-vertices", ev.n_vertices, "Override the checkpoint's vertex count");
  e->add_option("--perturb", ev.perturb, "Perturb masks by up to this many pixels");
  e->add_option("--seed", ev.seed, "Perturbation seed");

  InferOptions in;
  std::string in_split = "test";
  auto* i = app.add_subcommand("infer", "Render the prediction for one slice");
  i->add_option("--data", in.data, "Dataset directory or manifest")->required();
  i->add_option("--model", in.model, "Checkpoint")->required();
  i->add_option("--out", in.out, "SVG path")->required();
  i->add_option("--ppm", in.ppm, "Optional raster (PPM) path");
  i->add_option("--split", in_split, "Split for --slice")->check(CLI::IsMember({"train", "val", "test"}));
  i->add_option("--patient", in.patient, "Patient id");
  i->add_option("--slice", in.slice_index, "Slice index of --patient, else position within --split");
  i->add_option("--n-vertices", in.n_vertices, "Override the checkpoint's vertex count");

  BiomarkerOptions bm;
  auto* b = app.add_subcommand("biomarker", "Capsular biomarker and MVI prediction");
  b->add_option("--data", bm.data, "Dataset directory or manifest")->required();
  b->add_option("--model", bm.model, "Checkpoint")->required();
  b->add_option("--out", bm.out, "Report path");
  b->add_option("--heldout-fraction", bm.heldout_fraction, "Fraction of each MVI class held out");
  b->add_option("--iterations", bm.iterations, "Logistic regression iterations");
  b->add_option("--lr", bm.lr, "Logistic regression step size");
  b->add_option("--seed", bm.seed, "Patient split seed");

  GradcheckCliOptions gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of the loss and network gradients");
  c->add_option("--instances", gc.instances, "Random instances");
  c->add_option("--seed", gc.seed, "Seed");
  c->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  c->add_flag("--inject-gelu-sign-flip", gc.inject_gelu_sign_flip, "Test hook: negate the GELU derivative");
  c->add_option("--out", gc.out, "Report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen, std::cout);
    if (*t) return cmd_train(tr, std::cout);
    if (*e) {
      ev.split = parse_split(ev_split);
      return cmd_eval(ev, std::cout);
    }
    if (*i) {
      in.split = parse_split(in_split);
      return cmd_infer(in, std::cout);
    }
    if (*b) return cmd_biomarker(bm, std::cout);
    if (*c) return cmd_gradcheck(gc, std::cout);
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace tbs
