// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "tbs/cli.hpp"
#include "tbs/geometry.hpp"
#include "tbs/gradcheck.hpp"
#include "tbs/metrics.hpp"
#include "tbs/phantom.hpp"
#include "tbs/training.hpp"

namespace fs = std::filesystem;
using namespace tbs;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Shared {
  fs::path work;
  fs::path data;
  fs::path model;
  double f1_full = 0.0;
  bool trained = false;
};

Outcome gradients() {
  GradcheckOptions o;
  o.instances = 20;
  const GradcheckReport r = run_gradcheck(o);
  return {r.passed() && r.instances >= 20,
          std::to_string(r.instances) + " instances, max rel err " + fmt(r.max_rel_error(), 3)};
}

Outcome polar_round_trip() {
  Rng rng = make_rng(2, {});
  double worst = 0.0;
  std::size_t count = 0;
  auto check = [&](Point p, Centroid c) {
    const Point q = from_polar(to_polar(p, c), c);
    worst = std::max({worst, std::abs(q.x - p.x), std::abs(q.y - p.y)});
    ++count;
  };
  for (int i = 0; i < 10000; ++i) {
    const Centroid c{uniform(rng, 0, 64), uniform(rng, 0, 64)};
    check({uniform(rng, -10, 74), uniform(rng, -10, 74)}, c);
  }
  PhantomConfig cfg;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const PhantomSlice s = generate_slice(cfg, derive_seed(2, {i}), 0);
    const BoundaryMask b = extract_boundary(s.mask);
    const Centroid c = centroid(s.mask);
    for (int y = 0; y < b.height(); ++y)
      for (int x = 0; x < b.width(); ++x)
        if (b.support(x, y)) check({double(x), double(y)}, c);
  }
  return {worst <= 1e-9, std::to_string(count) + " points, max coordinate error " + fmt(worst, 3)};
}

Outcome morphology() {
  Rng rng = make_rng(3, {});
  int exact = 0;
  for (int i = 0; i < 50; ++i) {
    const BinaryMask m = oracle::random_mask(rng, 64, 64);
    const BoundaryMask b = extract_boundary(m);
    const oracle::Boundary o = oracle::boundary(m);
    const auto w = b.weights.values();
    const auto s = b.support.values();
    exact += std::equal(w.begin(), w.end(), o.weights.begin()) && std::equal(s.begin(), s.end(), o.support.begin());
  }
  return {exact == 50, std::to_string(exact) + "/50 masks bit-exact"};
}

Outcome metric_oracles() {
  Rng rng = make_rng(4, {});
  int ok = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = uniform_int(rng, 2, 500);
    LabelSequence pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> pos(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = uniform_int(rng, 0, 2);
      truth[i] = uniform_int(rng, 0, 2);
      scores[i] = uniform_int(rng, 0, 12) / 12.0;
      pos[i] = uniform01(rng) < 0.4;
    }
    pos[0] = 1;
    pos[1] = 0;
    const std::vector<LabelSequence> p{pred}, g{truth};
    const SeqMetrics m = seq_metrics(p, g);
    const oracle::MacroScores o = oracle::macro_scores(pred, truth, 3);
    const auto auc = rank_auc(scores, pos);
    ok += m.f1 == o.f1 && m.precision == o.precision && m.recall == o.recall && m.accuracy == o.accuracy && auc &&
          *auc == oracle::pairwise_auc(scores, pos);
  }
  return {ok == 50, std::to_string(ok) + "/50 instances exact"};
}

Outcome loss_analytics() {
  const LabelSequence y{0, 1, 2, 2, 0, 1, 0};
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(7, 3);
  for (int i = 0; i < 7; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;
  const double perfect = seq_dice_ce_loss(onehot, y).value.total;
  LabelSequence balanced;
  for (int i = 0; i < 900; ++i) balanced.push_back(i % 3);
  const SeqLoss u = seq_dice_ce_loss(Eigen::MatrixXd::Constant(900, 3, 1.0 / 3.0), balanced);
  const bool pass = perfect <= 1e-5 && std::abs(u.value.dice_part - 2.0 / 3.0) <= 1e-9 &&
                    std::abs(u.value.ce_part - std::log(3.0)) <= 1e-9;
  return {pass, "perfect total " + fmt(perfect, 3) + ", uniform dice " + fmt(u.value.dice_part, 12) + ", ce " +
                    fmt(u.value.ce_part, 12)};
}

double eval_f1(const Shared& sh, EvalOptions o) {
  o.data = sh.data;
  o.model = sh.model;
  return eval_report(o)["fraction"]["f1"].get<double>();
}

Outcome end_to_end(Shared& sh) {
  std::ostringstream log;
  GenOptions g;
  g.out = sh.data = sh.work / "data";
  cmd_gen(g, log);
  TrainOptions t;
  t.data = sh.data;
  t.out = sh.model = sh.work / "model.json";
  const auto start = std::chrono::steady_clock::now();
  cmd_train(t, log);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  sh.trained = true;
  sh.f1_full = eval_f1(sh, {});

  const auto test = load_dataset(sh.data).slices(Split::test);
  std::vector<LabelSequence> truth, majority;
  for (const auto& s : test) {
    truth.push_back(s.gt_label_sequence);
    majority.emplace_back(s.gt_label_sequence.size(), 0);
  }
  const double base = seq_metrics(majority, truth).f1;
  const bool pass = sh.f1_full >= 0.85 && sh.f1_full >= base + 0.5 && seconds < 300.0;
  return {pass, "test macro-F1 " + fmt(sh.f1_full) + ", majority baseline " + fmt(base) + ", training " +
                    fmt(seconds, 3) + " s"};
}

Outcome ablations(const Shared& sh) {
  if (!sh.trained) return {false, "no trained model"};
  EvalOptions np;
  np.no_pyrafeat = true;
  EvalOptions nc;
  nc.no_coordpos = true;
  EvalOptions n30;
  n30.n_vertices = 30;
  const double a = eval_f1(sh, np), b = eval_f1(sh, nc), c = eval_f1(sh, n30);
  const bool pass = sh.f1_full - a >= 0.01 && sh.f1_full - b >= 0.01 && c <= sh.f1_full + 0.02;
  return {pass, "full " + fmt(sh.f1_full) + ", no-pyrafeat " + fmt(a) + " (drop " + fmt(sh.f1_full - a, 6) +
                    "), no-coordpos " + fmt(b) + " (drop " + fmt(sh.f1_full - b, 6) + "), N=30 " + fmt(c) +
                    "; each drop must be >= 0.01"};
}

Outcome robustness(const Shared& sh) {
  if (!sh.trained) return {false, "no trained model"};
  EvalOptions o;
  o.perturb = 2.0;
  const double f = eval_f1(sh, o);
  return {std::abs(sh.f1_full - f) < 0.10, "perturbed 2 px macro-F1 " + fmt(f) + ", change " +
                                               fmt(std::abs(sh.f1_full - f), 3)};
}

json biomarker_rows(const Shared& sh, const std::string& name, double flip) {
  std::ostringstream log;
  GenOptions g;
  g.out = sh.work / name;
  g.patients = 40;
  g.mvi_flip_prob = flip;
  g.seed = 9;
  cmd_gen(g, log);
  BiomarkerOptions b;
  b.data = g.out;
  b.model = sh.model;
  const json report = biomarker_report(b);
  json by_name;
  for (const auto& row : report["rows"]) by_name[row["name"].get<std::string>()] = row["heldout"];
  return by_name;
}

Outcome biomarker(const Shared& sh) {
  if (!sh.trained) return {false, "no trained model"};
  const auto start = std::chrono::steady_clock::now();
  const json clean = biomarker_rows(sh, "bio_clean", 0.0);
  const json noisy = biomarker_rows(sh, "bio_noisy", 0.05);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double j = clean["upper_bound"]["j"].get<double>();
  auto auc = [](const json& r) { return r["auc"].is_null() ? 0.0 : r["auc"].get<double>(); };
  const double ub = auc(noisy["upper_bound"]), pr = auc(noisy["prediction"]);
  const bool pass = j >= 0.95 && ub >= 0.90 && pr >= 0.90 && std::abs(ub - pr) <= 0.10 && seconds < 30.0;
  return {pass, "flip 0: upper-bound J " + fmt(j) + "; flip 0.05: AUC upper-bound " + fmt(ub) + ", prediction " +
                    fmt(pr) + "; " + fmt(seconds, 3) + " s"};
}

Outcome determinism(const Shared& sh) {
  std::ostringstream log;
  std::vector<std::string> mismatched;
  std::string runs[2][5];
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = sh.work / ("det" + std::to_string(r));
    GenOptions g;
    g.out = dir / "data";
    g.train = 20;
    g.val = 5;
    g.test = 5;
    g.patients = 10;
    g.seed = 4;
    cmd_gen(g, log);
    TrainOptions t;
    t.data = g.out;
    t.out = dir / "model.json";
    t.sgd.epochs = 5;
    t.seed = 4;
    cmd_train(t, log);
    EvalOptions e;
    e.data = g.out;
    e.model = t.out;
    e.out = dir / "eval.json";
    e.perturb = 1.0;
    e.seed = 4;
    cmd_eval(e, log);
    BiomarkerOptions b;
    b.data = g.out;
    b.model = t.out;
    b.out = dir / "biomarker.json";
    b.seed = 4;
    cmd_biomarker(b, log);
    std::string gen_bytes;
    for (const auto& entry : fs::recursive_directory_iterator(g.out))
      if (entry.is_regular_file()) {
        gen_bytes += fs::relative(entry.path(), g.out).string();
        gen_bytes += slurp(entry.path());
      }
    runs[r][0] = gen_bytes;
    runs[r][1] = slurp(t.out);
    runs[r][2] = slurp(dir / "model.history.jsonl");
    runs[r][3] = slurp(e.out);
    runs[r][4] = slurp(b.out);
  }
  const char* names[5] = {"gen", "train", "history", "eval", "biomarker"};
  for (int i = 0; i < 5; ++i)
    if (runs[0][i] != runs[1][i] || runs[0][i].empty()) mismatched.push_back(names[i]);
  std::string detail = mismatched.empty() ? "gen, train, history, eval, biomarker byte-identical" : "differs:";
  for (const auto& m : mismatched) detail += " " + m;
  return {mismatched.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Shared sh;
  sh.work = fs::temp_directory_path() / "tbs_acceptance";
  app.add_option("--workdir", sh.work, "scratch directory (recreated)");
  CLI11_PARSE(app, argc, argv);
  fs::remove_all(sh.work);
  fs::create_directories(sh.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"polar round trip", polar_round_trip},
      {"morphology oracle", morphology},
      {"metric oracles", metric_oracles},
      {"loss analytics", loss_analytics},
      {"end-to-end phantom learning", [&] { return end_to_end(sh); }},
      {"ablation direction", [&] { return ablations(sh); }},
      {"boundary-shift robustness", [&] { return robustness(sh); }},
      {"biomarker pipeline", [&] { return biomarker(sh); }},
      {"determinism", [&] { return determinism(sh); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << out.detail
              << " [" << fmt(seconds, 3) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
