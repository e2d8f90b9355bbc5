#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "tbs/cli.hpp"
#include "tbs/error.hpp"
#include "tbs/phantom.hpp"
#include "tbs/render.hpp"
#include "tbs/rng.hpp"

using namespace tbs;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("tbs_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "tbs");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

GenOptions small_gen(const fs::path& out) {
  GenOptions g;
  g.out = out;
  g.train = 8;
  g.val = 1;
  g.test = 1;
  g.patients = 5;
  g.seed = 1;
  return g;
}

}  // namespace

TEST(Split, Counts) {
  const SplitCounts c = split_counts(10, {0.8, 0.1, 0.1});
  EXPECT_EQ(c.train, 8u);
  EXPECT_EQ(c.val, 1u);
  EXPECT_EQ(c.test, 1u);
  EXPECT_THROW(split_counts(10, {0.5, 0.1, 0.1}), std::invalid_argument);
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_THROW(parse_split("dev"), std::invalid_argument);
}

TEST(Dataset, RoundTripAndIdempotentResave) {
  TempDir tmp;
  PhantomConfig cfg;
  cfg.seed = 4;
  const auto records = generate_cohort(cfg, std::vector<int>{3, 2, 5});
  const fs::path manifest = write_dataset(records, {0.8, 0.1, 0.1}, tmp.path() / "d", cfg);
  const Dataset d = load_dataset(tmp.path() / "d");
  ASSERT_EQ(d.patients.size(), 3u);
  for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(d.patients[p], records[p]);
  EXPECT_EQ(d.slices(Split::train).size(), 8u);
  EXPECT_EQ(d.slices(Split::val).size(), 1u);
  EXPECT_EQ(d.slices(Split::test).size(), 1u);

  const fs::path again = tmp.path() / "again.json";
  write_manifest(read_manifest(manifest), again);
  EXPECT_EQ(slurp(manifest), slurp(again));
  EXPECT_THROW(write_dataset({}, {}, tmp.path() / "e", cfg), std::invalid_argument);
}

TEST(Dataset, RejectsUnknownMajorVersion) {
  TempDir tmp;
  PhantomConfig cfg;
  const auto records = generate_cohort(cfg, std::vector<int>{1});
  const fs::path manifest = write_dataset(records, {1.0, 0.0, 0.0}, tmp.path(), cfg);
  nlohmann::json j = read_json(manifest);
  j["format_version"] = "2.0";
  write_json_atomic(j, manifest);
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
  j["format_version"] = "1.7";
  write_json_atomic(j, manifest);
  EXPECT_NO_THROW(load_dataset(tmp.path()));
  EXPECT_THROW(load_dataset(tmp.path() / "missing"), DataError);
}

TEST(Checkpoint, ExactRoundTrip) {
  TempDir tmp;
  Checkpoint c;
  c.params = MlpParams::glorot(34, 7, 3, 3);
  c.params.b1.setConstant(1.0 / 3.0);
  c.pipeline.hidden = 7;
  c.pipeline.n_vertices = 30;
  c.pipeline.features.use_coords = false;
  c.sgd.lr = 0.02;
  c.seed = 12345678901234ULL;
  c.best_epoch = 9;
  write_checkpoint(c, tmp.path() / "m.json");
  const Checkpoint r = read_checkpoint(tmp.path() / "m.json");
  EXPECT_EQ(r.params, c.params);
  EXPECT_EQ(r.pipeline.n_vertices, 30);
  EXPECT_EQ(r.pipeline.hidden, 7);
  EXPECT_FALSE(r.pipeline.features.use_coords);
  EXPECT_EQ(r.sgd.lr, 0.02);
  EXPECT_EQ(r.seed, c.seed);
  EXPECT_EQ(r.best_epoch, 9);
  const nlohmann::json j = read_json(tmp.path() / "m.json");
  EXPECT_EQ(j["format_version"], "1.0");
  EXPECT_EQ(j["w1"].size(), 34u * 7u);
}

TEST(Cli, GenExampleAndDeterminism) {
  TempDir tmp;
  std::ostringstream log;
  EXPECT_EQ(cmd_gen(small_gen(tmp.path() / "a"), log), kExitOk);
  EXPECT_EQ(cmd_gen(small_gen(tmp.path() / "b"), log), kExitOk);
  const Manifest m = read_manifest(tmp.path() / "a" / "manifest.json");
  EXPECT_EQ(m.slices.size(), 10u);
  EXPECT_EQ(m.patients.size(), 5u);
  for (const auto& e : fs::recursive_directory_iterator(tmp.path() / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), tmp.path() / "a");
    EXPECT_EQ(slurp(e.path()), slurp(tmp.path() / "b" / rel)) << rel;
  }
}

TEST(Cli, ExitCodes) {
  TempDir tmp;
  const std::string out = (tmp.path() / "x").string();
  EXPECT_EQ(run({"gen", "--out", out, "--train", "0", "--val", "0", "--test", "0"}), kExitUsage);
  EXPECT_EQ(run({"gen", "--bogus"}), kExitUsage);
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"train", "--data", (tmp.path() / "nope").string(), "--out", out}), kExitData);
  EXPECT_EQ(run({"gradcheck", "--instances", "3"}), kExitOk);
  EXPECT_EQ(run({"gradcheck", "--instances", "3", "--inject-gelu-sign-flip"}), kExitCheckFailed);
}

TEST(Cli, TrainEvalInferPipeline) {
  TempDir tmp;
  std::ostringstream log;
  ASSERT_EQ(cmd_gen(small_gen(tmp.path() / "d"), log), kExitOk);

  TrainOptions t;
  t.data = tmp.path() / "d";
  t.out = tmp.path() / "m0.json";
  t.sgd.epochs = 0;
  ASSERT_EQ(cmd_train(t, log), kExitOk);
  const nlohmann::json j0 = read_json(t.out);
  EXPECT_EQ(j0["training"]["lr"], 0.01);
  EXPECT_EQ(j0["training"]["momentum"], 0.9);
  EXPECT_EQ(j0["training"]["weight_decay"], 1e-4);
  EXPECT_EQ(j0["training"]["batch_size"], 64);
  EXPECT_EQ(j0["best_epoch"], -1);
  {
    SgdConfig none;
    none.epochs = 0;
    const Dataset d = load_dataset(t.data);
    EXPECT_EQ(read_checkpoint(t.out).params, train(d.slices(Split::train), {}, none, {}, t.seed).best);
  }

  t.sgd.epochs = 2;
  t.out = tmp.path() / "m1.json";
  ASSERT_EQ(cmd_train(t, log), kExitOk);
  const std::string first = slurp(t.out);
  const std::string first_hist = slurp(tmp.path() / "m1.history.jsonl");
  ASSERT_EQ(cmd_train(t, log), kExitOk);
  EXPECT_EQ(slurp(t.out), first);
  EXPECT_EQ(slurp(tmp.path() / "m1.history.jsonl"), first_hist);
  EXPECT_EQ(count(first_hist, "\n"), 2u);

  EvalOptions e;
  e.data = t.data;
  e.model = t.out;
  e.out = tmp.path() / "r.json";
  ASSERT_EQ(cmd_eval(e, log), kExitOk);
  const nlohmann::json r = read_json(e.out);
  EXPECT_EQ(r["dsc"]["percent"], 100.0);
  EXPECT_EQ(r["per_class"].size(), 3u);
  EvalOptions e0 = e;
  e0.perturb = 0.0;
  e0.seed = 7;
  EXPECT_EQ(eval_report(e0)["fraction"], r["fraction"]);
  EvalOptions both = e;
  both.no_pyrafeat = both.no_coordpos = true;
  const nlohmann::json rb = eval_report(both);
  EXPECT_FALSE(rb["config"]["use_pyramid"].get<bool>());
  EXPECT_FALSE(rb["config"]["use_coords"].get<bool>());

  InferOptions in;
  in.data = t.data;
  in.model = t.out;
  in.out = tmp.path() / "o.svg";
  in.ppm = tmp.path() / "o.ppm";
  ASSERT_EQ(cmd_infer(in, log), kExitOk);
  const std::string svg = slurp(in.out);
  const auto start = svg.find("<g id=\"boundary\"");
  const auto end = svg.find("</g>", start);
  EXPECT_EQ(count(svg.substr(start, end - start), "<line"), 90u);
  const std::string first_svg = svg;
  ASSERT_EQ(cmd_infer(in, log), kExitOk);
  EXPECT_EQ(slurp(in.out), first_svg);
  EXPECT_EQ(slurp(in.ppm).substr(0, 9), "P6\n64 64\n");
  in.patient = "P9999";
  EXPECT_THROW(cmd_infer(in, log), DataError);
}

TEST(Render, UniformGroundTruthStrip) {
  OverlayInput in;
  in.width = in.height = 64;
  in.vertices.n_rays = 6;
  for (int k = 0; k < 6; ++k) in.vertices.points.push_back({32.0 + k, 20.0});
  in.vertices.pole = {32, 32};
  in.predicted = {0, 1, 2, 0, 1, 2};
  in.ground_truth = LabelSequence(6, 0);
  const std::string svg = render_overlay_svg(in);
  const auto gt = svg.substr(svg.find("id=\"band-ground-truth\""));
  EXPECT_EQ(count(gt, "fill=\"#2ca02c\""), 6u);
  EXPECT_EQ(count(gt, "#ff7f0e"), 0u);
  EXPECT_EQ(count(svg, "stroke-dasharray"), 1u);
  EXPECT_EQ(svg, render_overlay_svg(in));
  in.predicted.pop_back();
  EXPECT_THROW(render_overlay_svg(in), std::invalid_argument);
}

TEST(Cli, BiomarkerNeedsTwoPerClass) {
  TempDir tmp;
  PhantomConfig cfg;
  cfg.mvi_flip_prob = 0.0;
  cfg.class_priors = {1.0, 0.0, 0.0};
  const auto records = generate_cohort(cfg, std::vector<int>{1, 1, 1});
  write_dataset(records, {1.0, 0.0, 0.0}, tmp.path() / "d", cfg);
  Checkpoint c;
  c.params = MlpParams::glorot(34, 8, 3, 1);
  c.pipeline.hidden = 8;
  write_checkpoint(c, tmp.path() / "m.json");
  BiomarkerOptions b;
  b.data = tmp.path() / "d";
  b.model = tmp.path() / "m.json";
  std::ostringstream log;
  EXPECT_THROW(cmd_biomarker(b, log), DataError);
}

TEST(Cli, BiomarkerReportRows) {
  TempDir tmp;
  PhantomConfig cfg;
  cfg.seed = 2;
  const auto records = generate_cohort(cfg, 16, {2, 3});
  write_dataset(records, {1.0, 0.0, 0.0}, tmp.path() / "d", cfg);
  Checkpoint c;
  c.params = MlpParams::glorot(34, 8, 3, 1);
  c.pipeline.hidden = 8;
  write_checkpoint(c, tmp.path() / "m.json");
  BiomarkerOptions b;
  b.data = tmp.path() / "d";
  b.model = tmp.path() / "m.json";
  b.iterations = 500;
  const nlohmann::json r = biomarker_report(b);
  ASSERT_EQ(r["rows"].size(), 2u);
  EXPECT_EQ(r["rows"][0]["name"], "upper_bound");
  EXPECT_EQ(r["rows"][1]["name"], "prediction");
  EXPECT_EQ(r["per_patient"].size(), 16u);
  EXPECT_EQ(biomarker_report(b).dump(), r.dump());
}
