#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "tbs/dataset_io.hpp"

namespace tbs {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitCheckFailed = 3 };

struct GenOptions {
  std::filesystem::path out;
  int train = 200;
  int val = 50;
  int test = 50;
  int patients = 0;  // 0: one patient per five slices
  std::uint64_t seed = 0;
  int size = 64;
  int n_vertices = 90;
  double mvi_flip_prob = 0.05;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;      // checkpoint
  std::filesystem::path history;  // default: <out without extension>.history.jsonl
  SgdConfig sgd;
  int hidden = 64;
  int n_vertices = 90;
  bool no_pyrafeat = false;
  bool no_coordpos = false;
  bool timing = false;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::filesystem::path data;
  std::filesystem::path model;
  std::filesystem::path out;  // report; empty prints to stdout only
  Split split = Split::test;
  bool no_pyrafeat = false;
  bool no_coordpos = false;
  int n_vertices = 0;  // 0: the checkpoint's N
  double perturb = 0.0;
  std::uint64_t seed = 0;
};

struct InferOptions {
  std::filesystem::path data;
  std::filesystem::path model;
  std::filesystem::path out;  // SVG
  std::filesystem::path ppm;  // optional raster
  Split split = Split::test;
  std::string patient;        // empty: first slice of the split
  int slice_index = -1;       // with an empty patient, the position in the split
  int n_vertices = 0;
};

struct BiomarkerOptions {
  std::filesystem::path data;
  std::filesystem::path model;
  std::filesystem::path out;
  double heldout_fraction = 0.5;
  int iterations = 5000;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

struct GradcheckCliOptions {
  int instances = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  bool inject_gelu_sign_flip = false;
  std::filesystem::path out;
};

/// Each command writes its artifacts and a short summary to `log`, and returns an ExitCode.
/// Library exceptions propagate; run_cli maps them to exit codes.
int cmd_gen(const GenOptions& o, std::ostream& log);
int cmd_train(const TrainOptions& o, std::ostream& log);
int cmd_eval(const EvalOptions& o, std::ostream& log);
int cmd_infer(const InferOptions& o, std::ostream& log);
int cmd_biomarker(const BiomarkerOptions& o, std::ostream& log);
int cmd_gradcheck(const GradcheckCliOptions& o, std::ostream& log);

/// The report cmd_eval writes.
nlohmann::json eval_report(const EvalOptions& o);
/// The report cmd_biomarker writes.
nlohmann::json biomarker_report(const BiomarkerOptions& o);

int run_cli(int argc, char** argv);

}  // namespace tbs
