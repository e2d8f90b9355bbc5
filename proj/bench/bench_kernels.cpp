#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "tbs/phantom.hpp"
#include "tbs/rng.hpp"
#include "tbs/training.hpp"

using namespace tbs;

namespace {

double time_best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool equal) {
  std::printf("%-16s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   outputs %s\n", name, serial * 1e3,
              parallel * 1e3, serial / parallel, equal ? "identical" : "DIFFER");
}

}  // namespace

int main() {
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
  const int reps = 3;

  PhantomConfig cfg;
  cfg.seed = 7;
  const std::vector<int> counts(40, 5);
  std::vector<PatientRecord> a, b;
  const double gs = time_best_of(reps, [&] { a = generate_cohort_serial(cfg, counts); });
  const double gp = time_best_of(reps, [&] { b = generate_cohort(cfg, counts); });
  report("generate_cohort", gs, gp, a == b);

  std::vector<PhantomSlice> slices;
  for (const auto& p : a) slices.insert(slices.end(), p.slices.begin(), p.slices.end());
  const PipelineConfig pipeline;
  const auto prepared = prepare_slices(slices, pipeline);
  const MlpParams params = MlpParams::glorot(kMergedChannels + kCoordChannels, pipeline.hidden, kNumClasses, 1);

  std::vector<const PreparedSlice*> batch;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 64 && i < prepared.size(); ++i) {
    batch.push_back(&prepared[i]);
    seeds.push_back(derive_seed(1, {i}));
  }
  BatchGradient bs, bp;
  const double bgs = time_best_of(reps, [&] { bs = batch_gradient_serial(params, batch, seeds); });
  const double bgp = time_best_of(reps, [&] { bp = batch_gradient(params, batch, seeds); });
  report("batch_gradient", bgs, bgp, bs.grads == bp.grads && bs.mean_loss == bp.mean_loss);

  PredictOptions popt;
  popt.pipeline = pipeline;
  Evaluation es, ep;
  const double evs = time_best_of(reps, [&] { es = evaluate_serial(params, slices, popt); });
  const double evp = time_best_of(reps, [&] { ep = evaluate(params, slices, popt); });
  bool same = es.dsc == ep.dsc && es.mean_loss == ep.mean_loss;
  for (std::size_t i = 0; same && i < es.predictions.size(); ++i)
    same = es.predictions[i].probs == ep.predictions[i].probs;
  report("evaluate", evs, evp, same);
  return 0;
}
