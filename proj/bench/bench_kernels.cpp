// Serial reference vs OpenMP kernels on a mid-sized synthetic dataset.
// Run with --benchmark_filter=<name> to pick a kernel.

#include <benchmark/benchmark.h>

#include "dispersion/comparison.hpp"
#include "dispersion/encoders.hpp"
#include "dispersion/forest.hpp"
#include "dispersion/preprocess.hpp"
#include "dispersion/rrae.hpp"
#include "dispersion/synthgen.hpp"

using namespace dispersion;

namespace {

SynthConfig bench_config() {
  SynthConfig c;
  c.n_nodes = 400;
  c.n_runs = 10;
  c.rigid_motion = true;
  c.seed = 11;
  return c;
}

const SynthDataset& dataset() {
  static const SynthDataset ds = generate(bench_config());
  return ds;
}

Execution mode(const benchmark::State& state) { return state.range(0) == 0 ? Execution::Serial : Execution::Parallel; }

void label_mode(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "openmp"); }

void BM_Generate(benchmark::State& state) {
  const auto cfg = bench_config();
  for (auto _ : state) benchmark::DoNotOptimize(generate(cfg, mode(state)));
  label_mode(state);
}

void BM_RemoveRigid(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(remove_rigid_body_motion(dataset().trajectories, mode(state)));
  label_mode(state);
}

void BM_Encode(benchmark::State& state, const char* spec) {
  const auto s = parse_encoding_spec(spec);
  for (auto _ : state) benchmark::DoNotOptimize(encode(dataset().trajectories, s, mode(state)));
  label_mode(state);
}

struct Labeled {
  FeatureMatrix fm;
  std::vector<int> y;
};

const Labeled& slope_features() {
  static const Labeled l = [] {
    Labeled out;
    out.fm = encode(dataset().trajectories, parse_encoding_spec("slope@220"));
    for (std::size_t i = 0; i < out.fm.rows(); ++i) out.y.push_back(dataset().dispersed[i / dataset().trajectories.run_count()]);
    return out;
  }();
  return l;
}

void BM_ForestFit(benchmark::State& state) {
  ForestConfig cfg;
  cfg.n_trees = 32;
  for (auto _ : state) benchmark::DoNotOptimize(fit_forest(slope_features().fm, slope_features().y, cfg, mode(state)));
  label_mode(state);
}

void BM_ForestPredict(benchmark::State& state) {
  ForestConfig cfg;
  cfg.n_trees = 32;
  const auto forest = fit_forest(slope_features().fm, slope_features().y, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(predict_forest(forest, slope_features().fm, mode(state)));
  label_mode(state);
}

void BM_RraePredict(benchmark::State& state) {
  const auto fm = normalize_features(slope_features().fm);
  const Eigen::MatrixXd x = to_matrix(fm);
  RraeHyperparams hp;
  hp.n1_epochs = 1;
  hp.n2_epochs = 1;
  auto model = make_rrae(fm.dim, hp);
  train_rrae(model, x, slope_features().y);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, x, mode(state)));
  label_mode(state);
}

}  // namespace

BENCHMARK(BM_Generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RemoveRigid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Encode, displacement, "displacement")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Encode, fourier, "fourier")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Encode, wavelet, "wavelet")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Encode, slope, "slope")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestPredict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RraePredict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
