#include "foxp2/corpus.hpp"
#include "foxp2/eval.hpp"
#include "foxp2/geometry.hpp"
#include "foxp2/model.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace foxp2;

namespace {

struct Fixture {
  Model model = Model::planted(PlantedConfig{});
  std::vector<std::vector<int>> prompts;
  Mat dZ;

  Fixture() {
    CorpusConfig cc;
    cc.n_units = 120;
    Corpus c = generate_corpus(cc, model.vocab());
    for (const auto& u : c.units) prompts.push_back(u.weak[0]);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    dZ = Mat(300, 6);
    for (Eigen::Index i = 0; i < dZ.rows(); ++i)
      for (Eigen::Index j = 0; j < dZ.cols(); ++j) dZ(i, j) = (j == 0 ? 3.0 : 0.3) * nd(rng);
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_GreedyPrefixes(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(make_eval_prompts(fx().model, fx().prompts, {}, {}, 8, exec_of(s)));
}

void BM_ResidualCollection(benchmark::State& s) {
  auto p = make_eval_prompts(fx().model, fx().prompts, {}, {}, 3, Exec::Serial);
  for (auto _ : s) benchmark::DoNotOptimize(collect_residuals_tf(fx().model, p, 3, exec_of(s)));
}

void BM_BootstrapStability(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(stability_median(fx().dZ, 1, 200, 9, exec_of(s)));
}

}  // namespace

// Arg 0 = serial reference, 1 = OpenMP
BENCHMARK(BM_GreedyPrefixes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResidualCollection)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapStability)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
