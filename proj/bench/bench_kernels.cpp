// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "lmf/data.hpp"
#include "lmf/loss.hpp"
#include "lmf/model.hpp"

using namespace lmf;

namespace {

constexpr std::size_t kDim = 32, kHidden = 64, kClasses = 8;

struct Fixture {
  std::vector<double> x, logits;
  std::vector<int> y;
  MarginVector margins;
  LossSpec spec;
  ModelParams params;

  explicit Fixture(std::size_t n) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> f(0.0, 1.0);
    x.resize(n * kDim);
    for (auto& v : x) v = f(rng);
    logits.resize(n * kClasses);
    for (auto& v : logits) v = 2.0 * f(rng);
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng() % kClasses));
    spec.kind = LossKind::LMF;
    margins = margins_for(ClassDistribution{{2000, 1300, 800, 500, 300, 200, 150, 100}}, spec);
    params = init_params(Arch::MLP1, kDim, kHidden, kClasses, 2);
  }
};

Execution exec_of(const benchmark::State& s) {
  return s.range(1) ? Execution::Parallel : Execution::Serial;
}

void label(benchmark::State& s) {
  s.SetLabel(s.range(1) ? "parallel" : "serial");
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

void BM_BatchLoss(benchmark::State& s) {
  Fixture fx(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) {
    benchmark::DoNotOptimize(
        batch_loss(fx.logits, kClasses, fx.y, fx.margins, fx.spec, exec_of(s)));
  }
  label(s);
}

void BM_Forward(benchmark::State& s) {
  Fixture fx(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(forward_batch(fx.params, fx.x, exec_of(s)));
  label(s);
}

void BM_LossAndGradient(benchmark::State& s) {
  Fixture fx(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) {
    benchmark::DoNotOptimize(
        loss_and_gradient(fx.params, fx.x, fx.y, fx.margins, fx.spec, exec_of(s)));
  }
  label(s);
}

void BM_Predict(benchmark::State& s) {
  Fixture fx(static_cast<std::size_t>(s.range(0)));
  LongTailSpec ls;
  ls.num_classes = kClasses;
  ls.max_count = static_cast<std::size_t>(s.range(0));
  ls.feature_dim = kDim;
  const auto ds = synth_longtail(ls);
  for (auto _ : s) benchmark::DoNotOptimize(predict(fx.params, ds, exec_of(s)));
  s.SetLabel(s.range(1) ? "parallel" : "serial");
  s.SetItemsProcessed(s.iterations() * static_cast<long long>(ds.size()));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (long n : {256, 4096, 32768}) {
    for (long par : {0, 1}) b->Args({n, par});
  }
}

}  // namespace

BENCHMARK(BM_BatchLoss)->Apply(sizes);
BENCHMARK(BM_Forward)->Apply(sizes);
BENCHMARK(BM_LossAndGradient)->Apply(sizes);
BENCHMARK(BM_Predict)->Apply(sizes);

BENCHMARK_MAIN();
