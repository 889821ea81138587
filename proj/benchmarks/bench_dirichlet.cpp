#include <benchmark/benchmark.h>

#include "fuse/dirichlet.hpp"
#include "fuse/special.hpp"

using namespace fuse;
using namespace fuse::dirichlet;

static void BM_DirichletSample(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    DirichletParams params = DirichletParams::clamped(std::vector<double>(k, 2.5));
    RngStream rng(11);
    for (auto _ : state) {
        auto w = sample(params, rng);
        benchmark::DoNotOptimize(w.w.data());
    }
}
BENCHMARK(BM_DirichletSample)->Arg(4)->Arg(9)->Arg(16);

static void BM_LogPdfGrad(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    DirichletParams params = DirichletParams::clamped(std::vector<double>(k, 2.5));
    RngStream rng(12);
    const auto w = sample(params, rng);
    for (auto _ : state) {
        auto g = log_pdf_grad_alpha(params, w);
        benchmark::DoNotOptimize(g.data());
    }
}
BENCHMARK(BM_LogPdfGrad)->Arg(4)->Arg(16);

static void BM_FitMle(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    DirichletParams truth = DirichletParams::clamped({5.0, 2.0, 3.0});
    RngStream rng(13);
    std::vector<WeightVector> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) samples.push_back(sample(truth, rng));
    for (auto _ : state) {
        auto fit = fit_mle(samples);
        benchmark::DoNotOptimize(fit.params.alpha.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_FitMle)->Arg(60)->Arg(5000);

static void BM_Digamma(benchmark::State& state) {
    double x = 1e-3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(digamma(x));
        x = x < 1e5 ? x * 1.1 : 1e-3;
    }
}
BENCHMARK(BM_Digamma);
