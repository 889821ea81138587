#include <benchmark/benchmark.h>

#include "fuse/fusion.hpp"
#include "fuse/metrics.hpp"
#include "fuse/rng.hpp"
#include "fuse/synth.hpp"

using namespace fuse;

namespace {

Dataset bench_dataset(int users, int channels, int depth) {
    synth::SyntheticSpec spec;
    spec.n_users = users;
    spec.n_items = channels * depth * 3;
    spec.n_channels = channels;
    spec.depth = depth;
    spec.truth_size = depth / 2;
    spec.dim = 8;
    spec.channels.assign(static_cast<std::size_t>(channels),
                         synth::ChannelProfile{"", 0.3, std::nullopt, 0.0});
    spec.master_seed = 7;
    return synth::generate_benchmark(spec);
}

} // namespace

static void BM_MergeUser(benchmark::State& state) {
    const int channels = static_cast<int>(state.range(0));
    const int depth = static_cast<int>(state.range(1));
    const auto ds = bench_dataset(8, channels, depth);
    const auto w = WeightVector::uniform(static_cast<std::size_t>(channels));
    MergeScratch scratch;
    UserIndex user = 0;
    for (auto _ : state) {
        auto merged = merge_user(ds, user, w, depth, scratch);
        benchmark::DoNotOptimize(merged.items.data());
        user = (user + 1) % 8;
    }
    state.SetItemsProcessed(state.iterations() * channels * depth);
}
BENCHMARK(BM_MergeUser)->Args({4, 80})->Args({9, 200})->Args({16, 200});

static void BM_EvaluateObjective(benchmark::State& state) {
    const int users = static_cast<int>(state.range(0));
    const auto ds = bench_dataset(users, 9, 200);
    const auto w = WeightVector::uniform(9);
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_objective(ds, w, 200, Metric::recall));
    }
    state.SetItemsProcessed(state.iterations() * users);
}
BENCHMARK(BM_EvaluateObjective)->Arg(100)->Arg(1000);

static void BM_EvaluateObjectiveThreaded(benchmark::State& state) {
    const auto ds = bench_dataset(1000, 9, 200);
    const auto w = WeightVector::uniform(9);
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_objective(ds, w, 200, Metric::recall, threads));
    }
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_EvaluateObjectiveThreaded)->Arg(1)->Arg(4)->Arg(8);

static void BM_ProjectBoundedSimplex(benchmark::State& state) {
    const std::size_t k = static_cast<std::size_t>(state.range(0));
    RngStream rng(3);
    std::vector<double> raw(k);
    for (double& x : raw) x = rng.uniform();
    for (auto _ : state) {
        auto w = project_to_bounded_simplex(raw, 0.01, 0.5);
        benchmark::DoNotOptimize(w.w.data());
    }
}
BENCHMARK(BM_ProjectBoundedSimplex)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
