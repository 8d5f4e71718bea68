// Serial reference vs OpenMP kernels. Set OMP_NUM_THREADS to compare thread counts.
#include <benchmark/benchmark.h>

#include <random>

#include "tsink/bounds.hpp"
#include "tsink/data.hpp"
#include "tsink/model.hpp"

namespace {

tsink::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    tsink::Matrix m(r, c);
    for (double& v : m.data()) v = u(gen);
    return m;
}

template <bool Serial>
void BM_matmul(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const tsink::Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : st) {
        if constexpr (Serial) {
            benchmark::DoNotOptimize(tsink::serial::matmul(a, b));
        } else {
            benchmark::DoNotOptimize(tsink::matmul(a, b));
        }
    }
}

struct Workload {
    tsink::TnSModel model;
    tsink::Batch batch;
};

// One default-size training batch on the default synthetic dataset.
const Workload& workload() {
    static const Workload w = [] {
        const tsink::SeriesDataset ds = tsink::gen_synthetic(tsink::SyntheticConfig{});
        tsink::ModelConfig cfg;
        cfg.nodes = ds.nodes;
        cfg.features = ds.features;
        cfg.target_mean = ds.scaler.mean.at(0);
        cfg.target_std = ds.scaler.std.at(0);
        const tsink::WindowSet windows(ds, tsink::Split::Train, cfg.window, cfg.horizon);
        std::vector<tsink::WindowSample> samples;
        for (std::size_t k = 0; k < 16; ++k) samples.push_back(windows[k]);
        return Workload{tsink::make_model(cfg, 1), tsink::make_batch(samples, 7)};
    }();
    return w;
}

template <bool Serial>
void BM_model_backward(benchmark::State& st) {
    const Workload& w = workload();
    for (auto _ : st) {
        if constexpr (Serial) {
            benchmark::DoNotOptimize(tsink::serial::model_backward(w.batch, w.model, true));
        } else {
            benchmark::DoNotOptimize(tsink::model_backward(w.batch, w.model, true));
        }
    }
}

template <bool Serial>
void BM_sweep_T(benchmark::State& st) {
    tsink::SweepConfig cfg;
    cfg.steps = {2, 4, 8, 16, 32};
    cfg.samples = 20;
    for (auto _ : st) {
        if constexpr (Serial) {
            benchmark::DoNotOptimize(tsink::serial::sweep_T(cfg));
        } else {
            benchmark::DoNotOptimize(tsink::sweep_T(cfg));
        }
    }
}

}  // namespace

BENCHMARK(BM_matmul<true>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<false>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_model_backward<true>)->Name("model_backward/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_model_backward<false>)->Name("model_backward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_T<true>)->Name("sweep_T/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_T<false>)->Name("sweep_T/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
