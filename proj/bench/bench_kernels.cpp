// Serial reference kernels against their OpenMP variants.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "upvc/dsp.hpp"
#include "upvc/kernels.hpp"
#include "upvc/metrics.hpp"
#include "upvc/nn.hpp"

using namespace upvc;

namespace {

struct Fixture {
    std::vector<double> signal;
    std::vector<kernels::WindowRef> windows;
    std::vector<double> features;
    std::vector<double> labels;
    nn::ModelParams params{nn::ModelConfig{}};
    dsp::FeatureExtractor fx;

    explicit Fixture(std::size_t n)
    {
        std::mt19937_64 gen(7);
        std::normal_distribution<double> nd;
        signal.resize(200 * 600);
        for (auto& x : signal) {
            x = nd(gen);
        }
        for (std::size_t i = 0; i < n; ++i) {
            windows.push_back({signal, static_cast<std::int64_t>(800 + (i * 97) % (signal.size() - 1600))});
        }
        features.resize(n * fx.params().feature_size());
        kernels::featurize_parallel(fx, windows, features);
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(static_cast<double>(i % 2));
        }
        params = nn::init_params(nn::ModelConfig{}, 3);
    }
};

Fixture& fixture()
{
    static Fixture f(512);
    return f;
}

void BM_featurize_serial(benchmark::State& st)
{
    auto& f = fixture();
    std::vector<double> out(f.features.size());
    for (auto _ : st) {
        kernels::featurize_serial(f.fx, f.windows, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * f.windows.size()));
}

void BM_featurize_parallel(benchmark::State& st)
{
    auto& f = fixture();
    std::vector<double> out(f.features.size());
    for (auto _ : st) {
        kernels::featurize_parallel(f.fx, f.windows, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * f.windows.size()));
}

void BM_predict_serial(benchmark::State& st)
{
    auto& f = fixture();
    for (auto _ : st) {
        benchmark::DoNotOptimize(kernels::predict_serial(f.params, f.features, f.windows.size()));
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * f.windows.size()));
}

void BM_predict_parallel(benchmark::State& st)
{
    auto& f = fixture();
    for (auto _ : st) {
        benchmark::DoNotOptimize(kernels::predict_parallel(f.params, f.features, f.windows.size()));
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * f.windows.size()));
}

void BM_gradient_serial(benchmark::State& st)
{
    auto& f = fixture();
    const std::size_t n = 64;
    std::vector<double> grad(f.params.size());
    for (auto _ : st) {
        benchmark::DoNotOptimize(kernels::gradient_serial(f.params, f.features, f.labels, n, grad));
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n));
}

void BM_gradient_parallel(benchmark::State& st)
{
    auto& f = fixture();
    const std::size_t n = 64;
    std::vector<double> grad(f.params.size());
    const bool deterministic = st.range(0) != 0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(kernels::gradient_parallel(f.params, f.features, f.labels, n, grad, deterministic));
    }
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n));
}

void BM_bootstrap_auroc(benchmark::State& st)
{
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u;
    metrics::ScoredSet s;
    for (int i = 0; i < 20000; ++i) {
        const int y = i % 5 == 0;
        s.labels.push_back(y);
        s.scores.push_back(0.3 * y + 0.7 * u(gen));
    }
    const metrics::MetricFn auc = [](std::span<const double> sc, std::span<const int> lb) {
        return metrics::evaluate(metrics::MetricKind::Auroc, sc, lb, 0.5);
    };
    const int threads = static_cast<int>(st.range(0));
    const int saved = kernels::max_threads();
    kernels::set_num_threads(threads > 0 ? threads : saved);
    for (auto _ : st) {
        benchmark::DoNotOptimize(metrics::bootstrap_ci(s, auc));
    }
    kernels::set_num_threads(saved);
}

} // namespace

BENCHMARK(BM_featurize_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_featurize_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_predict_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_predict_parallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_gradient_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gradient_parallel)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_bootstrap_auroc)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
