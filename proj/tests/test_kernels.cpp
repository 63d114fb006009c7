#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "upvc/kernels.hpp"

using namespace upvc;

namespace {

struct Data {
    std::vector<double> signal;
    std::vector<kernels::WindowRef> windows;
    std::vector<double> features;
    std::vector<double> labels;
    nn::ModelParams params{nn::ModelConfig{}};
    dsp::FeatureExtractor fx;
};

Data make_data(std::size_t n)
{
    Data d;
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    d.signal.resize(200 * 60);
    for (auto& x : d.signal) {
        x = nd(gen);
    }
    for (std::size_t i = 0; i < n; ++i) {
        d.windows.push_back({d.signal, static_cast<std::int64_t>((i * 331) % d.signal.size())});
        d.labels.push_back(static_cast<double>(i % 3 == 0));
    }
    d.features.resize(n * 528);
    kernels::featurize_serial(d.fx, d.windows, d.features);
    d.params = nn::init_params(nn::ModelConfig{}, 9);
    return d;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace

TEST_CASE("featurize: parallel equals serial bit for bit")
{
    auto d = make_data(70);
    std::vector<double> par(d.features.size());
    kernels::featurize_parallel(d.fx, d.windows, par);
    CHECK(par == d.features);
}

TEST_CASE("predict: parallel matches serial")
{
    auto d = make_data(70);
    const auto s = kernels::predict_serial(d.params, d.features, 70);
    const auto p = kernels::predict_parallel(d.params, d.features, 70);
    CHECK(max_abs_diff(s, p) < 1e-12);
}

TEST_CASE("gradient: parallel matches serial and is independent of the thread count")
{
    auto d = make_data(70);
    const std::size_t n = 70;
    std::vector<double> gs(d.params.size());
    const double ls = kernels::gradient_serial(d.params, d.features, d.labels, n, gs);

    const int saved = kernels::max_threads();
    std::vector<double> first;
    double first_loss = 0.0;
    for (const int threads : {1, 2, 3, 4, 8}) {
        kernels::set_num_threads(threads);
        std::vector<double> gp(d.params.size());
        const double lp = kernels::gradient_parallel(d.params, d.features, d.labels, n, gp, true);
        CHECK(std::abs(lp - ls) < 1e-12 * std::max(1.0, std::abs(ls)));
        double scale = 0.0;
        for (const double v : gs) {
            scale = std::max(scale, std::abs(v));
        }
        CHECK(max_abs_diff(gp, gs) < 1e-12 * std::max(1.0, scale));
        if (first.empty()) {
            first = gp;
            first_loss = lp;
        } else {
            CHECK(gp == first);
            CHECK(lp == first_loss);
        }

        std::vector<double> gn(d.params.size());
        kernels::gradient_parallel(d.params, d.features, d.labels, n, gn, false);
        CHECK(max_abs_diff(gn, gs) < 1e-12 * std::max(1.0, scale));
    }
    kernels::set_num_threads(saved);
}
