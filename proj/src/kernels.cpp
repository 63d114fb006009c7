#include "upvc/kernels.hpp"

#include <algorithm>

#include <omp.h>

#include "upvc/error.hpp"

namespace upvc::kernels {

namespace {

void check_out(const dsp::FeatureExtractor& fx, std::size_t count, std::span<double> out)
{
    if (out.size() != count * fx.params().feature_size()) {
        throw InvalidArgument("featurize: output buffer size mismatch");
    }
}

void featurize_one(const dsp::FeatureExtractor& fx, const WindowRef& w, std::span<double> out)
{
    const auto window = dsp::extract_window(w.signal, w.center, fx.params().window);
    fx.featurize_into(window, out);
}

} // namespace

void featurize_serial(const dsp::FeatureExtractor& fx, std::span<const WindowRef> windows, std::span<double> out)
{
    check_out(fx, windows.size(), out);
    const std::size_t fs = fx.params().feature_size();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        featurize_one(fx, windows[i], out.subspan(i * fs, fs));
    }
}

void featurize_parallel(const dsp::FeatureExtractor& fx, std::span<const WindowRef> windows, std::span<double> out)
{
    check_out(fx, windows.size(), out);
    const std::size_t fs = fx.params().feature_size();
    const auto n = static_cast<std::int64_t>(windows.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        featurize_one(fx, windows[k], out.subspan(k * fs, fs));
    }
}

std::vector<double> predict_serial(const nn::ModelParams& params, std::span<const double> features, std::size_t count)
{
    const std::size_t fs = params.config().feature_size();
    std::vector<double> p(count);
    for (std::size_t i = 0; i < count; ++i) {
        p[i] = nn::forward(features.subspan(i * fs, fs), params);
    }
    return p;
}

std::vector<double> predict_parallel(const nn::ModelParams& params, std::span<const double> features,
                                     std::size_t count)
{
    const std::size_t fs = params.config().feature_size();
    if (features.size() < count * fs) {
        throw InvalidArgument("predict: feature buffer too short");
    }
    std::vector<double> p(count);
    const auto chunks = static_cast<std::int64_t>((count + kPredictChunk - 1) / kPredictChunk);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::size_t first = static_cast<std::size_t>(c) * kPredictChunk;
        const std::size_t n = std::min(kPredictChunk, count - first);
        const auto part = nn::forward_batch(features.subspan(first * fs, n * fs), n, params);
        std::copy(part.begin(), part.end(), p.begin() + static_cast<std::ptrdiff_t>(first));
    }
    return p;
}

double gradient_serial(const nn::ModelParams& params, std::span<const double> features,
                       std::span<const double> labels, std::size_t count, std::span<double> grad)
{
    const std::size_t fs = params.config().feature_size();
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        loss += nn::accumulate_gradient(features.subspan(i * fs, fs), labels.subspan(i, 1), 1, params, grad);
    }
    return loss;
}

double gradient_parallel(const nn::ModelParams& params, std::span<const double> features,
                         std::span<const double> labels, std::size_t count, std::span<double> grad,
                         bool deterministic)
{
    const std::size_t fs = params.config().feature_size();
    const std::size_t np = params.size();
    if (grad.size() != np) {
        throw InvalidArgument("gradient: buffer size mismatch");
    }
    if (features.size() < count * fs || labels.size() < count) {
        throw InvalidArgument("gradient: input buffers too short");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t n_chunks = (count + kGradientChunk - 1) / kGradientChunk;
    const auto chunks = static_cast<std::int64_t>(n_chunks);

    if (deterministic) {
        std::vector<double> partial(n_chunks * np, 0.0);
        std::vector<double> losses(n_chunks, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t c = 0; c < chunks; ++c) {
            const std::size_t k = static_cast<std::size_t>(c);
            const std::size_t first = k * kGradientChunk;
            const std::size_t n = std::min(kGradientChunk, count - first);
            losses[k] = nn::accumulate_gradient(features.subspan(first * fs, n * fs), labels.subspan(first, n), n,
                                                params, std::span(partial).subspan(k * np, np));
        }
        const auto total = static_cast<std::int64_t>(np);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < total; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < n_chunks; ++k) {
                s += partial[k * np + static_cast<std::size_t>(i)];
            }
            grad[static_cast<std::size_t>(i)] = s;
        }
        double loss = 0.0;
        for (double l : losses) {
            loss += l;
        }
        return loss;
    }

    double loss = 0.0;
#pragma omp parallel reduction(+ : loss)
    {
        std::vector<double> local(np, 0.0);
#pragma omp for schedule(dynamic, 1)
        for (std::int64_t c = 0; c < chunks; ++c) {
            const std::size_t first = static_cast<std::size_t>(c) * kGradientChunk;
            const std::size_t n = std::min(kGradientChunk, count - first);
            loss += nn::accumulate_gradient(features.subspan(first * fs, n * fs), labels.subspan(first, n), n, params,
                                            local);
        }
#pragma omp critical
        for (std::size_t i = 0; i < np; ++i) {
            grad[i] += local[i];
        }
    }
    return loss;
}

void set_num_threads(int n)
{
    if (n > 0) {
        omp_set_num_threads(n);
    }
}

int max_threads()
{
    return omp_get_max_threads();
}

} // namespace upvc::kernels
