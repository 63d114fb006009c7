#pragma once

// Data-parallel hot loops. Each kernel has a straightforward serial reference
// (kept for tests and the benchmark) and an OpenMP variant. The OpenMP
// variants partition work into fixed-size chunks whose composition does not
// depend on the thread count, and reduce chunk results in chunk order, so
// results are reproducible for any number of threads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "upvc/dsp.hpp"
#include "upvc/nn.hpp"

namespace upvc::kernels {

constexpr std::size_t kGradientChunk = 16;
constexpr std::size_t kPredictChunk = 32;

struct WindowRef {
    std::span<const double> signal; // 200 Hz lead
    std::int64_t center = 0;
};

/// Writes one standardized feature per window into `out` (count x feature_size).
void featurize_serial(const dsp::FeatureExtractor& fx, std::span<const WindowRef> windows, std::span<double> out);
void featurize_parallel(const dsp::FeatureExtractor& fx, std::span<const WindowRef> windows, std::span<double> out);

/// One example at a time through nn::forward.
[[nodiscard]] std::vector<double> predict_serial(const nn::ModelParams& params, std::span<const double> features,
                                                 std::size_t count);
/// Batched forward over fixed chunks of kPredictChunk examples.
[[nodiscard]] std::vector<double> predict_parallel(const nn::ModelParams& params, std::span<const double> features,
                                                   std::size_t count);

/// Sum over examples of per-example gradients, accumulated one example at a
/// time. Overwrites `grad`; returns the summed loss.
double gradient_serial(const nn::ModelParams& params, std::span<const double> features,
                       std::span<const double> labels, std::size_t count, std::span<double> grad);

/// Same quantity computed over chunks of kGradientChunk examples in parallel.
/// With `deterministic` the chunk partials are reduced in chunk order; without
/// it each thread accumulates its own partial sum (order depends on scheduling).
double gradient_parallel(const nn::ModelParams& params, std::span<const double> features,
                         std::span<const double> labels, std::size_t count, std::span<double> grad,
                         bool deterministic = true);

void set_num_threads(int n);
[[nodiscard]] int max_threads();

} // namespace upvc::kernels
