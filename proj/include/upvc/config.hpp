#pragma once

// Experiment configuration. Every field is written out when persisted, so a
// report never depends on a default that is not recorded next to it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "upvc/dataset.hpp"
#include "upvc/dsp.hpp"
#include "upvc/nn.hpp"

namespace upvc {

struct TrainingOptions {
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t epochs_max = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    double grad_clip = 0.0; // 0 disables clipping
    bool deterministic = true;
    bool operator==(const TrainingOptions&) const = default;
};

/// Model sizes; the backbone and input shape follow from the flags and preprocessing.
struct ModelDims {
    std::size_t hidden = 64; // per direction
    std::size_t layers = 2;
    std::size_t classifier_hidden = 64;
    std::size_t dense_width = 128;
    double init_k = 1.0 / 128.0;
    bool operator==(const ModelDims&) const = default;
};

struct ExperimentFlags {
    bool bandpass_on = true;
    bool bigru_on = true;
    bool quality_filter_on = true;
    bool edge_exclusion = false; // apply each manifest's edge_exclusion_seconds
    bool operator==(const ExperimentFlags&) const = default;
};

struct BootstrapConfig {
    std::size_t n_resamples = 100;
    std::uint64_t seed = 0;
    double level = 0.95;
    bool cluster_by_patient = false;
    bool operator==(const BootstrapConfig&) const = default;
};

struct CurveConfig {
    std::vector<std::size_t> n_values;
    std::size_t per_source_repeats = 1;
    bool pooled_uniform = false; // multi-source draw uniform over the union instead of even allocation
    bool operator==(const CurveConfig&) const = default;
};

struct BenchmarkConfig {
    std::size_t lead = 0;
    double threshold = 0.9;
    double edge_exclusion_seconds = 3.0;
    bool operator==(const BenchmarkConfig&) const = default;
};

struct ExperimentConfig {
    std::vector<std::filesystem::path> manifests;
    std::string holdout_id;
    ModelDims model;
    dsp::FeatureParams preprocessing;
    TrainingOptions training;
    ExperimentFlags flags;
    data::QualityParams quality;
    std::vector<double> thresholds{0.5, 0.9};
    BootstrapConfig bootstrap;
    CurveConfig curve;
    BenchmarkConfig benchmark;
    std::size_t error_export_k = 6;
    int threads = 0; // 0 = OpenMP default

    /// Preprocessing actually used: with the band-pass off the filterbank
    /// spans (0, fs/2).
    [[nodiscard]] dsp::FeatureParams feature_params() const;
    /// Model actually trained: Dense backbone when bigru_on is false; input
    /// dimensions follow the preprocessing.
    [[nodiscard]] nn::ModelConfig model_config() const;
    /// Quality heuristic with `enabled` taken from the flags.
    [[nodiscard]] data::QualityParams quality_params() const;

    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j);

/// Relative manifest paths are resolved against the config file's directory.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

} // namespace upvc
