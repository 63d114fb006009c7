#pragma once

// Experiments: leave-one-dataset-out generalization, the single-lead
// benchmark at a high threshold, the ablation ladder with DeLong
// comparisons, the single- vs multi-source training curve and extreme-error
// export.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "upvc/config.hpp"
#include "upvc/dataset.hpp"
#include "upvc/metrics.hpp"
#include "upvc/nn.hpp"
#include "upvc/train.hpp"

namespace upvc::harness {

using Logger = std::function<void(const std::string&)>;

struct MetricEstimate {
    std::optional<double> point;
    std::optional<metrics::Interval> ci;
};

struct ThresholdSummary {
    double threshold = 0.5;
    metrics::ConfusionCounts counts;
    std::map<metrics::MetricKind, MetricEstimate> values; // every kind except Auroc
};

struct EvalSettings {
    std::vector<double> thresholds{0.5};
    BootstrapConfig bootstrap;
};

/// Everything about one evaluated lead; every statistic is a function of the
/// stored (scores, labels, patients) alone.
struct LeadEvaluation {
    std::string dataset_id;
    std::size_t lead = 0;
    std::vector<std::size_t> examples; // corpus indices; empty when rebuilt from a score dump
    metrics::ScoredSet scored;
    std::vector<char> symbols;
    std::vector<metrics::TieKey> keys;
    std::vector<std::string> patients;

    MetricEstimate auroc;
    std::vector<ThresholdSummary> thresholds;
    std::vector<metrics::RocPoint> roc;
};

/// Fills auroc, thresholds and roc of `lead` from its scores.
void summarize_lead(LeadEvaluation& lead, const EvalSettings& settings);

struct RunResult {
    std::string name;
    std::string holdout_id;
    ExperimentConfig config;
    std::size_t parameter_count = 0;
    std::vector<LeadEvaluation> leads;
    double odds_threshold = 0.5;
    metrics::OddsTable odds; // pooled over leads
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    std::uint64_t steps = 0;
    std::map<std::string, std::size_t> train_provenance;
    std::map<std::string, std::size_t> val_provenance;
    std::map<std::string, std::size_t> gradient_provenance;
    std::string checkpoint; // stem relative to the output directory, empty if not saved
    double wall_seconds = 0.0;
    std::shared_ptr<const nn::ModelParams> params;
};

struct RunOptions {
    std::filesystem::path checkpoint_dir; // empty: do not save
    Logger log;
};

/// Loads every manifest of the config. With `benchmark` the holdout gets the
/// benchmark's edge exclusion; otherwise manifests' own exclusion applies
/// only when flags.edge_exclusion is set.
[[nodiscard]] data::Corpus load_corpus(const ExperimentConfig& config, bool benchmark = false);

/// Scores the holdout's leads (all, or only `lead`) with a trained model.
[[nodiscard]] RunResult evaluate_model(const std::string& name, const ExperimentConfig& config,
                                       const data::Corpus& corpus, const data::FeatureTable& features,
                                       std::shared_ptr<const nn::ModelParams> params, const EvalSettings& settings,
                                       std::optional<std::size_t> lead = std::nullopt);

/// Trains on every lead of every non-holdout dataset (quality-filtered,
/// patient-held-out validation for early stopping) and evaluates every lead
/// of the holdout.
[[nodiscard]] RunResult run_lodo(const ExperimentConfig& config, const data::Corpus& corpus,
                                 const RunOptions& options = {}, const std::string& name = "lodo");

/// Trains on `pool` only (with a patient split for early stopping).
[[nodiscard]] TrainResult train_on_pool(const ExperimentConfig& config, const data::Corpus& corpus,
                                        const data::FeatureTable& features, const data::TrainingPool& pool);

/// As run_lodo but evaluated on one lead at the benchmark threshold. Expects
/// a corpus from load_corpus(config, true).
[[nodiscard]] RunResult run_benchmark_mitbih_ch1(const ExperimentConfig& config, const data::Corpus& corpus,
                                                 const RunOptions& options = {});

struct DelongComparison {
    std::string run_a;
    std::string run_b;
    std::size_t lead = 0;
    std::optional<metrics::DelongResult> result;
    bool significant = false; // p < 0.05
    std::string error;
};

struct AblationResult {
    std::vector<RunResult> runs; // full, no_bandpass, no_bigru
    std::vector<DelongComparison> comparisons;
};

/// (name, config) for full, no_bandpass and no_bigru; each differs from the
/// previous one in exactly one flag.
[[nodiscard]] std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& config);

[[nodiscard]] std::vector<DelongComparison> compare_runs(const RunResult& a, const RunResult& b);

[[nodiscard]] AblationResult run_ablation(const ExperimentConfig& config, const data::Corpus& corpus,
                                          const RunOptions& options = {});

struct CurveRow {
    std::string strategy; // "multi" or "single"
    std::string source;   // dataset id, or "all" for multi
    std::size_t n = 0;
    std::size_t repeat = 0;
    std::map<std::size_t, double> auroc; // per holdout lead
    bool skipped = false;
    std::string note;
};

struct CurvePoint {
    std::size_t n = 0;
    std::map<std::size_t, double> multi;
    std::map<std::size_t, double> single_median; // absent leads: no single-source run succeeded
};

struct CurveResult {
    std::vector<CurveRow> rows;
    std::vector<CurvePoint> points;
};

/// For each n: one multi-source model and per_source_repeats models per
/// source, each evaluated on every holdout lead by AUROC.
[[nodiscard]] CurveResult run_training_curve(const ExperimentConfig& config, const data::Corpus& corpus,
                                             const RunOptions& options = {});

[[nodiscard]] double median(std::vector<double> v);

struct ExportedError {
    std::size_t rank = 0;
    std::string record_id;
    std::size_t lead = 0;
    std::int64_t center = 0;
    char symbol = 0;
    int label = 0;
    double score = 0.0;
    std::filesystem::path segment; // relative to the output directory
};

/// Writes errors_<fn|fp>_lead<L>.csv and one 8-second window per error under
/// segments/.
std::vector<ExportedError> export_extreme_errors(const data::Corpus& corpus, const LeadEvaluation& lead,
                                                 std::size_t k, metrics::ErrorDirection direction, double threshold,
                                                 const std::filesystem::path& out_dir);

} // namespace upvc::harness
