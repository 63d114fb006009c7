#pragma once

// Discrimination and threshold statistics: AUROC (midrank Mann-Whitney), ROC
// curve points, confusion-derived ratios, percentile bootstrap intervals,
// DeLong's paired AUROC test and per-reference-label odds tables.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upvc/error.hpp"

namespace upvc::metrics {

class DegenerateVariance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScoredSet {
    std::vector<double> scores;
    std::vector<int> labels; // 1 = PVC

    [[nodiscard]] std::size_t size() const { return scores.size(); }
    [[nodiscard]] std::size_t positives() const;
    [[nodiscard]] std::size_t negatives() const { return size() - positives(); }
    void validate() const;
};

/// Midranks (1-based, ties share the average rank).
[[nodiscard]] std::vector<double> midranks(std::span<const double> values);

/// Throws InvalidArgument when either class is absent.
[[nodiscard]] double roc_auc(std::span<const double> scores, std::span<const int> labels);
[[nodiscard]] double roc_auc(const ScoredSet& s);

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

/// One point per distinct score (descending), preceded by (inf, 0, 0).
[[nodiscard]] std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    [[nodiscard]] std::size_t n() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Ratios whose denominator is zero are absent, never 0.
struct ThresholdMetrics {
    double threshold = 0.5;
    ConfusionCounts counts;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> ppv;
    std::optional<double> npv;
    std::optional<double> f1;
    std::optional<double> accuracy;
};

/// A beat is predicted positive iff score >= threshold.
[[nodiscard]] ThresholdMetrics confusion_at(std::span<const double> scores, std::span<const int> labels,
                                            double threshold);

enum class MetricKind { Auroc, Sensitivity, Specificity, Ppv, Npv, F1, Accuracy };

[[nodiscard]] std::string to_string(MetricKind m);
[[nodiscard]] std::optional<double> evaluate(MetricKind m, std::span<const double> scores, std::span<const int> labels,
                                             double threshold);

using MetricFn = std::function<std::optional<double>(std::span<const double>, std::span<const int>)>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct BootstrapOptions {
    std::size_t n_resamples = 100;
    std::uint64_t seed = 0;
    double level = 0.95;
    std::size_t max_redraws = 1000;
    /// Cluster id per element; when non-empty, whole clusters (patients) are resampled.
    std::span<const std::size_t> clusters = {};
};

/// Percentile interval of `metric` over resamples drawn with replacement.
/// Resample r uses its own generator seeded with seed + r, so the result is
/// independent of how resamples are distributed over threads.
[[nodiscard]] Interval bootstrap_ci(const ScoredSet& s, const MetricFn& metric, const BootstrapOptions& opt = {});

/// Linear-interpolation percentile (q in [0, 1]) of unsorted values.
[[nodiscard]] double percentile(std::vector<double> values, double q);

struct DelongResult {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    double covariance = 0.0;
    double variance_of_difference = 0.0;
    double z = 0.0;
    double p = 1.0;
};

/// DeLong's paired test via midrank structural components.
[[nodiscard]] DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                                       std::span<const int> labels);

[[nodiscard]] double normal_two_sided_p(double z);

struct OddsRow {
    char label = 0;
    std::size_t pred_nonpvc = 0;
    std::size_t pred_pvc = 0;
    double odds = 0.0; // pred_pvc / pred_nonpvc
    bool infinite = false;
};

struct OddsTable {
    std::vector<OddsRow> rows; // ascending odds, infinite last
    [[nodiscard]] const OddsRow* find(char label) const;
};

/// `predicted_pvc[i]` is 1 when beat i was predicted PVC.
[[nodiscard]] OddsTable odds_table(std::span<const int> predicted_pvc, std::span<const char> reference_symbols);

enum class ErrorDirection { FalseNegative, FalsePositive };

struct TieKey {
    std::string record_id;
    std::int64_t center = 0;
};

/// Indices of the k most extreme errors at `threshold`: false negatives with
/// the lowest scores, or false positives with the highest. Ties are broken by
/// (record_id, center). Returns fewer than k when fewer errors exist.
[[nodiscard]] std::vector<std::size_t> extreme_errors(const ScoredSet& s, std::span<const TieKey> keys, std::size_t k,
                                                      ErrorDirection direction, double threshold);

} // namespace upvc::metrics
