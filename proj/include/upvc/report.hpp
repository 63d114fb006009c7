#pragma once

// Report emission: report.json, flat CSV tables, raw score dumps and SVG
// plots. Wall-clock values live under a single "timestamp" object so two runs
// of the same config and seed produce otherwise identical report.json files.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "upvc/config.hpp"
#include "upvc/dataset.hpp"
#include "upvc/harness.hpp"

namespace upvc::report {

struct Report {
    std::string command;
    ExperimentConfig config;
    std::vector<data::Census> census;
    std::vector<harness::RunResult> runs;
    std::vector<harness::DelongComparison> comparisons;
    std::optional<harness::CurveResult> curve;
    std::string started_at; // ISO 8601, UTC
    double wall_seconds = 0.0;
};

[[nodiscard]] nlohmann::json report_json(const Report& r);

/// Writes report.json, config.json, metrics.csv, scores.csv, odds_<dataset>.csv,
/// roc_<lead>.csv, training_curve.csv, source_curve.csv (when a curve is
/// present) and the SVG plots into `out_dir`.
void emit_report(const Report& r, const std::filesystem::path& out_dir);

/// Rebuilds metrics.csv, odds and ROC tables in `out_dir` from the scores.csv
/// and report.json found in `in_dir`.
void recompute_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir);

[[nodiscard]] std::string utc_now_iso();

// Individual tables, exposed for tests.
[[nodiscard]] std::string metrics_csv(const std::vector<harness::RunResult>& runs);
[[nodiscard]] std::string odds_csv(const metrics::OddsTable& t);
[[nodiscard]] std::string roc_csv(const std::vector<harness::RunResult>& runs, std::size_t lead);
[[nodiscard]] std::string scores_csv(const std::vector<harness::RunResult>& runs);
[[nodiscard]] std::string training_curve_csv(const std::vector<harness::RunResult>& runs);
[[nodiscard]] std::string source_curve_csv(const harness::CurveResult& c);
[[nodiscard]] std::string census_table(const std::vector<data::Census>& census);

} // namespace upvc::report
