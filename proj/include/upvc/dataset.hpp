#pragma once

// Labeled beat examples built from manifests of WFDB records, the exclusion
// rules, leave-one-dataset-out splits, single/multi-source pools, patient
// splits and deterministic batch order.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "upvc/dsp.hpp"
#include "upvc/error.hpp"
#include "upvc/wfdb.hpp"

namespace upvc::data {

class InsufficientExamples : public DataError {
public:
    using DataError::DataError;
};

struct ManifestEntry {
    std::filesystem::path record;      // .hea path
    std::filesystem::path annotations; // annotation file path
    std::string patient_id;
    std::vector<std::size_t> leads;    // empty = all leads
};

struct DatasetManifest {
    std::string dataset_id;
    std::vector<ManifestEntry> entries;
    double edge_exclusion_seconds = 0.0;
};

/// Relative paths in the file are resolved against the manifest's directory.
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct BeatExample {
    std::string dataset_id;
    std::string record_id;
    std::string patient_id;
    std::size_t lead_index = 0;
    std::int64_t center_200hz = 0;
    wfdb::ClassLabel label = wfdb::ClassLabel::Unlabeled;
    char symbol = 0;
    std::size_t record_slot = 0; // index into Corpus::records()

    [[nodiscard]] int target() const { return label == wfdb::ClassLabel::PVC ? 1 : 0; }
};

/// One example per (beat annotation x selected lead), Unlabeled beats
/// dropped, centers mapped to 200 Hz. Beats closer than
/// `edge_exclusion_seconds` to either end of the record are dropped.
[[nodiscard]] std::vector<BeatExample> build_examples(const wfdb::EcgRecord& record, const ManifestEntry& entry,
                                                      const std::string& dataset_id, double edge_exclusion_seconds = 0.0);

struct QualityParams {
    bool enabled = true;
    double min_std = 1e-4;           // mV
    double max_rail_fraction = 0.05; // fraction of samples at the lead min/max
    bool operator==(const QualityParams&) const = default;
};

struct Rails {
    double min = 0.0;
    double max = 0.0;
};

/// False for flatline windows or windows with too many samples on the
/// record's amplitude rails. A sample counts as railed when it lies within
/// 0.5% of the rail-to-rail range of the rail.
[[nodiscard]] bool quality_filter(std::span<const double> window, const Rails& rails, const QualityParams& params = {});

struct LoadedRecord {
    std::string dataset_id;
    std::string record_id;
    std::string patient_id;
    double fs_native = 0.0;
    std::map<std::size_t, std::vector<double>> leads; // lead index -> 200 Hz samples
    std::map<std::size_t, Rails> rails;
};

/// Beat annotations per class (each beat once, before edge exclusion) and
/// the number of labeled examples (beats x selected leads) actually kept.
struct Census {
    std::string dataset_id;
    std::size_t non_pvc = 0;
    std::size_t pvc = 0;
    std::size_t unlabeled = 0;
    std::size_t examples = 0;
    std::size_t records = 0;
    std::size_t patients = 0;
    std::size_t channels = 0;
    double fs = 0.0;
    [[nodiscard]] std::size_t total() const { return non_pvc + pvc + unlabeled; }
};

struct LoadOptions {
    bool apply_edge_exclusion = false; // use the manifest's edge_exclusion_seconds
    /// Overrides the manifest value for specific datasets.
    std::map<std::string, double> edge_exclusion_override;
};

/// Every loaded record and its examples. Immutable once built.
class Corpus {
public:
    void add_dataset(const DatasetManifest& manifest, const LoadOptions& options = {});
    void add_record(const std::string& dataset_id, const wfdb::EcgRecord& record, const ManifestEntry& entry,
                    double edge_exclusion_seconds = 0.0);

    [[nodiscard]] const std::vector<BeatExample>& examples() const { return examples_; }
    [[nodiscard]] const std::vector<LoadedRecord>& records() const { return records_; }
    [[nodiscard]] const std::vector<std::string>& dataset_ids() const { return dataset_ids_; }
    [[nodiscard]] bool has_dataset(const std::string& id) const;
    [[nodiscard]] const std::vector<Census>& census() const { return census_; }

    [[nodiscard]] std::vector<double> window(std::size_t example, std::size_t length = 1600) const;

    /// One flag per example; all true when the filter is disabled.
    [[nodiscard]] std::vector<bool> quality_mask(const QualityParams& params, std::size_t window = 1600) const;

private:
    std::vector<LoadedRecord> records_;
    std::vector<BeatExample> examples_;
    std::vector<std::string> dataset_ids_;
    std::vector<Census> census_;
};

/// Standardized features for every example of a corpus, row-major.
class FeatureTable {
public:
    FeatureTable() = default;
    FeatureTable(const Corpus& corpus, const dsp::FeatureExtractor& fx, bool parallel = true);

    [[nodiscard]] std::size_t size() const { return count_; }
    [[nodiscard]] std::size_t feature_size() const { return feature_size_; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const
    {
        return {values_.data() + i * feature_size_, feature_size_};
    }
    /// Copies the selected rows into a contiguous buffer.
    void gather(std::span<const std::size_t> indices, std::vector<double>& out) const;

private:
    std::size_t count_ = 0;
    std::size_t feature_size_ = 0;
    std::vector<double> values_;
};

struct TrainingPool {
    std::vector<std::size_t> examples; // indices into Corpus::examples()
    std::map<std::string, std::size_t> provenance;
    std::uint64_t seed = 0;
};

[[nodiscard]] std::map<std::string, std::size_t> provenance_of(const Corpus& corpus,
                                                               std::span<const std::size_t> indices);

struct LodoSplit {
    TrainingPool train;
    std::map<std::size_t, std::vector<std::size_t>> eval; // lead -> examples of the holdout
};

/// Training pool: every lead of every other dataset (quality-filtered via
/// `keep` when non-empty). Evaluation: all holdout examples, grouped by lead.
[[nodiscard]] LodoSplit lodo_split(const Corpus& corpus, const std::string& holdout_id,
                                   const std::vector<bool>& keep = {});

enum class PoolStrategy { SingleSource, MultiSource, MultiSourcePooled };

/// Draws n examples without replacement from the candidates of `sources`
/// (one source for SingleSource). MultiSource allocates as evenly as
/// availability allows, spreading the remainder in source order.
[[nodiscard]] TrainingPool sample_pool(const Corpus& corpus, std::span<const std::size_t> candidates,
                                       const std::vector<std::string>& sources, std::size_t n, PoolStrategy strategy,
                                       std::uint64_t seed);

/// Per-source counts for MultiSource allocation.
[[nodiscard]] std::vector<std::size_t> allocate_even(std::span<const std::size_t> available, std::size_t n);

/// Splits at patient granularity; at least one patient on each side.
[[nodiscard]] std::pair<TrainingPool, TrainingPool> patient_split(const Corpus& corpus, const TrainingPool& pool,
                                                                  double val_fraction, std::uint64_t seed);

/// Shuffled batches of positions 0..n-1; the permutation is a pure function of (seed, epoch).
[[nodiscard]] std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size,
                                                                   std::uint64_t seed, std::uint64_t epoch);

} // namespace upvc::data
