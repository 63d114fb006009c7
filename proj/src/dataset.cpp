#include "upvc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "upvc/kernels.hpp"

namespace upvc::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t draw_index(std::mt19937_64& gen, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(gen()) * n) >> 64);
}

// First k entries of `v` become a uniform sample without replacement.
template <class T>
void partial_shuffle(std::vector<T>& v, std::size_t k, std::mt19937_64& gen)
{
    for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
        const std::size_t j = i + draw_index(gen, v.size() - i);
        std::swap(v[i], v[j]);
    }
}

std::vector<std::size_t> selected_leads(const ManifestEntry& entry, std::size_t n_signals)
{
    std::vector<std::size_t> leads = entry.leads;
    if (leads.empty()) {
        leads.resize(n_signals);
        std::iota(leads.begin(), leads.end(), std::size_t{0});
    }
    for (const auto l : leads) {
        if (l >= n_signals) {
            throw DataError("lead " + std::to_string(l) + " out of range for record " + entry.record.string());
        }
    }
    return leads;
}

Rails rails_of(const std::vector<double>& x)
{
    if (x.empty()) {
        return {};
    }
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return {*lo, *hi};
}

} // namespace

// --- manifests ---------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open manifest " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };

    DatasetManifest m;
    try {
        m.dataset_id = j.at("dataset_id").get<std::string>();
        if (j.contains("flags")) {
            m.edge_exclusion_seconds = j["flags"].value("edge_exclusion_seconds", 0.0);
        }
        for (const auto& e : j.at("entries")) {
            ManifestEntry entry;
            entry.record = resolve(e.at("record").get<std::string>());
            entry.annotations = resolve(e.at("annotations").get<std::string>());
            entry.patient_id = e.at("patient").get<std::string>();
            if (e.contains("leads")) {
                entry.leads = e["leads"].get<std::vector<std::size_t>>();
            }
            m.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    if (m.dataset_id.empty()) {
        throw DataError("manifest " + path.string() + ": empty dataset_id");
    }
    for (const auto& e : m.entries) {
        if (e.patient_id.empty()) {
            throw DataError("manifest " + path.string() + ": empty patient id for " + e.record.string());
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest)
{
    json entries = json::array();
    const fs::path base = path.parent_path();
    for (const auto& e : manifest.entries) {
        entries.push_back({{"record", e.record.lexically_relative(base).generic_string()},
                           {"annotations", e.annotations.lexically_relative(base).generic_string()},
                           {"patient", e.patient_id},
                           {"leads", e.leads}});
    }
    const json j = {{"dataset_id", manifest.dataset_id},
                    {"entries", entries},
                    {"flags", {{"edge_exclusion_seconds", manifest.edge_exclusion_seconds}}}};
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write manifest " + path.string());
    }
    out << j.dump(2) << '\n';
}

// --- examples ----------------------------------------------------------------

std::vector<BeatExample> build_examples(const wfdb::EcgRecord& record, const ManifestEntry& entry,
                                        const std::string& dataset_id, double edge_exclusion_seconds)
{
    const auto& h = record.header;
    const auto leads = selected_leads(entry, static_cast<std::size_t>(h.n_signals));
    const double fs = h.sampling_frequency;
    const auto n_native = static_cast<std::int64_t>(h.n_samples_per_signal);
    const auto n_200 = static_cast<std::int64_t>(dsp::Resampler(fs, dsp::kTargetFs).output_length(h.n_samples_per_signal));
    const double duration = record.duration_seconds();

    std::vector<BeatExample> out;
    for (const auto& a : record.annotations) {
        if (a.sample_index < 0 || a.sample_index >= n_native) {
            throw DataError("annotation at sample " + std::to_string(a.sample_index) + " outside record " +
                            h.record_name + " (" + std::to_string(n_native) + " samples)");
        }
        const auto label = wfdb::map_beat_label(a.symbol);
        if (label == wfdb::ClassLabel::Unlabeled) {
            continue;
        }
        const double t = static_cast<double>(a.sample_index) / fs;
        if (edge_exclusion_seconds > 0.0 && (t < edge_exclusion_seconds || t > duration - edge_exclusion_seconds)) {
            continue;
        }
        const auto center = std::min(dsp::map_annotation_index(a.sample_index, fs), std::max<std::int64_t>(0, n_200 - 1));
        for (const auto l : leads) {
            BeatExample ex;
            ex.dataset_id = dataset_id;
            ex.record_id = h.record_name;
            ex.patient_id = entry.patient_id.empty() ? h.record_name : entry.patient_id;
            ex.lead_index = l;
            ex.center_200hz = center;
            ex.label = label;
            ex.symbol = a.symbol;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

bool quality_filter(std::span<const double> window, const Rails& rails, const QualityParams& params)
{
    if (!params.enabled) {
        return true;
    }
    if (window.empty()) {
        return false;
    }
    const double n = static_cast<double>(window.size());
    const double mean = std::accumulate(window.begin(), window.end(), 0.0) / n;
    double ss = 0.0;
    for (const double x : window) {
        ss += (x - mean) * (x - mean);
    }
    if (std::sqrt(ss / n) < params.min_std) {
        return false;
    }
    const double range = rails.max - rails.min;
    if (range <= 0.0) {
        return true;
    }
    const double tol = 0.005 * range;
    const auto railed = std::count_if(window.begin(), window.end(),
                                      [&](double x) { return x <= rails.min + tol || x >= rails.max - tol; });
    return static_cast<double>(railed) <= params.max_rail_fraction * n;
}

// --- corpus ------------------------------------------------------------------

bool Corpus::has_dataset(const std::string& id) const
{
    return std::find(dataset_ids_.begin(), dataset_ids_.end(), id) != dataset_ids_.end();
}

void Corpus::add_record(const std::string& dataset_id, const wfdb::EcgRecord& record, const ManifestEntry& entry,
                        double edge_exclusion_seconds)
{
    LoadedRecord lr;
    lr.dataset_id = dataset_id;
    lr.record_id = record.header.record_name;
    lr.patient_id = entry.patient_id.empty() ? record.header.record_name : entry.patient_id;
    lr.fs_native = record.header.sampling_frequency;
    const auto leads = selected_leads(entry, static_cast<std::size_t>(record.header.n_signals));
    const dsp::Resampler rs(lr.fs_native, dsp::kTargetFs);
    for (const auto l : leads) {
        const auto& x = record.signals.at(l);
        lr.rails[l] = rails_of(x);
        lr.leads[l] = lr.fs_native == dsp::kTargetFs ? x : rs(x);
    }

    auto examples = build_examples(record, entry, dataset_id, edge_exclusion_seconds);
    const std::size_t slot = records_.size();
    for (auto& e : examples) {
        e.record_slot = slot;
    }

    if (!has_dataset(dataset_id)) {
        dataset_ids_.push_back(dataset_id);
        census_.push_back(Census{.dataset_id = dataset_id});
    }
    auto& c = *std::find_if(census_.begin(), census_.end(), [&](const Census& x) { return x.dataset_id == dataset_id; });
    for (const auto& a : record.annotations) {
        if (!wfdb::is_beat_symbol(a.symbol)) {
            continue;
        }
        switch (wfdb::map_beat_label(a.symbol)) {
        case wfdb::ClassLabel::PVC: ++c.pvc; break;
        case wfdb::ClassLabel::NonPVC: ++c.non_pvc; break;
        case wfdb::ClassLabel::Unlabeled: ++c.unlabeled; break;
        }
    }
    c.examples += examples.size();
    ++c.records;
    c.channels = std::max(c.channels, leads.size());
    c.fs = lr.fs_native;
    std::set<std::string> patients;
    for (const auto& r : records_) {
        if (r.dataset_id == dataset_id) {
            patients.insert(r.patient_id);
        }
    }
    patients.insert(lr.patient_id);
    c.patients = patients.size();

    records_.push_back(std::move(lr));
    examples_.insert(examples_.end(), std::make_move_iterator(examples.begin()), std::make_move_iterator(examples.end()));
}

void Corpus::add_dataset(const DatasetManifest& manifest, const LoadOptions& options)
{
    if (has_dataset(manifest.dataset_id)) {
        throw DataError("dataset " + manifest.dataset_id + " loaded twice");
    }
    double edge = options.apply_edge_exclusion ? manifest.edge_exclusion_seconds : 0.0;
    if (auto it = options.edge_exclusion_override.find(manifest.dataset_id);
        it != options.edge_exclusion_override.end()) {
        edge = it->second;
    }

    // Parsing dominates; do it in parallel and assemble in manifest order.
    const auto n = static_cast<std::int64_t>(manifest.entries.size());
    std::vector<wfdb::EcgRecord> parsed(manifest.entries.size());
    std::vector<std::exception_ptr> errors(manifest.entries.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            parsed[k] = wfdb::load_record(manifest.entries[k].record, manifest.entries[k].annotations);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    if (manifest.entries.empty()) {
        dataset_ids_.push_back(manifest.dataset_id);
        census_.push_back(Census{.dataset_id = manifest.dataset_id});
    }
    for (std::size_t k = 0; k < parsed.size(); ++k) {
        add_record(manifest.dataset_id, parsed[k], manifest.entries[k], edge);
    }
}

std::vector<double> Corpus::window(std::size_t example, std::size_t length) const
{
    const auto& e = examples_.at(example);
    return dsp::extract_window(records_[e.record_slot].leads.at(e.lead_index), e.center_200hz, length);
}

std::vector<bool> Corpus::quality_mask(const QualityParams& params, std::size_t window_length) const
{
    std::vector<bool> keep(examples_.size(), true);
    if (!params.enabled) {
        return keep;
    }
    std::vector<char> flags(examples_.size(), 1);
    const auto n = static_cast<std::int64_t>(examples_.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const auto& e = examples_[k];
        const auto w = window(k, window_length);
        flags[k] = quality_filter(w, records_[e.record_slot].rails.at(e.lead_index), params) ? 1 : 0;
    }
    for (std::size_t k = 0; k < flags.size(); ++k) {
        keep[k] = flags[k] != 0;
    }
    return keep;
}

// --- features ----------------------------------------------------------------

FeatureTable::FeatureTable(const Corpus& corpus, const dsp::FeatureExtractor& fx, bool parallel)
    : count_(corpus.examples().size()), feature_size_(fx.params().feature_size()),
      values_(count_ * feature_size_)
{
    std::vector<kernels::WindowRef> refs;
    refs.reserve(count_);
    for (const auto& e : corpus.examples()) {
        refs.push_back({corpus.records()[e.record_slot].leads.at(e.lead_index), e.center_200hz});
    }
    if (parallel) {
        kernels::featurize_parallel(fx, refs, values_);
    } else {
        kernels::featurize_serial(fx, refs, values_);
    }
}

void FeatureTable::gather(std::span<const std::size_t> indices, std::vector<double>& out) const
{
    out.resize(indices.size() * feature_size_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto r = row(indices[i]);
        std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(i * feature_size_));
    }
}

// --- pools -------------------------------------------------------------------

std::map<std::string, std::size_t> provenance_of(const Corpus& corpus, std::span<const std::size_t> indices)
{
    std::map<std::string, std::size_t> p;
    for (const auto i : indices) {
        ++p[corpus.examples()[i].dataset_id];
    }
    return p;
}

LodoSplit lodo_split(const Corpus& corpus, const std::string& holdout_id, const std::vector<bool>& keep)
{
    if (!corpus.has_dataset(holdout_id)) {
        throw DataError("unknown holdout dataset '" + holdout_id + "'");
    }
    if (!keep.empty() && keep.size() != corpus.examples().size()) {
        throw InvalidArgument("lodo_split: quality mask size mismatch");
    }
    LodoSplit split;
    const auto& ex = corpus.examples();
    for (std::size_t i = 0; i < ex.size(); ++i) {
        if (ex[i].dataset_id == holdout_id) {
            split.eval[ex[i].lead_index].push_back(i);
        } else if (keep.empty() || keep[i]) {
            split.train.examples.push_back(i);
        }
    }
    split.train.provenance = provenance_of(corpus, split.train.examples);
    return split;
}

std::vector<std::size_t> allocate_even(std::span<const std::size_t> available, std::size_t n)
{
    const std::size_t total = std::accumulate(available.begin(), available.end(), std::size_t{0});
    if (total < n) {
        throw InsufficientExamples("requested " + std::to_string(n) + " examples, " + std::to_string(total) +
                                   " available");
    }
    std::vector<std::size_t> alloc(available.size(), 0);
    std::size_t remaining = n;
    while (remaining > 0) {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < available.size(); ++i) {
            if (alloc[i] < available[i]) {
                open.push_back(i);
            }
        }
        const std::size_t share = remaining / open.size();
        const std::size_t extra = remaining % open.size();
        for (std::size_t r = 0; r < open.size(); ++r) {
            const std::size_t i = open[r];
            const std::size_t want = share + (r < extra ? 1 : 0);
            const std::size_t give = std::min(want, available[i] - alloc[i]);
            alloc[i] += give;
            remaining -= give;
        }
    }
    return alloc;
}

TrainingPool sample_pool(const Corpus& corpus, std::span<const std::size_t> candidates,
                         const std::vector<std::string>& sources, std::size_t n, PoolStrategy strategy,
                         std::uint64_t seed)
{
    if (sources.empty()) {
        throw InvalidArgument("sample_pool: no sources");
    }
    if (strategy == PoolStrategy::SingleSource && sources.size() != 1) {
        throw InvalidArgument("sample_pool: single-source strategy needs exactly one source");
    }
    std::vector<std::vector<std::size_t>> by_source(sources.size());
    for (const auto i : candidates) {
        const auto& id = corpus.examples()[i].dataset_id;
        const auto it = std::find(sources.begin(), sources.end(), id);
        if (it != sources.end()) {
            by_source[static_cast<std::size_t>(it - sources.begin())].push_back(i);
        }
    }

    std::mt19937_64 gen(seed);
    TrainingPool pool;
    pool.seed = seed;
    if (strategy == PoolStrategy::MultiSourcePooled) {
        std::vector<std::size_t> all;
        for (const auto& v : by_source) {
            all.insert(all.end(), v.begin(), v.end());
        }
        if (all.size() < n) {
            throw InsufficientExamples("requested " + std::to_string(n) + " examples, " +
                                       std::to_string(all.size()) + " available");
        }
        partial_shuffle(all, n, gen);
        pool.examples.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        std::vector<std::size_t> available;
        for (const auto& v : by_source) {
            available.push_back(v.size());
        }
        const auto alloc = allocate_even(available, n);
        for (std::size_t s = 0; s < by_source.size(); ++s) {
            auto& v = by_source[s];
            partial_shuffle(v, alloc[s], gen);
            pool.examples.insert(pool.examples.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(alloc[s]));
        }
    }
    std::sort(pool.examples.begin(), pool.examples.end());
    pool.provenance = provenance_of(corpus, pool.examples);
    return pool;
}

std::pair<TrainingPool, TrainingPool> patient_split(const Corpus& corpus, const TrainingPool& pool,
                                                    double val_fraction, std::uint64_t seed)
{
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw InvalidArgument("patient_split: val_fraction must lie in (0, 1)");
    }
    auto key = [&](std::size_t i) {
        const auto& e = corpus.examples()[i];
        return e.dataset_id + "/" + e.patient_id;
    };
    std::set<std::string> unique;
    for (const auto i : pool.examples) {
        unique.insert(key(i));
    }
    if (unique.size() < 2) {
        throw InsufficientExamples("patient_split: fewer than 2 patients");
    }
    std::vector<std::string> patients(unique.begin(), unique.end());
    std::mt19937_64 gen(seed);
    partial_shuffle(patients, patients.size(), gen);
    const auto p = patients.size();
    const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(p))),
                                               1, p - 1);
    const std::set<std::string> val_patients(patients.begin(), patients.begin() + static_cast<std::ptrdiff_t>(n_val));

    TrainingPool train;
    TrainingPool val;
    train.seed = val.seed = seed;
    for (const auto i : pool.examples) {
        (val_patients.contains(key(i)) ? val : train).examples.push_back(i);
    }
    train.provenance = provenance_of(corpus, train.examples);
    val.provenance = provenance_of(corpus, val.examples);
    return {std::move(train), std::move(val)};
}

std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch)
{
    if (batch_size == 0) {
        throw InvalidArgument("batch_iterator: batch size must be positive");
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 gen(seq);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    partial_shuffle(order, n, gen);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace upvc::data
