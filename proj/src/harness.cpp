#include "upvc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include "upvc/error.hpp"
#include "upvc/kernels.hpp"

namespace upvc::harness {

namespace fs = std::filesystem;
using metrics::MetricKind;

namespace {

constexpr MetricKind kThresholdKinds[] = {MetricKind::Sensitivity, MetricKind::Specificity, MetricKind::Ppv,
                                          MetricKind::Npv,         MetricKind::F1,          MetricKind::Accuracy};

void say(const RunOptions& o, const std::string& msg)
{
    if (o.log) {
        o.log(msg);
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> patient_clusters(const std::vector<std::string>& patients)
{
    std::map<std::string, std::size_t> ids;
    std::vector<std::size_t> out;
    out.reserve(patients.size());
    for (const auto& p : patients) {
        out.push_back(ids.emplace(p, ids.size()).first->second);
    }
    return out;
}

EvalSettings settings_of(const ExperimentConfig& c)
{
    return {c.thresholds, c.bootstrap};
}

void check_holdout_gradients(const RunResult& r)
{
    if (r.gradient_provenance.contains(r.holdout_id)) {
        throw std::logic_error("holdout dataset '" + r.holdout_id + "' contributed gradient updates");
    }
}

std::vector<std::string> sources_of(const data::Corpus& corpus, const std::string& holdout)
{
    std::vector<std::string> s;
    for (const auto& id : corpus.dataset_ids()) {
        if (id != holdout) {
            s.push_back(id);
        }
    }
    return s;
}

std::map<std::size_t, double> auroc_per_lead(const nn::ModelParams& params, const data::Corpus& corpus,
                                             const data::FeatureTable& features,
                                             const std::map<std::size_t, std::vector<std::size_t>>& eval)
{
    std::map<std::size_t, double> out;
    for (const auto& [lead, idx] : eval) {
        const auto scores = predict(params, features, idx);
        const auto labels = targets_of(corpus, idx);
        try {
            out[lead] = metrics::roc_auc(scores, labels);
        } catch (const InvalidArgument&) {
            // single-class lead: AUROC undefined, leave absent
        }
    }
    return out;
}

} // namespace

double median(std::vector<double> v)
{
    if (v.empty()) {
        throw InvalidArgument("median of empty set");
    }
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void summarize_lead(LeadEvaluation& lead, const EvalSettings& settings)
{
    const auto& s = lead.scored;
    s.validate();
    const auto clusters = settings.bootstrap.cluster_by_patient ? patient_clusters(lead.patients)
                                                                : std::vector<std::size_t>{};
    metrics::BootstrapOptions opt;
    opt.n_resamples = settings.bootstrap.n_resamples;
    opt.seed = settings.bootstrap.seed;
    opt.level = settings.bootstrap.level;
    opt.clusters = clusters;

    auto estimate = [&](MetricKind kind, double threshold) {
        MetricEstimate e;
        e.point = metrics::evaluate(kind, s.scores, s.labels, threshold);
        if (e.point) {
            const metrics::MetricFn fn = [kind, threshold](std::span<const double> sc, std::span<const int> lb) {
                return metrics::evaluate(kind, sc, lb, threshold);
            };
            try {
                e.ci = metrics::bootstrap_ci(s, fn, opt);
            } catch (const InvalidArgument&) {
                e.ci.reset();
            }
        }
        return e;
    };

    lead.auroc = estimate(MetricKind::Auroc, 0.5);
    lead.roc = s.size() > 0 ? metrics::roc_curve(s.scores, s.labels) : std::vector<metrics::RocPoint>{};
    lead.thresholds.clear();
    for (const double t : settings.thresholds) {
        ThresholdSummary ts;
        ts.threshold = t;
        ts.counts = metrics::confusion_at(s.scores, s.labels, t).counts;
        for (const auto kind : kThresholdKinds) {
            ts.values[kind] = estimate(kind, t);
        }
        lead.thresholds.push_back(std::move(ts));
    }
}

data::Corpus load_corpus(const ExperimentConfig& config, bool benchmark)
{
    if (config.manifests.empty()) {
        throw ConfigError("config lists no manifests");
    }
    std::vector<data::DatasetManifest> manifests;
    for (const auto& p : config.manifests) {
        manifests.push_back(data::load_manifest(p));
    }
    data::LoadOptions lo;
    lo.apply_edge_exclusion = config.flags.edge_exclusion;
    if (benchmark) {
        lo.edge_exclusion_override[config.holdout_id] = config.benchmark.edge_exclusion_seconds;
    }
    data::Corpus corpus;
    for (const auto& m : manifests) {
        corpus.add_dataset(m, lo);
    }
    return corpus;
}

RunResult evaluate_model(const std::string& name, const ExperimentConfig& config, const data::Corpus& corpus,
                         const data::FeatureTable& features, std::shared_ptr<const nn::ModelParams> params,
                         const EvalSettings& settings, std::optional<std::size_t> only_lead)
{
    const auto split = data::lodo_split(corpus, config.holdout_id);
    if (only_lead && !split.eval.contains(*only_lead)) {
        throw DataError("holdout '" + config.holdout_id + "' has no examples on lead " + std::to_string(*only_lead));
    }
    RunResult r;
    r.name = name;
    r.holdout_id = config.holdout_id;
    r.config = config;
    r.parameter_count = params->size();
    r.odds_threshold = settings.thresholds.front();

    std::vector<int> predicted;
    std::vector<char> symbols;
    for (const auto& [lead, idx] : split.eval) {
        if (only_lead && lead != *only_lead) {
            continue;
        }
        LeadEvaluation le;
        le.dataset_id = config.holdout_id;
        le.lead = lead;
        le.examples = idx;
        le.scored.scores = predict(*params, features, idx);
        le.scored.labels = targets_of(corpus, idx);
        for (const auto i : idx) {
            const auto& e = corpus.examples()[i];
            le.symbols.push_back(e.symbol);
            le.keys.push_back({e.record_id, e.center_200hz});
            le.patients.push_back(e.patient_id);
        }
        summarize_lead(le, settings);
        for (std::size_t k = 0; k < le.scored.size(); ++k) {
            predicted.push_back(le.scored.scores[k] >= r.odds_threshold ? 1 : 0);
        }
        symbols.insert(symbols.end(), le.symbols.begin(), le.symbols.end());
        r.leads.push_back(std::move(le));
    }
    r.odds = metrics::odds_table(predicted, symbols);
    r.params = std::move(params);
    return r;
}

TrainResult train_on_pool(const ExperimentConfig& config, const data::Corpus& corpus,
                          const data::FeatureTable& features, const data::TrainingPool& pool)
{
    const auto [train, val] = data::patient_split(corpus, pool, config.training.val_fraction, config.training.seed);
    return train_model(config.model_config(), config.training, {corpus, features}, train.examples, val.examples);
}

namespace {

RunResult train_and_evaluate(const std::string& name, const ExperimentConfig& config, const data::Corpus& corpus,
                             const RunOptions& options, const EvalSettings& settings,
                             std::optional<std::size_t> only_lead)
{
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    say(options, name + ": featurizing " + std::to_string(corpus.examples().size()) + " examples");
    const dsp::FeatureExtractor fx(config.feature_params());
    const data::FeatureTable features(corpus, fx);

    const auto keep = corpus.quality_mask(config.quality_params(), config.preprocessing.window);
    const auto split = data::lodo_split(corpus, config.holdout_id, keep);
    const auto [train, val] =
        data::patient_split(corpus, split.train, config.training.val_fraction, config.training.seed);
    say(options, name + ": training on " + std::to_string(train.examples.size()) + " examples, validating on " +
                     std::to_string(val.examples.size()));
    auto trained = train_model(config.model_config(), config.training, {corpus, features}, train.examples,
                               val.examples, [&](const EpochLog& log, const nn::ModelParams&) {
                                   char buf[160];
                                   std::snprintf(buf, sizeof buf, "%s: epoch %zu loss %.5f val_auroc %s", name.c_str(),
                                                 log.epoch, log.train_loss,
                                                 log.val_auroc ? std::to_string(*log.val_auroc).c_str() : "n/a");
                                   say(options, buf);
                                   return false;
                               });
    auto params = std::make_shared<const nn::ModelParams>(std::move(trained.params));
    auto r = evaluate_model(name, config, corpus, features, params, settings, only_lead);
    r.epochs = std::move(trained.epochs);
    r.best_epoch = trained.best_epoch;
    r.steps = trained.steps;
    r.train_provenance = train.provenance;
    r.val_provenance = val.provenance;
    r.gradient_provenance = std::move(trained.gradient_provenance);
    check_holdout_gradients(r);
    if (!options.checkpoint_dir.empty()) {
        fs::create_directories(options.checkpoint_dir);
        r.checkpoint = "model_" + name;
        nn::save_checkpoint(options.checkpoint_dir / r.checkpoint, *r.params, {config.training.seed, r.steps});
    }
    r.wall_seconds = seconds_since(t0);
    return r;
}

} // namespace

RunResult run_lodo(const ExperimentConfig& config, const data::Corpus& corpus, const RunOptions& options,
                   const std::string& name)
{
    return train_and_evaluate(name, config, corpus, options, settings_of(config), std::nullopt);
}

RunResult run_benchmark_mitbih_ch1(const ExperimentConfig& config, const data::Corpus& corpus,
                                   const RunOptions& options)
{
    EvalSettings settings{{config.benchmark.threshold}, config.bootstrap};
    for (const double t : config.thresholds) {
        if (t != config.benchmark.threshold) {
            settings.thresholds.push_back(t);
        }
    }
    return train_and_evaluate("benchmark", config, corpus, options, settings, config.benchmark.lead);
}

std::vector<std::pair<std::string, ExperimentConfig>> ablation_variants(const ExperimentConfig& config)
{
    auto full = config;
    full.flags.bandpass_on = true;
    full.flags.bigru_on = true;
    auto no_bandpass = full;
    no_bandpass.flags.bandpass_on = false;
    auto no_bigru = no_bandpass;
    no_bigru.flags.bigru_on = false;
    return {{"full", full}, {"no_bandpass", no_bandpass}, {"no_bigru", no_bigru}};
}

std::vector<DelongComparison> compare_runs(const RunResult& a, const RunResult& b)
{
    std::vector<DelongComparison> out;
    for (const auto& la : a.leads) {
        const auto it = std::find_if(b.leads.begin(), b.leads.end(), [&](const auto& x) { return x.lead == la.lead; });
        if (it == b.leads.end()) {
            continue;
        }
        DelongComparison c{a.name, b.name, la.lead, std::nullopt, false, {}};
        if (la.scored.labels != it->scored.labels) {
            c.error = "evaluation sets differ";
        } else {
            try {
                c.result = metrics::delong_test(la.scored.scores, it->scored.scores, la.scored.labels);
                c.significant = c.result->p < 0.05;
            } catch (const std::exception& e) {
                c.error = e.what();
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

AblationResult run_ablation(const ExperimentConfig& config, const data::Corpus& corpus, const RunOptions& options)
{
    AblationResult out;
    for (const auto& [name, variant] : ablation_variants(config)) {
        out.runs.push_back(train_and_evaluate(name, variant, corpus, options, settings_of(variant), std::nullopt));
    }
    if (!(out.runs[2].parameter_count < out.runs[0].parameter_count)) {
        throw std::logic_error("ablation: the dense backbone must have fewer parameters than the Bi-GRU model");
    }
    for (std::size_t i = 0; i + 1 < out.runs.size(); ++i) {
        auto c = compare_runs(out.runs[i], out.runs[i + 1]);
        out.comparisons.insert(out.comparisons.end(), c.begin(), c.end());
    }
    return out;
}

CurveResult run_training_curve(const ExperimentConfig& config, const data::Corpus& corpus, const RunOptions& options)
{
    config.validate();
    const dsp::FeatureExtractor fx(config.feature_params());
    const data::FeatureTable features(corpus, fx);
    const auto keep = corpus.quality_mask(config.quality_params(), config.preprocessing.window);
    const auto split = data::lodo_split(corpus, config.holdout_id, keep);
    const auto sources = sources_of(corpus, config.holdout_id);
    const auto multi = config.curve.pooled_uniform ? data::PoolStrategy::MultiSourcePooled
                                                   : data::PoolStrategy::MultiSource;

    CurveResult out;
    auto run_one = [&](CurveRow row, const std::vector<std::string>& srcs, data::PoolStrategy strategy,
                       std::uint64_t seed) {
        try {
            const auto pool = data::sample_pool(corpus, split.train.examples, srcs, row.n, strategy, seed);
            auto cfg = config;
            cfg.training.seed = seed;
            const auto trained = train_on_pool(cfg, corpus, features, pool);
            row.auroc = auroc_per_lead(trained.params, corpus, features, split.eval);
        } catch (const data::InsufficientExamples& e) {
            row.skipped = true;
            row.note = e.what();
            say(options, "curve: skipping " + row.strategy + " " + row.source + " n=" + std::to_string(row.n) + ": " +
                             e.what());
        }
        out.rows.push_back(std::move(row));
    };

    for (const auto n : config.curve.n_values) {
        run_one({"multi", "all", n, 0, {}, false, {}}, sources, multi, config.training.seed);
        for (const auto& s : sources) {
            for (std::size_t rep = 0; rep < config.curve.per_source_repeats; ++rep) {
                run_one({"single", s, n, rep, {}, false, {}}, {s}, data::PoolStrategy::SingleSource,
                        config.training.seed + rep);
            }
        }
        CurvePoint pt;
        pt.n = n;
        std::map<std::size_t, std::vector<double>> singles;
        for (const auto& row : out.rows) {
            if (row.n != n || row.skipped) {
                continue;
            }
            for (const auto& [lead, a] : row.auroc) {
                if (row.strategy == "multi") {
                    pt.multi[lead] = a;
                } else {
                    singles[lead].push_back(a);
                }
            }
        }
        for (auto& [lead, v] : singles) {
            pt.single_median[lead] = median(v);
        }
        out.points.push_back(std::move(pt));
        say(options, "curve: n=" + std::to_string(n) + " done");
    }
    return out;
}

std::vector<ExportedError> export_extreme_errors(const data::Corpus& corpus, const LeadEvaluation& lead, std::size_t k,
                                                 metrics::ErrorDirection direction, double threshold,
                                                 const fs::path& out_dir)
{
    if (lead.examples.size() != lead.scored.size()) {
        throw InvalidArgument("export_extreme_errors: lead evaluation lacks example indices");
    }
    const auto picked = metrics::extreme_errors(lead.scored, lead.keys, k, direction, threshold);
    const std::string tag = direction == metrics::ErrorDirection::FalseNegative ? "fn" : "fp";
    fs::create_directories(out_dir / "segments");

    std::vector<ExportedError> out;
    for (std::size_t rank = 0; rank < picked.size(); ++rank) {
        const auto i = picked[rank];
        const auto ex = lead.examples[i];
        const auto& e = corpus.examples()[ex];
        ExportedError err{rank + 1,         e.record_id, e.lead_index, e.center_200hz, e.symbol,
                          e.target(),       lead.scored.scores[i], {}};
        err.segment = fs::path("segments") / (tag + "_" + std::to_string(rank + 1) + "_" + e.record_id + "_lead" +
                                              std::to_string(e.lead_index) + "_" + std::to_string(e.center_200hz) +
                                              ".csv");
        std::ofstream seg(out_dir / err.segment);
        if (!seg) {
            throw DataError("cannot write " + (out_dir / err.segment).string());
        }
        seg << "t_seconds,mv\n";
        const auto w = corpus.window(ex);
        const double half = static_cast<double>(w.size() / 2);
        char buf[64];
        for (std::size_t s = 0; s < w.size(); ++s) {
            std::snprintf(buf, sizeof buf, "%.3f,%.6f\n", (static_cast<double>(s) - half) / dsp::kTargetFs, w[s]);
            seg << buf;
        }
        out.push_back(std::move(err));
    }

    const auto summary = out_dir / ("errors_" + tag + "_lead" + std::to_string(lead.lead) + ".csv");
    std::ofstream f(summary);
    if (!f) {
        throw DataError("cannot write " + summary.string());
    }
    f << "rank,record,lead,center_200hz,symbol,label,score,segment\n";
    char buf[64];
    for (const auto& e : out) {
        std::snprintf(buf, sizeof buf, "%.10g", e.score);
        f << e.rank << ',' << e.record_id << ',' << e.lead << ',' << e.center << ',' << e.symbol << ',' << e.label
          << ',' << buf << ',' << e.segment.generic_string() << '\n';
    }
    return out;
}

} // namespace upvc::harness
