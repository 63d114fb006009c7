// upvc: command-line front end for ingest, training, evaluation and the
// experiment suite. Exit codes: 0 ok, 1 internal error, 2 config/usage
// error, 3 data error, 4 training divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "upvc/config.hpp"
#include "upvc/dataset.hpp"
#include "upvc/error.hpp"
#include "upvc/harness.hpp"
#include "upvc/kernels.hpp"
#include "upvc/report.hpp"
#include "upvc/train.hpp"

namespace fs = std::filesystem;
using namespace upvc;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int threads = 0;
    bool deterministic = false;
    bool nondeterministic = false;
    std::string holdout;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Globals& g)
{
    ExperimentConfig c;
    if (!g.config_path.empty()) {
        c = load_config(g.config_path);
    }
    if (g.seed) {
        c.training.seed = *g.seed;
        c.bootstrap.seed = *g.seed;
    }
    if (g.threads > 0) {
        c.threads = g.threads;
    }
    if (g.deterministic) {
        c.training.deterministic = true;
    }
    if (g.nondeterministic) {
        c.training.deterministic = false;
    }
    if (!g.holdout.empty()) {
        c.holdout_id = g.holdout;
    }
    c.validate();
    if (c.threads > 0) {
        kernels::set_num_threads(c.threads);
    }
    return c;
}

void require_holdout(const ExperimentConfig& c, const data::Corpus& corpus)
{
    if (c.holdout_id.empty()) {
        throw ConfigError("no holdout dataset given (config holdout_id or --holdout)");
    }
    if (!corpus.has_dataset(c.holdout_id)) {
        throw ConfigError("holdout '" + c.holdout_id + "' is not among the loaded manifests");
    }
}

harness::RunOptions run_options(const Globals& g)
{
    harness::RunOptions o;
    o.checkpoint_dir = g.out;
    if (!g.quiet) {
        o.log = [](const std::string& s) { std::cerr << s << '\n'; };
    }
    return o;
}

report::Report new_report(const std::string& command, const ExperimentConfig& c, const data::Corpus& corpus)
{
    report::Report r;
    r.command = command;
    r.config = c;
    r.census = corpus.census();
    r.started_at = report::utc_now_iso();
    return r;
}

double elapsed(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_ingest(const Globals& g, const std::vector<std::string>& manifests, const std::string& dump)
{
    auto c = resolve_config(g);
    for (const auto& m : manifests) {
        c.manifests.emplace_back(m);
    }
    const auto corpus = harness::load_corpus(c);
    std::cout << report::census_table(corpus.census());
    if (!dump.empty()) {
        const dsp::FeatureExtractor fx(c.feature_params());
        const data::FeatureTable table(corpus, fx);
        std::vector<dsp::SpectralFeature> features;
        std::vector<dsp::FeatureDumpEntry> entries;
        const auto& p = c.feature_params();
        for (std::size_t i = 0; i < table.size(); ++i) {
            const auto row = table.row(i);
            features.push_back({p.n_filters, p.n_kept_frames(), {row.begin(), row.end()}});
            const auto& e = corpus.examples()[i];
            entries.push_back({e.dataset_id, e.record_id, e.lead_index, e.center_200hz});
        }
        dsp::write_feature_dump(dump, features, entries);
        std::cout << "wrote " << features.size() << " features to " << dump << ".bin\n";
    }
    return 0;
}

int cmd_train(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c);
    const dsp::FeatureExtractor fx(c.feature_params());
    const data::FeatureTable features(corpus, fx);
    const auto keep = corpus.quality_mask(c.quality_params(), c.preprocessing.window);

    data::TrainingPool pool;
    if (c.holdout_id.empty()) {
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) {
                pool.examples.push_back(i);
            }
        }
    } else {
        require_holdout(c, corpus);
        pool = data::lodo_split(corpus, c.holdout_id, keep).train;
    }
    const auto [train, val] = data::patient_split(corpus, pool, c.training.val_fraction, c.training.seed);
    auto trained = train_model(c.model_config(), c.training, {corpus, features}, train.examples, val.examples,
                               [&](const EpochLog& log, const nn::ModelParams&) {
                                   if (!g.quiet) {
                                       std::cerr << "epoch " << log.epoch << " loss " << log.train_loss << '\n';
                                   }
                                   return false;
                               });
    fs::create_directories(g.out);
    harness::RunResult r;
    r.name = "train";
    r.holdout_id = c.holdout_id;
    r.config = c;
    r.parameter_count = trained.params.size();
    r.epochs = trained.epochs;
    r.best_epoch = trained.best_epoch;
    r.steps = trained.steps;
    r.train_provenance = train.provenance;
    r.val_provenance = val.provenance;
    r.gradient_provenance = trained.gradient_provenance;
    r.checkpoint = "model";
    nn::save_checkpoint(fs::path(g.out) / r.checkpoint, trained.params, {c.training.seed, trained.steps});
    auto rep = new_report("train", c, corpus);
    rep.runs.push_back(std::move(r));
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    std::cout << "checkpoint: " << (fs::path(g.out) / "model").string() << '\n';
    return 0;
}

harness::RunResult evaluate_checkpoint(const ExperimentConfig& c, const data::Corpus& corpus,
                                       const std::string& model, std::optional<std::size_t> lead)
{
    auto params = std::make_shared<const nn::ModelParams>(nn::load_checkpoint(model));
    auto cfg = c;
    cfg.flags.bigru_on = params->config().backbone == nn::Backbone::BiGru;
    if (params->config().feature_size() != cfg.model_config().feature_size()) {
        throw ConfigError("checkpoint input shape does not match the configured preprocessing");
    }
    const dsp::FeatureExtractor fx(cfg.feature_params());
    const data::FeatureTable features(corpus, fx);
    return harness::evaluate_model("eval", cfg, corpus, features, params, {cfg.thresholds, cfg.bootstrap}, lead);
}

int cmd_eval(const Globals& g, const std::string& model)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c);
    require_holdout(c, corpus);
    auto rep = new_report("eval", c, corpus);
    rep.runs.push_back(evaluate_checkpoint(c, corpus, model, std::nullopt));
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    for (const auto& l : rep.runs[0].leads) {
        std::printf("lead %zu: AUROC %s\n", l.lead, l.auroc.point ? std::to_string(*l.auroc.point).c_str() : "n/a");
    }
    return 0;
}

void print_leads(const harness::RunResult& r)
{
    for (const auto& l : r.leads) {
        std::printf("%s lead %zu: n=%zu AUROC %s", r.name.c_str(), l.lead, l.scored.size(),
                    l.auroc.point ? std::to_string(*l.auroc.point).c_str() : "n/a");
        if (l.auroc.ci) {
            std::printf(" [%.4f, %.4f]", l.auroc.ci->lo, l.auroc.ci->hi);
        }
        std::printf("\n");
    }
}

int cmd_lodo(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c);
    require_holdout(c, corpus);
    auto rep = new_report("lodo", c, corpus);
    rep.runs.push_back(harness::run_lodo(c, corpus, run_options(g)));
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    print_leads(rep.runs[0]);
    return 0;
}

int cmd_benchmark(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c, true);
    require_holdout(c, corpus);
    auto rep = new_report("benchmark-mitbih", c, corpus);
    rep.runs.push_back(harness::run_benchmark_mitbih_ch1(c, corpus, run_options(g)));
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    print_leads(rep.runs[0]);
    return 0;
}

int cmd_ablate(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c);
    require_holdout(c, corpus);
    auto rep = new_report("ablate", c, corpus);
    auto ab = harness::run_ablation(c, corpus, run_options(g));
    rep.runs = std::move(ab.runs);
    rep.comparisons = std::move(ab.comparisons);
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    for (const auto& r : rep.runs) {
        print_leads(r);
    }
    for (const auto& cmp : rep.comparisons) {
        if (cmp.result) {
            std::printf("%s vs %s lead %zu: p=%.4g%s\n", cmp.run_a.c_str(), cmp.run_b.c_str(), cmp.lead,
                        cmp.result->p, cmp.significant ? " *" : "");
        }
    }
    return 0;
}

int cmd_curve(const Globals& g)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = resolve_config(g);
    if (c.curve.n_values.empty()) {
        throw ConfigError("curve.n_values is empty");
    }
    const auto corpus = harness::load_corpus(c);
    require_holdout(c, corpus);
    auto rep = new_report("curve", c, corpus);
    rep.curve = harness::run_training_curve(c, corpus, run_options(g));
    rep.wall_seconds = elapsed(t0);
    report::emit_report(rep, g.out);
    for (const auto& p : rep.curve->points) {
        for (const auto& [lead, a] : p.multi) {
            const auto s = p.single_median.find(lead);
            std::printf("n=%zu lead %zu: multi %.4f single-median %s\n", p.n, lead, a,
                        s == p.single_median.end() ? "n/a" : std::to_string(s->second).c_str());
        }
    }
    return 0;
}

int cmd_export(const Globals& g, const std::string& model, std::optional<std::size_t> k, const std::string& direction,
               std::optional<std::size_t> lead, std::optional<double> threshold)
{
    const auto c = resolve_config(g);
    const auto corpus = harness::load_corpus(c);
    require_holdout(c, corpus);
    metrics::ErrorDirection dir;
    if (direction == "fn") {
        dir = metrics::ErrorDirection::FalseNegative;
    } else if (direction == "fp") {
        dir = metrics::ErrorDirection::FalsePositive;
    } else {
        throw ConfigError("--direction must be fn or fp");
    }
    const auto r = evaluate_checkpoint(c, corpus, model, lead);
    const double t = threshold.value_or(c.thresholds.front());
    for (const auto& l : r.leads) {
        const auto errs = harness::export_extreme_errors(corpus, l, k.value_or(c.error_export_k), dir, t, g.out);
        std::printf("lead %zu: exported %zu %s errors\n", l.lead, errs.size(), direction.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"uPVC-Net research engine"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "Experiment config (JSON)");
    app.add_option("--seed", g.seed, "Training and bootstrap seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--threads", g.threads, "OpenMP threads (0 = default)");
    app.add_option("--holdout", g.holdout, "Holdout dataset id");
    auto* det = app.add_flag("--deterministic", g.deterministic, "Fixed-order gradient reduction");
    app.add_flag("--nondeterministic", g.nondeterministic, "Per-thread gradient accumulation")->excludes(det);
    app.add_flag("-q,--quiet", g.quiet, "No progress output");

    auto* ingest = app.add_subcommand("ingest", "Validate manifests and print a beat census");
    std::vector<std::string> manifests;
    std::string dump;
    ingest->add_option("--manifest", manifests, "Manifest file (repeatable)");
    ingest->add_option("--dump-features", dump, "Write all features to <stem>.bin/.json");

    auto* train = app.add_subcommand("train", "Train on the non-holdout datasets and save a checkpoint");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on every lead of the holdout");
    std::string model;
    eval->add_option("--model", model, "Checkpoint stem")->required();
    auto* lodo = app.add_subcommand("lodo", "Leave-one-dataset-out train and evaluate");
    auto* ablate = app.add_subcommand("ablate", "Full / no-bandpass / no-BiGRU ladder with DeLong tests");
    auto* curve = app.add_subcommand("curve", "Single- vs multi-source training curve");
    auto* bench = app.add_subcommand("benchmark-mitbih", "Single-lead benchmark at the benchmark threshold");
    auto* exp = app.add_subcommand("export-errors", "Write the most extreme errors and their windows");
    std::optional<std::size_t> k;
    std::string direction = "fn";
    std::optional<std::size_t> lead;
    std::optional<double> threshold;
    exp->add_option("--model", model, "Checkpoint stem")->required();
    exp->add_option("--k", k, "Number of errors per lead");
    exp->add_option("--direction", direction, "fn or fp");
    exp->add_option("--lead", lead, "Only this lead");
    exp->add_option("--threshold", threshold, "Decision threshold");
    auto* rep = app.add_subcommand("report", "Recompute tables from a run's scores.csv");
    std::string in_dir;
    rep->add_option("--in", in_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*ingest) {
            return cmd_ingest(g, manifests, dump);
        }
        if (*train) {
            return cmd_train(g);
        }
        if (*eval) {
            return cmd_eval(g, model);
        }
        if (*lodo) {
            return cmd_lodo(g);
        }
        if (*ablate) {
            return cmd_ablate(g);
        }
        if (*curve) {
            return cmd_curve(g);
        }
        if (*bench) {
            return cmd_benchmark(g);
        }
        if (*exp) {
            return cmd_export(g, model, k, direction, lead, threshold);
        }
        if (*rep) {
            report::recompute_report(in_dir, app.get_option("--out")->count() > 0 ? fs::path(g.out) : fs::path(in_dir));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}
