#include <doctest.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "upvc/config.hpp"
#include "upvc/harness.hpp"
#include "upvc/report.hpp"

using namespace upvc;
using namespace upvc::harness;
namespace fs = std::filesystem;

namespace {

struct World {
    fixtures::TempDir tmp{"harness"};
    ExperimentConfig config;
    data::Corpus corpus;
    fs::path config_path;
    World()
    {
        config = fixtures::small_experiment(tmp.path(), fixtures::standard_domains(3, 30.0), "target");
        corpus = load_corpus(config);
        config_path = tmp.path() / "config.json";
        save_config(config_path, config);
    }
};

World& world()
{
    static World w;
    return w;
}

nlohmann::json without_timestamp(const fs::path& p)
{
    auto j = nlohmann::json::parse(fixtures::slurp(p));
    j.erase("timestamp");
    return j;
}

} // namespace

TEST_CASE("lodo: holdout hygiene and evaluation coverage")
{
    auto& w = world();
    const auto r = run_lodo(w.config, w.corpus);
    CHECK(!r.gradient_provenance.contains("target"));
    CHECK(!r.train_provenance.contains("target"));
    CHECK(!r.val_provenance.contains("target"));
    CHECK(r.gradient_provenance.size() == 3);
    REQUIRE(r.leads.size() == 2);
    const auto& census = w.corpus.census().back();
    std::size_t evaluated = 0;
    for (const auto& l : r.leads) {
        evaluated += l.scored.size();
        CHECK(l.auroc.point.has_value());
        CHECK(l.auroc.ci->lo <= *l.auroc.point);
        CHECK(*l.auroc.point <= l.auroc.ci->hi);
        REQUIRE(l.thresholds.size() == 2);
        CHECK(l.thresholds[0].counts.n() == l.scored.size());
    }
    CHECK(evaluated == census.examples);
    CHECK(evaluated == (census.pvc + census.non_pvc) * 2);
    CHECK(r.parameter_count == nn::ParamLayout(w.config.model_config()).total());
    CHECK(!r.epochs.empty());
    CHECK(r.best_epoch >= 1);

    const auto self = compare_runs(r, r);
    REQUIRE(self.size() == 2);
    for (const auto& c : self) {
        REQUIRE(c.result.has_value());
        CHECK(c.result->p == 1.0);
        CHECK(!c.significant);
    }
}

TEST_CASE("ablation variants differ only in their flags")
{
    const auto& w = world();
    const auto v = ablation_variants(w.config);
    REQUIRE(v.size() == 3);
    CHECK(v[0].first == "full");
    CHECK(v[1].first == "no_bandpass");
    CHECK(v[2].first == "no_bigru");
    CHECK(v[0].second == w.config);
    auto a = v[1].second;
    CHECK(!a.flags.bandpass_on);
    a.flags.bandpass_on = true;
    CHECK(a == w.config);
    auto b = v[2].second;
    CHECK(!b.flags.bandpass_on);
    CHECK(!b.flags.bigru_on);
    b.flags.bigru_on = true;
    CHECK(b == v[1].second);
    CHECK(nn::ParamLayout(v[2].second.model_config()).total() < nn::ParamLayout(v[0].second.model_config()).total());
}

TEST_CASE("ablation: band-limited classes with out-of-band noise")
{
    fixtures::TempDir tmp("bandpass");
    auto domains = fixtures::standard_domains(3, 30.0);
    for (auto& d : domains) {
        d.base.highband_noise_std = 0.3;
    }
    const auto cfg = fixtures::small_experiment(tmp.path(), domains, "target");
    const auto corpus = load_corpus(cfg);
    const auto res = run_ablation(cfg, corpus);
    REQUIRE(res.runs.size() == 3);
    for (std::size_t lead = 0; lead < 2; ++lead) {
        CHECK(*res.runs[0].leads[lead].auroc.point >= *res.runs[1].leads[lead].auroc.point);
    }
    CHECK(res.runs[2].parameter_count < res.runs[0].parameter_count);
    CHECK(res.comparisons.size() == 4);
}

TEST_CASE("training curve: rows, medians and skipped points")
{
    auto cfg = world().config;
    cfg.curve.n_values = {30, 150};
    const auto& census = world().corpus.census();
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(census[i].examples < 150);
    }
    const auto c = run_training_curve(cfg, world().corpus);
    CHECK(c.rows.size() == 2 * (1 + 3));
    REQUIRE(c.points.size() == 2);
    for (const auto& row : c.rows) {
        if (row.n == 150 && row.strategy == "single") {
            CHECK(row.skipped);
        } else {
            CHECK(!row.skipped);
            CHECK(row.auroc.size() == 2);
        }
    }
    CHECK(c.points[1].single_median.empty());
    CHECK(c.points[1].multi.size() == 2);
    std::vector<double> singles;
    for (const auto& row : c.rows) {
        if (row.n == 30 && row.strategy == "single") {
            singles.push_back(row.auroc.at(0));
        }
    }
    CHECK(c.points[0].single_median.at(0) == median(singles));
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("benchmark: one lead, high threshold first")
{
    auto& w = world();
    const auto corpus = load_corpus(w.config, true);
    CHECK(corpus.census().back().examples < w.corpus.census().back().examples);
    const auto r = run_benchmark_mitbih_ch1(w.config, corpus);
    REQUIRE(r.leads.size() == 1);
    CHECK(r.leads[0].lead == w.config.benchmark.lead);
    CHECK(r.odds_threshold == 0.9);
    const auto& t = r.leads[0].thresholds;
    REQUIRE(t.size() == 2);
    CHECK(t[0].threshold == 0.9);
    CHECK(t[1].threshold == 0.5);
    CHECK(t[0].values.contains(metrics::MetricKind::Npv));
    const auto se9 = t[0].values.at(metrics::MetricKind::Sensitivity).point;
    const auto se5 = t[1].values.at(metrics::MetricKind::Sensitivity).point;
    REQUIRE(se9.has_value());
    REQUIRE(se5.has_value());
    CHECK(*se9 <= *se5);
}

TEST_CASE("cli: lodo is reproducible and its tables recompute")
{
    auto& w = world();
    const auto a = w.tmp.path() / "run_a";
    const auto b = w.tmp.path() / "run_b";
    const auto t = w.tmp.path() / "run_threads";
    const std::string cfg = "--config " + w.config_path.string() + " --seed 5 -q";
    REQUIRE(fixtures::run_cli(cfg + " --out " + a.string() + " lodo") == 0);
    REQUIRE(fixtures::run_cli(cfg + " --out " + b.string() + " lodo") == 0);
    REQUIRE(fixtures::run_cli(cfg + " --threads 2 --out " + t.string() + " lodo") == 0);
    for (const char* f : {"report.json", "config.json", "metrics.csv", "scores.csv", "odds_target.csv", "roc_0.csv",
                          "roc_1.csv", "roc_0.svg", "training_curve.csv"}) {
        CHECK_MESSAGE(fs::exists(a / f), f);
    }
    CHECK(without_timestamp(a / "report.json") == without_timestamp(b / "report.json"));
    CHECK(fixtures::slurp(a / "scores.csv") == fixtures::slurp(t / "scores.csv"));
    CHECK(fixtures::slurp(a / "metrics.csv") == fixtures::slurp(t / "metrics.csv"));

    const auto odds_header = fixtures::slurp(a / "odds_target.csv").substr(0, 33);
    CHECK(odds_header == "label,nonpvc_count,pvc_count,odds");

    const auto c = w.tmp.path() / "recomputed";
    REQUIRE(fixtures::run_cli("report --in " + a.string() + " --out " + c.string()) == 0);
    for (const char* f : {"metrics.csv", "odds_target.csv", "roc_0.csv", "roc_1.csv"}) {
        CHECK_MESSAGE(fixtures::slurp(a / f) == fixtures::slurp(c / f), f);
    }
}

TEST_CASE("cli: train, eval and export-errors")
{
    auto& w = world();
    const auto out = w.tmp.path() / "trained";
    const std::string cfg = "--config " + w.config_path.string() + " -q --out " + out.string();
    REQUIRE(fixtures::run_cli(cfg + " train") == 0);
    CHECK(fs::exists(out / "model.bin"));
    CHECK(fs::exists(out / "model.json"));
    const auto ev = w.tmp.path() / "evaluated";
    REQUIRE(fixtures::run_cli("--config " + w.config_path.string() + " -q --out " + ev.string() + " eval --model " +
                              (out / "model").string()) == 0);
    CHECK(fs::exists(ev / "metrics.csv"));
    const auto ex = w.tmp.path() / "errors";
    REQUIRE(fixtures::run_cli("--config " + w.config_path.string() + " -q --out " + ex.string() +
                              " export-errors --model " + (out / "model").string() +
                              " --k 3 --direction fp --threshold 0.01") == 0);
    CHECK(fs::exists(ex / "errors_fp_lead0.csv"));
    CHECK(fs::exists(ex / "segments"));
}

TEST_CASE("cli: ingest and exit codes")
{
    auto& w = world();
    CHECK(fixtures::run_cli("--config " + w.config_path.string() + " -q ingest") == 0);
    CHECK(fixtures::run_cli("--config " + (w.tmp.path() / "absent.json").string() + " lodo") == 2);
    CHECK(fixtures::run_cli("--bogus") == 2);

    auto bad = w.config;
    bad.manifests.push_back(w.tmp.path() / "nowhere" / "manifest.json");
    save_config(w.tmp.path() / "bad_manifest.json", bad);
    CHECK(fixtures::run_cli("--config " + (w.tmp.path() / "bad_manifest.json").string() + " -q lodo") == 3);

    auto unknown = w.config;
    unknown.holdout_id = "nope";
    save_config(w.tmp.path() / "bad_holdout.json", unknown);
    CHECK(fixtures::run_cli("--config " + (w.tmp.path() / "bad_holdout.json").string() + " -q lodo") == 2);
}

TEST_CASE("report: every emitted file is produced for an ablation")
{
    auto& w = world();
    const auto out = w.tmp.path() / "ablation";
    REQUIRE(fixtures::run_cli("--config " + w.config_path.string() + " -q --out " + out.string() + " ablate") == 0);
    CHECK(fs::exists(out / "ablation.svg"));
    CHECK(fs::exists(out / "odds_target.csv"));
    CHECK(fs::exists(out / "odds_target__no_bandpass.csv"));
    const auto j = nlohmann::json::parse(fixtures::slurp(out / "report.json"));
    CHECK(j.at("runs").size() == 3);
    CHECK(j.at("comparisons").size() == 4);
    CHECK(j.contains("timestamp"));
}
