#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "upvc/config.hpp"
#include "upvc/error.hpp"

using namespace upvc;

TEST_CASE("config: json round trip")
{
    ExperimentConfig c;
    CHECK(config_from_json(to_json(c)) == c);

    c.manifests = {"/a/m.json", "/b/m.json"};
    c.holdout_id = "b";
    c.model.hidden = 12;
    c.preprocessing.f_min = 1.0;
    c.training.seed = 99;
    c.training.deterministic = false;
    c.flags.bigru_on = false;
    c.quality.max_rail_fraction = 0.1;
    c.thresholds = {0.3};
    c.bootstrap.cluster_by_patient = true;
    c.curve.n_values = {10, 20};
    c.curve.pooled_uniform = true;
    c.benchmark.lead = 1;
    c.error_export_k = 3;
    c.threads = 2;
    CHECK(config_from_json(to_json(c)) == c);
}

TEST_CASE("config: unknown keys and bad values are rejected")
{
    auto j = to_json(ExperimentConfig{});
    j["training"]["learning_rte"] = 0.1;
    CHECK_THROWS_AS((void)config_from_json(j), ConfigError);

    auto top = to_json(ExperimentConfig{});
    top["extra"] = 1;
    CHECK_THROWS_AS((void)config_from_json(top), ConfigError);

    auto bad_type = to_json(ExperimentConfig{});
    bad_type["training"]["batch"] = "many";
    CHECK_THROWS_AS((void)config_from_json(bad_type), ConfigError);

    ExperimentConfig c;
    c.thresholds = {1.5};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.training.val_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.preprocessing.f_max = 150.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config: missing keys keep defaults")
{
    const auto c = config_from_json(nlohmann::json::parse(R"({"holdout_id": "x", "training": {"seed": 4}})"));
    CHECK(c.holdout_id == "x");
    CHECK(c.training.seed == 4);
    CHECK(c.training.batch_size == 64);
    CHECK(c.model.hidden == 64);
}

TEST_CASE("config: derived model and features")
{
    ExperimentConfig c;
    const auto m = c.model_config();
    CHECK(m.backbone == nn::Backbone::BiGru);
    CHECK(m.input_size == 48);
    CHECK(m.seq_len == 11);
    CHECK(m.readout_size() == 128);
    CHECK(c.feature_params().f_min == 0.5);
    CHECK(c.feature_params().f_max == 40.0);

    c.flags.bandpass_on = false;
    CHECK(c.feature_params().f_min == 0.0);
    CHECK(c.feature_params().f_max == 100.0);
    c.flags.bigru_on = false;
    CHECK(c.model_config().backbone == nn::Backbone::Dense);
    CHECK(nn::ParamLayout(c.model_config()).total() < nn::ParamLayout(ExperimentConfig{}.model_config()).total());

    c.flags.quality_filter_on = false;
    CHECK(!c.quality_params().enabled);
}

TEST_CASE("config: files resolve manifests relative to the config")
{
    fixtures::TempDir tmp("config");
    std::filesystem::create_directories(tmp.path() / "sub");
    std::ofstream(tmp.path() / "sub" / "cfg.json") << R"({"manifests": ["../data/m.json"], "holdout_id": "m"})";
    const auto c = load_config(tmp.path() / "sub" / "cfg.json");
    REQUIRE(c.manifests.size() == 1);
    CHECK(std::filesystem::weakly_canonical(c.manifests[0]) ==
          std::filesystem::weakly_canonical(tmp.path() / "data" / "m.json"));

    save_config(tmp.path() / "saved.json", c);
    CHECK(load_config(tmp.path() / "saved.json") == c);
    std::ofstream(tmp.path() / "broken.json") << "{not json";
    CHECK_THROWS_AS((void)load_config(tmp.path() / "broken.json"), ConfigError);
    CHECK_THROWS_AS((void)load_config(tmp.path() / "absent.json"), ConfigError);
}
