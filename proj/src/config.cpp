#include "upvc/config.hpp"

#include <fstream>
#include <set>

#include "upvc/error.hpp"

namespace upvc {

namespace fs = std::filesystem;
using nlohmann::json;

dsp::FeatureParams ExperimentConfig::feature_params() const
{
    dsp::FeatureParams p = preprocessing;
    if (!flags.bandpass_on) {
        p.f_min = 0.0;
        p.f_max = p.fs / 2.0;
    }
    return p;
}

nn::ModelConfig ExperimentConfig::model_config() const
{
    const auto fp = feature_params();
    nn::ModelConfig m;
    m.input_size = fp.n_filters;
    m.seq_len = fp.n_kept_frames();
    m.hidden = model.hidden;
    m.layers = model.layers;
    m.classifier_hidden = model.classifier_hidden;
    m.dense_width = model.dense_width;
    m.init_k = model.init_k;
    m.backbone = flags.bigru_on ? nn::Backbone::BiGru : nn::Backbone::Dense;
    return m;
}

data::QualityParams ExperimentConfig::quality_params() const
{
    auto q = quality;
    q.enabled = flags.quality_filter_on;
    return q;
}

void ExperimentConfig::validate() const
{
    const auto& p = preprocessing;
    if (p.fs <= 0.0 || p.window == 0 || p.n_fft == 0 || p.hop == 0 || p.n_filters == 0) {
        throw ConfigError("preprocessing: sizes and fs must be positive");
    }
    if ((p.n_fft & (p.n_fft - 1)) != 0) {
        throw ConfigError("preprocessing: n_fft must be a power of two");
    }
    if (p.window / p.hop + 1 < 3) {
        throw ConfigError("preprocessing: window too short for the frame layout");
    }
    if (!(p.f_min >= 0.0 && p.f_min < p.f_max && p.f_max <= p.fs / 2.0)) {
        throw ConfigError("preprocessing: need 0 <= f_min < f_max <= fs/2");
    }
    try {
        model_config().validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (training.batch_size == 0 || training.epochs_max == 0) {
        throw ConfigError("training: batch_size and epochs_max must be positive");
    }
    if (!(training.learning_rate > 0.0)) {
        throw ConfigError("training: learning_rate must be positive");
    }
    if (!(training.val_fraction > 0.0 && training.val_fraction < 1.0)) {
        throw ConfigError("training: val_fraction must lie in (0, 1)");
    }
    if (training.grad_clip < 0.0) {
        throw ConfigError("training: grad_clip must be >= 0");
    }
    if (thresholds.empty()) {
        throw ConfigError("thresholds: at least one threshold required");
    }
    for (const double t : thresholds) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw ConfigError("thresholds: values must lie in [0, 1]");
        }
    }
    if (bootstrap.n_resamples == 0 || !(bootstrap.level > 0.0 && bootstrap.level < 1.0)) {
        throw ConfigError("bootstrap: need n_resamples > 0 and level in (0, 1)");
    }
    if (curve.per_source_repeats == 0) {
        throw ConfigError("curve: per_source_repeats must be positive");
    }
    if (!(benchmark.threshold >= 0.0 && benchmark.threshold <= 1.0) || benchmark.edge_exclusion_seconds < 0.0) {
        throw ConfigError("benchmark: invalid threshold or edge exclusion");
    }
    if (threads < 0) {
        throw ConfigError("threads must be >= 0");
    }
}

json to_json(const ExperimentConfig& c)
{
    json manifests = json::array();
    for (const auto& m : c.manifests) {
        manifests.push_back(m.generic_string());
    }
    const auto& p = c.preprocessing;
    const auto& t = c.training;
    return {
        {"manifests", manifests},
        {"holdout_id", c.holdout_id},
        {"model",
         {{"hidden_per_direction", c.model.hidden},
          {"layers", c.model.layers},
          {"classifier_hidden", c.model.classifier_hidden},
          {"dense_width", c.model.dense_width},
          {"init_k", c.model.init_k}}},
        {"preprocessing",
         {{"fs", p.fs},
          {"window", p.window},
          {"n_fft", p.n_fft},
          {"hop", p.hop},
          {"n_mels", p.n_filters},
          {"f_min", p.f_min},
          {"f_max", p.f_max}}},
        {"training",
         {{"batch", t.batch_size},
          {"lr", t.learning_rate},
          {"epochs_max", t.epochs_max},
          {"patience", t.patience},
          {"seed", t.seed},
          {"val_fraction", t.val_fraction},
          {"grad_clip", t.grad_clip},
          {"deterministic", t.deterministic}}},
        {"flags",
         {{"bandpass_on", c.flags.bandpass_on},
          {"bigru_on", c.flags.bigru_on},
          {"quality_filter_on", c.flags.quality_filter_on},
          {"edge_exclusion", c.flags.edge_exclusion}}},
        {"quality",
         {{"min_std", c.quality.min_std}, {"max_rail_fraction", c.quality.max_rail_fraction}}},
        {"thresholds", c.thresholds},
        {"bootstrap",
         {{"n_resamples", c.bootstrap.n_resamples},
          {"seed", c.bootstrap.seed},
          {"level", c.bootstrap.level},
          {"cluster_by_patient", c.bootstrap.cluster_by_patient}}},
        {"curve",
         {{"n_values", c.curve.n_values},
          {"per_source_repeats", c.curve.per_source_repeats},
          {"pooled_uniform", c.curve.pooled_uniform}}},
        {"benchmark",
         {{"lead", c.benchmark.lead},
          {"threshold", c.benchmark.threshold},
          {"edge_exclusion_seconds", c.benchmark.edge_exclusion_seconds}}},
        {"error_export_k", c.error_export_k},
        {"threads", c.threads},
    };
}

namespace {

// Reads known keys of one object into fields, rejecting anything unexpected.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + name_ + "' must be an object");
        }
    }
    ~Section() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0) {
            return;
        }
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) {
                throw ConfigError("config: unknown key '" + name_ + "." + k + "'");
            }
        }
    }
    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    template <class T>
    void get(const std::string& key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + name_ + "." + key + "': " + e.what());
        }
    }

    const json* child(const std::string& key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

} // namespace

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig c;
    Section root(j, "config");
    std::vector<std::string> manifests;
    root.get("manifests", manifests);
    c.manifests.assign(manifests.begin(), manifests.end());
    root.get("holdout_id", c.holdout_id);
    if (const auto* m = root.child("model")) {
        Section s(*m, "model");
        s.get("hidden_per_direction", c.model.hidden);
        s.get("layers", c.model.layers);
        s.get("classifier_hidden", c.model.classifier_hidden);
        s.get("dense_width", c.model.dense_width);
        s.get("init_k", c.model.init_k);
    }
    if (const auto* m = root.child("preprocessing")) {
        Section s(*m, "preprocessing");
        auto& p = c.preprocessing;
        s.get("fs", p.fs);
        s.get("window", p.window);
        s.get("n_fft", p.n_fft);
        s.get("hop", p.hop);
        s.get("n_mels", p.n_filters);
        s.get("f_min", p.f_min);
        s.get("f_max", p.f_max);
    }
    if (const auto* m = root.child("training")) {
        Section s(*m, "training");
        auto& t = c.training;
        s.get("batch", t.batch_size);
        s.get("lr", t.learning_rate);
        s.get("epochs_max", t.epochs_max);
        s.get("patience", t.patience);
        s.get("seed", t.seed);
        s.get("val_fraction", t.val_fraction);
        s.get("grad_clip", t.grad_clip);
        s.get("deterministic", t.deterministic);
    }
    if (const auto* m = root.child("flags")) {
        Section s(*m, "flags");
        s.get("bandpass_on", c.flags.bandpass_on);
        s.get("bigru_on", c.flags.bigru_on);
        s.get("quality_filter_on", c.flags.quality_filter_on);
        s.get("edge_exclusion", c.flags.edge_exclusion);
    }
    if (const auto* m = root.child("quality")) {
        Section s(*m, "quality");
        s.get("min_std", c.quality.min_std);
        s.get("max_rail_fraction", c.quality.max_rail_fraction);
    }
    root.get("thresholds", c.thresholds);
    if (const auto* m = root.child("bootstrap")) {
        Section s(*m, "bootstrap");
        s.get("n_resamples", c.bootstrap.n_resamples);
        s.get("seed", c.bootstrap.seed);
        s.get("level", c.bootstrap.level);
        s.get("cluster_by_patient", c.bootstrap.cluster_by_patient);
    }
    if (const auto* m = root.child("curve")) {
        Section s(*m, "curve");
        s.get("n_values", c.curve.n_values);
        s.get("per_source_repeats", c.curve.per_source_repeats);
        s.get("pooled_uniform", c.curve.pooled_uniform);
    }
    if (const auto* m = root.child("benchmark")) {
        Section s(*m, "benchmark");
        s.get("lead", c.benchmark.lead);
        s.get("threshold", c.benchmark.threshold);
        s.get("edge_exclusion_seconds", c.benchmark.edge_exclusion_seconds);
    }
    root.get("error_export_k", c.error_export_k);
    root.get("threads", c.threads);
    return c;
}

ExperimentConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    auto c = config_from_json(j);
    for (auto& m : c.manifests) {
        if (m.is_relative()) {
            m = path.parent_path() / m;
        }
    }
    c.validate();
    return c;
}

void save_config(const fs::path& path, const ExperimentConfig& c)
{
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write config " + path.string());
    }
    out << to_json(c).dump(2) << '\n';
}

} // namespace upvc
