#pragma once

// Synthetic datasets written to disk as WFDB records plus a manifest.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "upvc/config.hpp"
#include "upvc/dataset.hpp"
#include "upvc/synthgen.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("upvc_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

struct Domain {
    std::string id;
    std::size_t records = 4;
    upvc::synth::SynthSpec base; // record_name and seed are set per record
};

/// One record per patient; returns the manifest path.
inline fs::path write_domain(const fs::path& root, const Domain& d)
{
    const fs::path dir = root / d.id;
    fs::create_directories(dir);
    upvc::data::DatasetManifest m;
    m.dataset_id = d.id;
    for (std::size_t r = 0; r < d.records; ++r) {
        auto spec = d.base;
        spec.record_name = d.id + "_" + std::to_string(r);
        spec.seed = d.base.seed * 1000 + r;
        const auto hea = upvc::synth::write_fixture(dir, spec);
        m.entries.push_back({hea, dir / (spec.record_name + ".atr"), "p" + std::to_string(r), {}});
    }
    const auto path = dir / "manifest.json";
    upvc::data::save_manifest(path, m);
    return path;
}

/// Four domains that differ in sampling rate, amplitude and noise. The
/// holdout ("target") has two leads.
inline std::vector<Domain> standard_domains(std::size_t records = 4, double duration = 60.0)
{
    auto make = [&](std::string id, double fs, double amp, double noise, double hr, std::uint64_t seed) {
        Domain d;
        d.id = std::move(id);
        d.records = records;
        d.base.fs = fs;
        d.base.duration = duration;
        d.base.amplitude = amp;
        d.base.noise_std = noise;
        d.base.heart_rate = hr;
        d.base.pvc_fraction = 0.25;
        d.base.seed = seed;
        return d;
    };
    auto a = make("alpha", 360.0, 1.0, 0.02, 70.0, 11);
    auto b = make("beta", 250.0, 0.7, 0.05, 80.0, 12);
    b.base.baseline_wander = 0.1;
    auto c = make("gamma", 257.0, 1.4, 0.03, 64.0, 13);
    c.base.p_wave = true;
    auto t = make("target", 360.0, 1.1, 0.04, 75.0, 14);
    t.base.lead_gains = {1.0, -0.6};
    return {a, b, c, t};
}

/// Sources that each cover a different part of the morphology and nuisance
/// range; the target sits inside their span rather than next to any one.
inline std::vector<Domain> shifted_domains(std::size_t records = 4, double duration = 120.0)
{
    auto make = [&](std::string id, double qrs, double pvc_qrs, double hr, double noise, std::uint64_t seed) {
        Domain d;
        d.id = std::move(id);
        d.records = records;
        d.base.fs = 360.0;
        d.base.duration = duration;
        d.base.qrs_width_normal = qrs;
        d.base.qrs_width_pvc = pvc_qrs;
        d.base.heart_rate = hr;
        d.base.noise_std = noise;
        d.base.pvc_fraction = 0.25;
        d.base.seed = seed;
        return d;
    };
    auto a = make("alpha", 70.0, 130.0, 60.0, 0.02, 21);
    auto b = make("beta", 110.0, 190.0, 95.0, 0.08, 22);
    b.base.baseline_wander = 0.2;
    auto c = make("gamma", 85.0, 150.0, 75.0, 0.04, 23);
    c.base.p_wave = true;
    c.base.pvc_prematurity = 0.8;
    auto t = make("target", 95.0, 165.0, 80.0, 0.06, 24);
    t.base.baseline_wander = 0.1;
    t.base.p_wave = true;
    t.base.pvc_prematurity = 0.72;
    return {a, b, c, t};
}

/// Writes every domain and returns a small, fast experiment config over them.
inline upvc::ExperimentConfig small_experiment(const fs::path& root, const std::vector<Domain>& domains,
                                               const std::string& holdout)
{
    upvc::ExperimentConfig c;
    for (const auto& d : domains) {
        c.manifests.push_back(write_domain(root, d));
    }
    c.holdout_id = holdout;
    c.model.hidden = 8;
    c.model.classifier_hidden = 8;
    c.model.dense_width = 4;
    c.training.batch_size = 32;
    c.training.learning_rate = 3e-3;
    c.training.epochs_max = 8;
    c.training.patience = 3;
    c.bootstrap.n_resamples = 20;
    return c;
}

/// Runs the command line tool; returns its exit status.
inline int run_cli(const std::string& args)
{
    const std::string cmd = std::string(UPVC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

inline std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace fixtures
