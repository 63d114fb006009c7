#include "upvc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "upvc/error.hpp"

namespace upvc::synth {

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double normal()
    {
        // Box-Muller; avoids implementation-defined std::normal_distribution.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 gen_;
};

double gauss(double t, double center, double sigma)
{
    const double d = (t - center) / sigma;
    return std::exp(-0.5 * d * d);
}

constexpr double kAdcGain = 1000.0;

} // namespace

void SynthSpec::validate() const
{
    if (!(fs >= 100.0)) {
        throw InvalidArgument("synth: fs must be at least 100 Hz");
    }
    if (!(duration > 0.0) || !(heart_rate > 0.0)) {
        throw InvalidArgument("synth: duration and heart rate must be positive");
    }
    if (!(pvc_fraction >= 0.0 && pvc_fraction <= 1.0)) {
        throw InvalidArgument("synth: pvc_fraction must lie in [0, 1]");
    }
    if (!(qrs_width_pvc > qrs_width_normal) || !(qrs_width_normal > 0.0)) {
        throw InvalidArgument("synth: PVC QRS must be wider than the normal QRS");
    }
    if (!(pvc_prematurity > 0.2 && pvc_prematurity < 1.0)) {
        throw InvalidArgument("synth: pvc_prematurity must lie in (0.2, 1)");
    }
    if (lead_gains.empty()) {
        throw InvalidArgument("synth: need at least one lead");
    }
    if (noise_std < 0.0 || highband_noise_std < 0.0 || rr_jitter < 0.0 || rr_jitter >= 0.5) {
        throw InvalidArgument("synth: invalid noise or jitter");
    }
}

std::size_t SynthRecord::count(char symbol) const
{
    return static_cast<std::size_t>(std::count_if(record.annotations.begin(), record.annotations.end(),
                                                  [&](const auto& a) { return a.symbol == symbol; }));
}

SynthRecord generate(const SynthSpec& spec)
{
    spec.validate();
    Rng rng(spec.seed);
    const double rr = 60.0 / spec.heart_rate;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fs));

    // Beat schedule on a jittered RR grid; a PVC replaces a grid beat and comes
    // early, the next beat stays on the grid (compensatory pause).
    struct Beat {
        double t;
        bool pvc;
    };
    std::vector<Beat> beats;
    double grid = 0.6 * rr;
    double prev_t = -rr;
    while (grid < spec.duration - 0.3) {
        const bool pvc = !beats.empty() && rng.uniform() < spec.pvc_fraction;
        const double t = pvc ? prev_t + spec.pvc_prematurity * rr : grid;
        beats.push_back({t, pvc});
        prev_t = t;
        grid += rr * (1.0 + spec.rr_jitter * (2.0 * rng.uniform() - 1.0));
    }

    const double sn = spec.qrs_width_normal / 1000.0 / 6.0;
    const double sp = spec.qrs_width_pvc / 1000.0 / 6.0;
    std::vector<double> clean(n, 0.0);
    for (const auto& b : beats) {
        const auto lo = static_cast<std::int64_t>(std::floor((b.t - 0.6) * spec.fs));
        const auto hi = static_cast<std::int64_t>(std::ceil((b.t + 0.6) * spec.fs));
        for (std::int64_t i = std::max<std::int64_t>(lo, 0); i < std::min<std::int64_t>(hi, static_cast<std::int64_t>(n));
             ++i) {
            const double t = static_cast<double>(i) / spec.fs;
            double v = 0.0;
            if (b.pvc) {
                v = spec.pvc_amplitude_factor * spec.amplitude * gauss(t, b.t, sp) -
                    0.35 * spec.amplitude * gauss(t, b.t + 0.2, 0.05);
            } else {
                v = spec.amplitude * (gauss(t, b.t, sn) - 0.15 * gauss(t, b.t - 2.5 * sn, 0.8 * sn) -
                                      0.2 * gauss(t, b.t + 2.5 * sn, 0.8 * sn));
                if (spec.p_wave) {
                    v += 0.12 * spec.amplitude * gauss(t, b.t - 0.16, 0.02);
                }
            }
            clean[static_cast<std::size_t>(i)] += v;
        }
    }

    // Band-limited high-frequency interference: random sinusoids in 45-90 Hz.
    constexpr int kTones = 24;
    std::vector<double> tone_f(kTones);
    std::vector<double> tone_phase(kTones);
    const double f_hi = std::min(90.0, 0.45 * spec.fs);
    for (int k = 0; k < kTones; ++k) {
        tone_f[k] = 45.0 + (f_hi - 45.0) * rng.uniform();
        tone_phase[k] = 2.0 * std::numbers::pi * rng.uniform();
    }
    const double tone_amp = spec.highband_noise_std * std::sqrt(2.0 / kTones);

    SynthRecord out;
    auto& rec = out.record;
    rec.header.record_name = spec.record_name;
    rec.header.n_signals = static_cast<int>(spec.lead_gains.size());
    rec.header.sampling_frequency = spec.fs;
    rec.header.n_samples_per_signal = n;
    for (std::size_t l = 0; l < spec.lead_gains.size(); ++l) {
        wfdb::SignalSpec s;
        s.file_name = spec.record_name + ".dat";
        s.format = wfdb::kFormat16;
        s.gain = kAdcGain;
        s.baseline = 0;
        s.adc_resolution = 16;
        s.lead_name = "L" + std::to_string(l + 1);
        rec.header.signals.push_back(s);

        std::vector<double> x(n);
        const double wander_phase = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / spec.fs;
            double v = spec.lead_gains[l] * clean[i] + spec.noise_std * rng.normal();
            if (tone_amp > 0.0) {
                for (int k = 0; k < kTones; ++k) {
                    v += tone_amp * std::sin(2.0 * std::numbers::pi * tone_f[k] * t + tone_phase[k] + static_cast<double>(l));
                }
            }
            if (spec.baseline_wander > 0.0) {
                v += spec.baseline_wander * std::sin(2.0 * std::numbers::pi * 0.3 * t + wander_phase);
            }
            // quantize exactly as the format-16 writer does
            x[i] = std::round(v * kAdcGain) / kAdcGain;
        }
        rec.signals.push_back(std::move(x));
    }

    for (const auto& b : beats) {
        const auto idx = static_cast<std::int64_t>(std::llround(b.t * spec.fs));
        if (idx < 0 || idx >= static_cast<std::int64_t>(n)) {
            continue;
        }
        wfdb::AnnotationEntry a;
        a.sample_index = idx;
        a.symbol = b.pvc ? 'V' : 'N';
        a.type_code = wfdb::code_for_symbol(a.symbol);
        rec.annotations.push_back(a);
        out.beat_times.push_back(b.t);
    }
    return out;
}

std::filesystem::path write_fixture(const std::filesystem::path& dir, const SynthSpec& spec)
{
    const auto s = generate(spec);
    wfdb::write_record(dir, s.record);
    return dir / (spec.record_name + ".hea");
}

} // namespace upvc::synth
