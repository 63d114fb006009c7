#pragma once

// Seeded synthetic ECG with narrow normal and wide early PVC complexes, used
// as desk-scale fixtures for the whole pipeline.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upvc/wfdb.hpp"

namespace upvc::synth {

struct SynthSpec {
    std::string record_name = "synth";
    double fs = 360.0;
    double duration = 60.0;       // s
    double heart_rate = 72.0;     // bpm
    double rr_jitter = 0.02;      // fraction of RR, uniform
    double pvc_fraction = 0.2;
    double pvc_prematurity = 0.65; // PVC onset as a fraction of the RR interval
    double qrs_width_normal = 90.0; // ms
    double qrs_width_pvc = 160.0;   // ms
    double amplitude = 1.0;         // mV, normal R peak
    double pvc_amplitude_factor = 1.6;
    double noise_std = 0.02;          // mV, white
    double highband_noise_std = 0.0;  // mV, energy between 45 and 90 Hz
    double baseline_wander = 0.0;     // mV, 0.3 Hz sinusoid
    bool p_wave = false;
    std::vector<double> lead_gains = {1.0};
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthRecord {
    wfdb::EcgRecord record; // annotations included
    std::vector<double> beat_times; // seconds, QRS centers
    [[nodiscard]] std::size_t count(char symbol) const;
};

[[nodiscard]] SynthRecord generate(const SynthSpec& spec);

/// Writes `<record_name>.hea/.dat/.atr` into `dir` and returns the header path.
std::filesystem::path write_fixture(const std::filesystem::path& dir, const SynthSpec& spec);

} // namespace upvc::synth
