#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "upvc/dsp.hpp"
#include "upvc/error.hpp"
#include "upvc/synthgen.hpp"
#include "upvc/wfdb.hpp"

using namespace upvc;
using namespace upvc::synth;

TEST_CASE("no PVCs when the fraction is zero")
{
    SynthSpec s;
    s.pvc_fraction = 0.0;
    const auto r = generate(s);
    CHECK(r.count('V') == 0);
    CHECK(r.count('N') == r.record.annotations.size());
    CHECK(!r.record.annotations.empty());
}

TEST_CASE("seeded PVC count is frozen")
{
    SynthSpec s;
    s.pvc_fraction = 0.5;
    s.heart_rate = 60.0;
    s.duration = 200.0;
    s.seed = 2024;
    const auto r = generate(s);
    const auto beats = r.record.annotations.size();
    CHECK(beats >= 195);
    CHECK(beats <= 215);
    const auto v = r.count('V');
    CHECK(beats == 200);
    CHECK(v == 94);
    CHECK(generate(s).count('V') == v);
}

TEST_CASE("same spec gives bit-identical records")
{
    SynthSpec s;
    s.noise_std = 0.05;
    s.highband_noise_std = 0.02;
    s.baseline_wander = 0.1;
    s.lead_gains = {1.0, -0.5};
    const auto a = generate(s);
    const auto b = generate(s);
    CHECK(a.record.signals == b.record.signals);
    CHECK(a.record.annotations == b.record.annotations);
    s.seed = 2;
    CHECK(generate(s).record.signals != a.record.signals);
}

TEST_CASE("annotations sit on the QRS maxima")
{
    SynthSpec s;
    s.noise_std = 0.0;
    s.duration = 30.0;
    const auto r = generate(s);
    const auto& x = r.record.signals[0];
    const auto radius = static_cast<std::int64_t>(0.1 * s.fs);
    const double tol = 0.020 * s.fs;
    for (const auto& a : r.record.annotations) {
        const auto lo = std::max<std::int64_t>(0, a.sample_index - radius);
        const auto hi = std::min<std::int64_t>(static_cast<std::int64_t>(x.size()) - 1, a.sample_index + radius);
        std::int64_t best = lo;
        for (auto i = lo; i <= hi; ++i) {
            if (x[static_cast<std::size_t>(i)] > x[static_cast<std::size_t>(best)]) {
                best = i;
            }
        }
        CHECK(std::abs(static_cast<double>(best - a.sample_index)) <= tol);
    }
}

TEST_CASE("PVC windows spread more energy over 5-15 Hz")
{
    SynthSpec s;
    s.noise_std = 0.0;
    s.fs = 200.0;
    s.duration = 60.0;
    const auto r = generate(s);
    const auto& x = r.record.signals[0];
    auto band_energy = [&](std::int64_t c) {
        const auto w = dsp::extract_window(x, c, 256);
        const auto sp = dsp::power_spectrogram(w, 256, 128);
        double e = 0.0;
        for (std::size_t k = 7; k <= 19; ++k) { // 5.5 .. 14.8 Hz
            e += sp.at(k, 1);
        }
        return e;
    };
    double normal = 0.0;
    double pvc = 0.0;
    std::size_t nn = 0;
    std::size_t nv = 0;
    for (const auto& a : r.record.annotations) {
        if (a.sample_index < 200 || a.sample_index + 200 > static_cast<std::int64_t>(x.size())) {
            continue;
        }
        if (a.symbol == 'V') {
            pvc += band_energy(a.sample_index);
            ++nv;
        } else {
            normal += band_energy(a.sample_index);
            ++nn;
        }
    }
    REQUIRE(nv > 0);
    REQUIRE(nn > 0);
    CHECK(pvc / static_cast<double>(nv) > normal / static_cast<double>(nn));
}

TEST_CASE("invalid specs are rejected")
{
    SynthSpec s;
    s.pvc_fraction = 1.5;
    CHECK_THROWS((void)generate(s));
    s = {};
    s.qrs_width_pvc = 50.0;
    CHECK_THROWS((void)generate(s));
    s = {};
    s.fs = 50.0;
    CHECK_THROWS((void)generate(s));
}

TEST_CASE("fixtures read back through the WFDB reader")
{
    fixtures::TempDir tmp("synth");
    SynthSpec s;
    s.record_name = "fx";
    s.fs = 257.0;
    s.duration = 20.0;
    s.lead_gains = {1.0, 0.5};
    const auto hea = write_fixture(tmp.path(), s);
    const auto back = wfdb::load_record(hea, tmp.path() / "fx.atr");
    const auto orig = generate(s);
    CHECK(back.header.sampling_frequency == 257.0);
    CHECK(back.header.n_signals == 2);
    CHECK(back.annotations == orig.record.annotations);
    REQUIRE(back.signals[0].size() == orig.record.signals[0].size());
    double worst = 0.0;
    for (std::size_t i = 0; i < back.signals[0].size(); ++i) {
        worst = std::max(worst, std::abs(back.signals[0][i] - orig.record.signals[0][i]));
    }
    CHECK(worst <= 0.5 / back.header.signals[0].gain + 1e-12);
}
