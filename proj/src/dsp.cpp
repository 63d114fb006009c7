#include "upvc/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "upvc/error.hpp"

namespace upvc::dsp {

namespace {

bool near_integer(double x)
{
    return std::abs(x - std::round(x)) < 1e-9;
}

double sinc(double x)
{
    if (x == 0.0) {
        return 1.0;
    }
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

} // namespace

// --- resampling --------------------------------------------------------------

Resampler::Resampler(double fs_in, double fs_out) : fs_in_(fs_in), fs_out_(fs_out)
{
    if (!(fs_in > 0.0) || !(fs_out > 0.0)) {
        throw InvalidArgument("resample: sampling rates must be positive");
    }
    double scale = 1.0;
    if (!near_integer(fs_in) || !near_integer(fs_out)) {
        scale = 1000.0;
    }
    const auto a = static_cast<std::int64_t>(std::llround(fs_in * scale));
    const auto b = static_cast<std::int64_t>(std::llround(fs_out * scale));
    const auto g = std::gcd(a, b);
    down_ = a / g;
    up_ = b / g;
    if (up_ > (1 << 16)) {
        throw InvalidArgument("resample: rate ratio needs too many polyphase branches");
    }

    const double fc = kCutoffFraction * 0.5 * std::min(fs_in, fs_out) / fs_in; // cycles per input sample
    const double half = kTaps / 2.0;
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
    table_.assign(static_cast<std::size_t>(up_) * kTaps, 0.0);
    for (std::int64_t p = 0; p < up_; ++p) {
        const double frac = static_cast<double>(p) / static_cast<double>(up_);
        double* taps = table_.data() + p * kTaps;
        double sum = 0.0;
        for (int k = 0; k < kTaps; ++k) {
            const double tau = static_cast<double>(k - (kTaps / 2 - 1)) - frac;
            const double r = tau / half;
            const double w = std::abs(r) <= 1.0 ? std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / i0_beta : 0.0;
            taps[k] = 2.0 * fc * sinc(2.0 * fc * tau) * w;
            sum += taps[k];
        }
        for (int k = 0; k < kTaps; ++k) {
            taps[k] /= sum;
        }
    }
}

std::size_t Resampler::output_length(std::size_t n_in) const
{
    const auto n = static_cast<std::int64_t>(n_in);
    return static_cast<std::size_t>((2 * n * up_ + down_) / (2 * down_));
}

std::vector<double> Resampler::operator()(std::span<const double> x) const
{
    if (x.empty()) {
        throw InvalidArgument("resample: empty input");
    }
    const std::size_t n_out = output_length(x.size());
    const auto n_in = static_cast<std::int64_t>(x.size());
    std::vector<double> y(n_out, 0.0);
    for (std::size_t n = 0; n < n_out; ++n) {
        const std::int64_t pos = static_cast<std::int64_t>(n) * down_;
        const std::int64_t base = pos / up_;
        const std::int64_t phase = pos % up_;
        const double* taps = table_.data() + phase * kTaps;
        const std::int64_t first = base - (kTaps / 2 - 1);
        double acc = 0.0;
        if (first >= 0 && first + kTaps <= n_in) {
            const double* src = x.data() + first;
            for (int k = 0; k < kTaps; ++k) {
                acc += taps[k] * src[k];
            }
        } else {
            for (int k = 0; k < kTaps; ++k) {
                const std::int64_t i = first + k;
                if (i >= 0 && i < n_in) {
                    acc += taps[k] * x[static_cast<std::size_t>(i)];
                }
            }
        }
        y[n] = acc;
    }
    return y;
}

TimeSeries resample(const TimeSeries& ts, double target_fs)
{
    if (ts.samples.empty()) {
        throw InvalidArgument("resample: empty input");
    }
    if (!(target_fs > 0.0)) {
        throw InvalidArgument("resample: target rate must be positive");
    }
    if (ts.fs == target_fs) {
        return ts;
    }
    return {Resampler(ts.fs, target_fs)(ts.samples), target_fs};
}

std::int64_t map_annotation_index(std::int64_t idx, double fs_in, double fs_out)
{
    return static_cast<std::int64_t>(std::llround(static_cast<double>(idx) * fs_out / fs_in));
}

std::vector<double> extract_window(std::span<const double> ts200, std::int64_t center, std::size_t length)
{
    std::vector<double> w(length, 0.0);
    const std::int64_t start = center - static_cast<std::int64_t>(length / 2);
    const auto n = static_cast<std::int64_t>(ts200.size());
    for (std::size_t i = 0; i < length; ++i) {
        const std::int64_t j = start + static_cast<std::int64_t>(i);
        if (j >= 0 && j < n) {
            w[i] = ts200[static_cast<std::size_t>(j)];
        }
    }
    return w;
}

// --- filterbank --------------------------------------------------------------

double hz_to_mel(double hz)
{
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel)
{
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Filterbank::Filterbank(std::size_t n_filters, std::size_t n_bins, double f_min, double f_max,
                       std::vector<double> weights)
    : n_filters_(n_filters), n_bins_(n_bins), f_min_(f_min), f_max_(f_max), weights_(std::move(weights))
{
    if (weights_.size() != n_filters_ * n_bins_) {
        throw InvalidArgument("filterbank: weight matrix has the wrong size");
    }
}

Filterbank build_filterbank(std::size_t n_filters, double f_min, double f_max, std::size_t n_fft, double fs)
{
    if (!(f_min >= 0.0) || !(f_min < f_max) || !(f_max <= fs / 2.0)) {
        throw InvalidArgument("filterbank: require 0 <= f_min < f_max <= fs/2");
    }
    if (n_filters == 0 || n_fft < 2) {
        throw InvalidArgument("filterbank: need at least one filter and n_fft >= 2");
    }
    const std::size_t n_bins = n_fft / 2 + 1;
    const double m_lo = hz_to_mel(f_min);
    const double m_hi = hz_to_mel(f_max);
    std::vector<double> edges(n_filters + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1));
    }
    std::vector<double> w(n_filters * n_bins, 0.0);
    for (std::size_t i = 0; i < n_filters; ++i) {
        const double lo = edges[i];
        const double mid = edges[i + 1];
        const double hi = edges[i + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * fs / static_cast<double>(n_fft);
            const double rise = (f - lo) / (mid - lo);
            const double fall = (hi - f) / (hi - mid);
            w[i * n_bins + k] = std::max(0.0, std::min(rise, fall));
        }
    }
    return Filterbank(n_filters, n_bins, f_min, f_max, std::move(w));
}

// --- FFT ---------------------------------------------------------------------

Fft::Fft(std::size_t n) : n_(n)
{
    if (n < 2 || !std::has_single_bit(n)) {
        throw InvalidArgument("fft: size must be a power of two");
    }
    const int bits = std::countr_zero(n);
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (int b = 0; b < bits; ++b) {
            r |= ((i >> b) & 1u) << (bits - 1 - b);
        }
        bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = {std::cos(a), std::sin(a)};
    }
}

void Fft::transform(std::span<std::complex<double>> data) const
{
    if (data.size() != n_) {
        throw InvalidArgument("fft: buffer size mismatch");
    }
    for (std::size_t i = 0; i < n_; ++i) {
        if (i < bitrev_[i]) {
            std::swap(data[i], data[bitrev_[i]]);
        }
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n_ / len;
        for (std::size_t start = 0; start < n_; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const auto t = twiddle_[j * stride] * data[start + j + half];
                data[start + j + half] = data[start + j] - t;
                data[start + j] += t;
            }
        }
    }
}

// --- features ----------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const FeatureParams& params)
    : params_(params),
      filterbank_(build_filterbank(params.n_filters, params.f_min, params.f_max, params.n_fft, params.fs)),
      fft_(params.n_fft),
      hann_(params.n_fft)
{
    if (params.hop == 0 || params.window < params.n_fft / 2 + 1 || params.n_frames() < 3) {
        throw InvalidArgument("feature params: window too short for the STFT layout");
    }
    for (std::size_t i = 0; i < params.n_fft; ++i) {
        hann_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(params.n_fft));
    }
}

Spectrogram FeatureExtractor::power_spectrogram(std::span<const double> window) const
{
    const std::size_t n = params_.window;
    if (window.size() != n) {
        throw InvalidArgument("power_spectrogram: window length mismatch");
    }
    const std::size_t n_fft = params_.n_fft;
    const std::size_t pad = n_fft / 2;
    const std::size_t n_bins = params_.n_bins();
    const std::size_t n_frames = params_.n_frames();

    // reflect padding (edge sample not repeated)
    auto padded_at = [&](std::size_t i) -> double {
        if (i < pad) {
            return window[pad - i];
        }
        if (i < pad + n) {
            return window[i - pad];
        }
        return window[n - 2 - (i - pad - n)];
    };

    Spectrogram s{n_bins, n_frames, std::vector<double>(n_bins * n_frames)};
    std::vector<std::complex<double>> buf(n_fft);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const std::size_t start = t * params_.hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            buf[i] = {padded_at(start + i) * hann_[i], 0.0};
        }
        fft_.transform(buf);
        for (std::size_t k = 0; k < n_bins; ++k) {
            s.power[k * n_frames + t] = std::norm(buf[k]);
        }
    }
    return s;
}

std::vector<double> FeatureExtractor::filterbank_energy(std::span<const double> window) const
{
    const auto spec = power_spectrogram(window);
    const std::size_t kept = params_.n_kept_frames();
    const std::size_t n_bins = spec.n_bins;
    std::vector<double> m(filterbank_.n_filters() * kept, 0.0);
    for (std::size_t f = 0; f < filterbank_.n_filters(); ++f) {
        const auto row = filterbank_.row(f);
        for (std::size_t t = 0; t < kept; ++t) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) {
                acc += row[k] * spec.power[k * spec.n_frames + t + 1];
            }
            m[f * kept + t] = acc;
        }
    }
    return m;
}

void log_standardize(std::span<double> values)
{
    if (values.empty()) {
        return;
    }
    for (auto& v : values) {
        v = std::log10(v + kLogEpsilon);
    }
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(var / n);
    for (auto& v : values) {
        v = (v - mean) / (sd + kStdEpsilon);
    }
}

void FeatureExtractor::featurize_into(std::span<const double> window, std::span<double> out) const
{
    auto m = filterbank_energy(window);
    if (out.size() != m.size()) {
        throw InvalidArgument("featurize: output buffer size mismatch");
    }
    log_standardize(m);
    std::copy(m.begin(), m.end(), out.begin());
}

SpectralFeature FeatureExtractor::featurize(std::span<const double> window) const
{
    SpectralFeature f{filterbank_.n_filters(), params_.n_kept_frames(), std::vector<double>(params_.feature_size())};
    featurize_into(window, f.values);
    return f;
}

Spectrogram power_spectrogram(std::span<const double> window, std::size_t n_fft, std::size_t hop)
{
    FeatureParams p;
    p.window = window.size();
    p.n_fft = n_fft;
    p.hop = hop;
    return FeatureExtractor(p).power_spectrogram(window);
}

SpectralFeature featurize(std::span<const double> window, const Filterbank& fb)
{
    FeatureParams p;
    p.window = window.size();
    p.n_fft = (fb.n_bins() - 1) * 2;
    p.hop = p.n_fft / 2;
    p.n_filters = fb.n_filters();
    p.f_min = fb.f_min();
    p.f_max = fb.f_max();
    FeatureExtractor fx(p);
    // Honour the caller's weights even if they were not produced by build_filterbank.
    auto spec = fx.power_spectrogram(window);
    const std::size_t kept = p.n_kept_frames();
    SpectralFeature out{fb.n_filters(), kept, std::vector<double>(fb.n_filters() * kept, 0.0)};
    for (std::size_t f = 0; f < fb.n_filters(); ++f) {
        for (std::size_t t = 0; t < kept; ++t) {
            double acc = 0.0;
            for (std::size_t k = 0; k < fb.n_bins(); ++k) {
                acc += fb.weight(f, k) * spec.at(k, t + 1);
            }
            out.values[f * kept + t] = acc;
        }
    }
    log_standardize(out.values);
    return out;
}

void write_feature_dump(const std::filesystem::path& stem, std::span<const SpectralFeature> features,
                        std::span<const FeatureDumpEntry> entries)
{
    if (features.size() != entries.size()) {
        throw InvalidArgument("feature dump: features and entries differ in length");
    }
    auto bin_path = stem;
    bin_path += ".bin";
    auto json_path = stem;
    json_path += ".json";

    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) {
        throw DataError("cannot write '" + bin_path.string() + "'");
    }
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const auto& f : features) {
        if (rows == 0) {
            rows = f.n_filters;
            cols = f.n_frames;
        } else if (f.n_filters != rows || f.n_frames != cols) {
            throw InvalidArgument("feature dump: mixed feature shapes");
        }
        for (double v : f.values) {
            auto u = std::bit_cast<std::uint64_t>(v);
            char b[8];
            for (int i = 0; i < 8; ++i) {
                b[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
            }
            bin.write(b, 8);
        }
    }

    nlohmann::json meta;
    meta["dtype"] = "float64-le";
    meta["shape"] = {features.size(), rows, cols};
    meta["layout"] = "example, filter, frame";
    auto& list = meta["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        list.push_back({{"dataset", e.dataset}, {"record", e.record}, {"lead", e.lead}, {"beat_index", e.beat_index}});
    }
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) {
        throw DataError("cannot write '" + json_path.string() + "'");
    }
    js << meta.dump(2) << '\n';
}

} // namespace upvc::dsp
