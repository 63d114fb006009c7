#pragma once

// Beat-window spectral feature: 200 Hz resampling, 8 s window around the
// annotation, centered STFT, triangular mel filterbank restricted to a band,
// log10 and per-example standardization.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace upvc::dsp {

constexpr double kTargetFs = 200.0;
constexpr double kLogEpsilon = 1e-10;
constexpr double kStdEpsilon = 1e-8;

struct TimeSeries {
    std::vector<double> samples;
    double fs = kTargetFs;
};

/// Polyphase windowed-sinc resampler (Kaiser beta 8, 32 taps per phase,
/// cutoff at 0.95 of the lower Nyquist frequency). Coefficient tables are
/// built once per rate pair; the object is immutable afterwards.
class Resampler {
public:
    Resampler(double fs_in, double fs_out);

    [[nodiscard]] std::vector<double> operator()(std::span<const double> x) const;
    [[nodiscard]] std::size_t output_length(std::size_t n_in) const;

    static constexpr int kTaps = 32;
    static constexpr double kBeta = 8.0;
    static constexpr double kCutoffFraction = 0.95;

private:
    double fs_in_;
    double fs_out_;
    std::int64_t up_ = 1;   // output rate numerator (L)
    std::int64_t down_ = 1; // input rate numerator (M)
    std::vector<double> table_; // up_ phases x kTaps
};

/// Resamples to `target_fs`; an input already at the target rate is returned unchanged.
[[nodiscard]] TimeSeries resample(const TimeSeries& ts, double target_fs = kTargetFs);

/// round(idx * fs_out / fs_in)
[[nodiscard]] std::int64_t map_annotation_index(std::int64_t idx, double fs_in, double fs_out = kTargetFs);

struct FeatureParams {
    double fs = kTargetFs;
    std::size_t window = 1600;
    std::size_t n_fft = 256;
    std::size_t hop = 128;
    std::size_t n_filters = 48;
    double f_min = 0.5;
    double f_max = 40.0;

    [[nodiscard]] std::size_t n_bins() const { return n_fft / 2 + 1; }
    [[nodiscard]] std::size_t n_frames() const { return window / hop + 1; }
    [[nodiscard]] std::size_t n_kept_frames() const { return n_frames() - 2; }
    [[nodiscard]] std::size_t feature_size() const { return n_filters * n_kept_frames(); }
    bool operator==(const FeatureParams&) const = default;
};

/// Samples [center - window/2, center + window/2), zero outside the record.
[[nodiscard]] std::vector<double> extract_window(std::span<const double> ts200, std::int64_t center,
                                                 std::size_t length = 1600);

[[nodiscard]] double hz_to_mel(double hz);
[[nodiscard]] double mel_to_hz(double mel);

class Filterbank {
public:
    Filterbank(std::size_t n_filters, std::size_t n_bins, double f_min, double f_max, std::vector<double> weights);

    [[nodiscard]] std::size_t n_filters() const { return n_filters_; }
    [[nodiscard]] std::size_t n_bins() const { return n_bins_; }
    [[nodiscard]] double f_min() const { return f_min_; }
    [[nodiscard]] double f_max() const { return f_max_; }
    [[nodiscard]] double weight(std::size_t filter, std::size_t bin) const { return weights_[filter * n_bins_ + bin]; }
    [[nodiscard]] std::span<const double> row(std::size_t filter) const
    {
        return {weights_.data() + filter * n_bins_, n_bins_};
    }

private:
    std::size_t n_filters_;
    std::size_t n_bins_;
    double f_min_;
    double f_max_;
    std::vector<double> weights_; // row-major n_filters x n_bins
};

/// Triangular filters over mel-spaced (HTK) edges between f_min and f_max,
/// evaluated at the FFT bin frequencies k * fs / n_fft. Unnormalized.
[[nodiscard]] Filterbank build_filterbank(std::size_t n_filters = 48, double f_min = 0.5, double f_max = 40.0,
                                          std::size_t n_fft = 256, double fs = kTargetFs);

/// Radix-2 complex FFT plan. Immutable after construction.
class Fft {
public:
    explicit Fft(std::size_t n);
    void transform(std::span<std::complex<double>> data) const;
    [[nodiscard]] std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::vector<std::size_t> bitrev_;
    std::vector<std::complex<double>> twiddle_;
};

/// Power spectrogram, row-major n_bins x n_frames.
struct Spectrogram {
    std::size_t n_bins = 0;
    std::size_t n_frames = 0;
    std::vector<double> power;

    [[nodiscard]] double at(std::size_t bin, std::size_t frame) const { return power[bin * n_frames + frame]; }
};

/// Standardized log filterbank energies, row-major filter x kept frame.
struct SpectralFeature {
    std::size_t n_filters = 0;
    std::size_t n_frames = 0;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t filter, std::size_t frame) const { return values[filter * n_frames + frame]; }
    bool operator==(const SpectralFeature&) const = default;
};

/// Holds everything needed to featurize windows: filterbank, FFT plan and
/// Hann window. Shareable across threads.
class FeatureExtractor {
public:
    explicit FeatureExtractor(const FeatureParams& params = {});

    [[nodiscard]] const FeatureParams& params() const { return params_; }
    [[nodiscard]] const Filterbank& filterbank() const { return filterbank_; }

    /// Centered STFT with reflect padding of n_fft/2 and a periodic Hann window.
    [[nodiscard]] Spectrogram power_spectrogram(std::span<const double> window) const;

    /// Filterbank projection with the first and last frame dropped (before the log).
    [[nodiscard]] std::vector<double> filterbank_energy(std::span<const double> window) const;

    [[nodiscard]] SpectralFeature featurize(std::span<const double> window) const;

    /// Writes the standardized feature into `out` (size feature_size()).
    void featurize_into(std::span<const double> window, std::span<double> out) const;

private:
    FeatureParams params_;
    Filterbank filterbank_;
    Fft fft_;
    std::vector<double> hann_;
};

[[nodiscard]] Spectrogram power_spectrogram(std::span<const double> window, std::size_t n_fft = 256,
                                            std::size_t hop = 128);

/// Featurizes with a caller-supplied filterbank; n_fft is inferred from its bin count.
[[nodiscard]] SpectralFeature featurize(std::span<const double> window, const Filterbank& fb);

/// log10(M + eps), then (L - mean) / (std + eps) over all elements, in place.
void log_standardize(std::span<double> values);

struct FeatureDumpEntry {
    std::string dataset;
    std::string record;
    std::size_t lead = 0;
    std::int64_t beat_index = 0;
};

/// Dense little-endian float64 tensor `<stem>.bin` plus `<stem>.json` sidecar.
void write_feature_dump(const std::filesystem::path& stem, std::span<const SpectralFeature> features,
                        std::span<const FeatureDumpEntry> entries);

} // namespace upvc::dsp
