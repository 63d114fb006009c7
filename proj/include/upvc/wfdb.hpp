#pragma once

// Reader (and fixture writer) for the PhysioNet WFDB subset used by the
// beat classifier: text headers, format 212 / 16 signal files and MIT
// annotation streams.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "upvc/error.hpp"

namespace upvc::wfdb {

class UnsupportedFormat : public DataError {
public:
    using DataError::DataError;
};

class TruncatedFile : public DataError {
public:
    using DataError::DataError;
};

constexpr int kFormat16 = 16;
constexpr int kFormat212 = 212;
constexpr double kDefaultGain = 200.0; // WFDB DEFGAIN, used when the header gives 0

struct SignalSpec {
    std::string file_name;
    int format = kFormat16;
    std::size_t byte_offset = 0;
    double gain = kDefaultGain; // ADC units per mV
    int baseline = 0;
    int adc_resolution = 0;
    int adc_zero = 0;
    std::string units = "mV";
    std::string lead_name;
};

struct RecordHeader {
    std::string record_name;
    int n_signals = 0;
    double sampling_frequency = 0.0;
    std::size_t n_samples_per_signal = 0;
    std::vector<SignalSpec> signals;
};

struct AnnotationEntry {
    std::int64_t sample_index = 0;
    char symbol = 0;   // 0 when the numeric code has no known mnemonic
    int type_code = 0; // raw 6-bit annotation code
    int channel = 0;
    int subtype = 0;
    int num = 0;
    std::string aux;

    [[nodiscard]] bool known() const { return symbol != 0; }
    bool operator==(const AnnotationEntry&) const = default;
};

enum class ClassLabel { PVC, NonPVC, Unlabeled };

[[nodiscard]] std::string_view to_string(ClassLabel label);

struct EcgRecord {
    RecordHeader header;
    std::vector<std::vector<double>> signals; // per lead, physical units (mV)
    std::vector<AnnotationEntry> annotations;

    [[nodiscard]] double duration_seconds() const
    {
        return static_cast<double>(header.n_samples_per_signal) / header.sampling_frequency;
    }
};

// --- headers -----------------------------------------------------------------

/// Parses a WFDB text header. Rejects a missing sampling frequency rather than
/// defaulting it, and rejects signal formats other than 212 and 16.
[[nodiscard]] RecordHeader parse_header(std::string_view text);
[[nodiscard]] std::string format_header(const RecordHeader& header);

// --- signal files ------------------------------------------------------------

/// Decodes an interleaved signal file into digital samples (frame-major).
/// `n_samples` of zero means "infer from the byte count".
[[nodiscard]] std::vector<std::int32_t> decode_samples(int format, std::span<const std::uint8_t> bytes,
                                                       std::size_t n_signals, std::size_t n_samples);
[[nodiscard]] std::vector<std::uint8_t> encode_samples(int format, std::span<const std::int32_t> interleaved);

/// Demultiplexes one signal file holding every signal of `header` and converts
/// to mV as (adc - baseline) / gain.
[[nodiscard]] EcgRecord read_signals(const RecordHeader& header, std::span<const std::uint8_t> bytes);

// --- annotations -------------------------------------------------------------

[[nodiscard]] std::vector<AnnotationEntry> parse_annotations(std::span<const std::uint8_t> bytes);
[[nodiscard]] std::vector<std::uint8_t> encode_annotations(std::span<const AnnotationEntry> entries);

[[nodiscard]] char symbol_for_code(int type_code);
[[nodiscard]] int code_for_symbol(char symbol); // -1 when unknown

/// True for annotation symbols that mark a heartbeat (WFDB isqrs set).
[[nodiscard]] bool is_beat_symbol(char symbol);

/// Two-class mapping: 'V' is PVC, the supraventricular / normal / fusion /
/// escape codes are NonPVC, everything else is Unlabeled.
[[nodiscard]] ClassLabel map_beat_label(char symbol);

// --- files -------------------------------------------------------------------

[[nodiscard]] std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Loads `<record>.hea` plus its signal files (resolved next to the header).
/// `annotation_path` may be empty, in which case no annotations are read.
[[nodiscard]] EcgRecord load_record(const std::filesystem::path& header_path,
                                    const std::filesystem::path& annotation_path);

/// Writes header, one format-16 signal file and an annotation file. Physical
/// samples are quantized with each signal's gain and baseline.
void write_record(const std::filesystem::path& dir, const EcgRecord& record, std::string_view annotation_extension = "atr");

} // namespace upvc::wfdb
