#include "upvc/wfdb.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace upvc::wfdb {

namespace {

constexpr int kCodeShift = 10;
constexpr std::uint16_t kDataMask = 0x03FF;

constexpr int kSkip = 59;
constexpr int kNum = 60;
constexpr int kSub = 61;
constexpr int kChn = 62;
constexpr int kAux = 63;

// Index = WFDB annotation code (ecgcodes.h); 0 = no mnemonic.
constexpr std::array<char, 50> kSymbols = {
    0,   'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', //  0- 9
    'E', 'j', '/', 'Q', '~', 0,   '|', 0,   's', 'T', // 10-19
    '*', 'D', '"', '=', 'p', 'B', '^', 't', '+', 'u', // 20-29
    '?', '!', '[', ']', 'e', 'n', '@', 'x', 'f', '(', // 30-39
    ')', 'r', 0,   0,   0,   0,   0,   0,   0,   0,   // 40-49
};

std::vector<std::string> split_ws(std::string_view line)
{
    std::vector<std::string> out;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
        out.push_back(tok);
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& value)
{
    if (s.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

int parse_int_or(std::string_view s, std::string_view what)
{
    int v = 0;
    if (!parse_number(s, v)) {
        throw DataError("wfdb header: malformed " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

// "212", "16+512" (byte offset). Sample-multiplicity and skew modifiers are
// outside the supported subset.
void parse_format_field(std::string_view tok, SignalSpec& spec)
{
    std::size_t end = 0;
    while (end < tok.size() && std::isdigit(static_cast<unsigned char>(tok[end]))) {
        ++end;
    }
    int fmt = 0;
    if (!parse_number(tok.substr(0, end), fmt)) {
        throw DataError("wfdb header: malformed format field '" + std::string(tok) + "'");
    }
    if (fmt != kFormat212 && fmt != kFormat16) {
        throw UnsupportedFormat("wfdb: unsupported signal format " + std::to_string(fmt));
    }
    spec.format = fmt;
    std::string_view rest = tok.substr(end);
    if (rest.empty()) {
        return;
    }
    if (rest.front() != '+') {
        throw UnsupportedFormat("wfdb: unsupported format modifier in '" + std::string(tok) + "'");
    }
    std::size_t off = 0;
    if (!parse_number(rest.substr(1), off)) {
        throw DataError("wfdb header: malformed byte offset in '" + std::string(tok) + "'");
    }
    spec.byte_offset = off;
}

// "200", "200(1024)", "200/mV", "200(0)/mV"
void parse_gain_field(std::string_view tok, SignalSpec& spec, bool& has_baseline)
{
    if (auto slash = tok.find('/'); slash != std::string_view::npos) {
        spec.units = std::string(tok.substr(slash + 1));
        tok = tok.substr(0, slash);
    }
    if (auto paren = tok.find('('); paren != std::string_view::npos) {
        auto close = tok.find(')', paren);
        if (close == std::string_view::npos) {
            throw DataError("wfdb header: malformed baseline in gain field");
        }
        spec.baseline = parse_int_or(tok.substr(paren + 1, close - paren - 1), "baseline");
        has_baseline = true;
        tok = tok.substr(0, paren);
    }
    double gain = 0.0;
    if (!parse_number(tok, gain)) {
        throw DataError("wfdb header: malformed gain '" + std::string(tok) + "'");
    }
    spec.gain = gain == 0.0 ? kDefaultGain : gain;
}

std::int32_t sign_extend_12(std::uint32_t v)
{
    v &= 0x0FFFu;
    return (v & 0x0800u) ? static_cast<std::int32_t>(v) - 0x1000 : static_cast<std::int32_t>(v);
}

std::uint16_t read_word(std::span<const std::uint8_t> bytes, std::size_t pos)
{
    return static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
}

void put_word(std::vector<std::uint8_t>& out, std::uint16_t w)
{
    out.push_back(static_cast<std::uint8_t>(w & 0xFF));
    out.push_back(static_cast<std::uint8_t>(w >> 8));
}

std::uint16_t make_word(int code, int value)
{
    return static_cast<std::uint16_t>((code << kCodeShift) | (value & kDataMask));
}

} // namespace

std::string_view to_string(ClassLabel label)
{
    switch (label) {
    case ClassLabel::PVC:
        return "PVC";
    case ClassLabel::NonPVC:
        return "NonPVC";
    case ClassLabel::Unlabeled:
        break;
    }
    return "Unlabeled";
}

RecordHeader parse_header(std::string_view text)
{
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == '#') {
                continue;
            }
            lines.push_back(line);
        }
    }
    if (lines.empty()) {
        throw DataError("wfdb header: empty header");
    }

    RecordHeader h;
    auto rec = split_ws(lines[0]);
    if (rec.size() < 2) {
        throw DataError("wfdb header: malformed record line '" + lines[0] + "'");
    }
    if (rec[0].find('/') != std::string::npos) {
        throw UnsupportedFormat("wfdb: multi-segment records are not supported");
    }
    h.record_name = rec[0];
    if (!parse_number(std::string_view(rec[1]), h.n_signals) || h.n_signals <= 0) {
        throw DataError("wfdb header: malformed signal count '" + rec[1] + "'");
    }
    if (rec.size() < 3) {
        throw DataError("wfdb header: missing sampling frequency");
    }
    {
        std::string_view fs = rec[2];
        fs = fs.substr(0, fs.find_first_of("/("));
        if (!parse_number(fs, h.sampling_frequency) || !(h.sampling_frequency > 0.0)) {
            throw DataError("wfdb header: malformed sampling frequency '" + rec[2] + "'");
        }
    }
    if (rec.size() >= 4 && !parse_number(std::string_view(rec[3]), h.n_samples_per_signal)) {
        throw DataError("wfdb header: malformed sample count '" + rec[3] + "'");
    }

    if (static_cast<int>(lines.size()) - 1 < h.n_signals) {
        throw DataError("wfdb header: expected " + std::to_string(h.n_signals) + " signal lines");
    }
    for (int i = 0; i < h.n_signals; ++i) {
        auto tok = split_ws(lines[1 + i]);
        if (tok.size() < 2) {
            throw DataError("wfdb header: malformed signal line '" + lines[1 + i] + "'");
        }
        SignalSpec s;
        s.file_name = tok[0];
        parse_format_field(tok[1], s);
        bool has_baseline = false;
        if (tok.size() > 2) {
            parse_gain_field(tok[2], s, has_baseline);
        }
        if (tok.size() > 3) {
            s.adc_resolution = parse_int_or(tok[3], "adc resolution");
        }
        if (tok.size() > 4) {
            s.adc_zero = parse_int_or(tok[4], "adc zero");
        }
        if (!has_baseline) {
            s.baseline = s.adc_zero;
        }
        // fields 5..7 (initial value, checksum, block size) are not needed
        for (std::size_t k = 8; k < tok.size(); ++k) {
            if (!s.lead_name.empty()) {
                s.lead_name += ' ';
            }
            s.lead_name += tok[k];
        }
        h.signals.push_back(std::move(s));
    }
    return h;
}

std::string format_header(const RecordHeader& h)
{
    std::ostringstream out;
    out << h.record_name << ' ' << h.n_signals << ' ' << h.sampling_frequency << ' ' << h.n_samples_per_signal << '\n';
    for (const auto& s : h.signals) {
        out << s.file_name << ' ' << s.format;
        if (s.byte_offset) {
            out << '+' << s.byte_offset;
        }
        out << ' ' << s.gain << '(' << s.baseline << ")/" << s.units << ' ' << s.adc_resolution << ' ' << s.adc_zero
            << " 0 0 0";
        if (!s.lead_name.empty()) {
            out << ' ' << s.lead_name;
        }
        out << '\n';
    }
    return out.str();
}

std::vector<std::int32_t> decode_samples(int format, std::span<const std::uint8_t> bytes, std::size_t n_signals,
                                         std::size_t n_samples)
{
    if (n_signals == 0) {
        throw DataError("wfdb: zero signals");
    }
    if (format == kFormat16) {
        const std::size_t frame = 2 * n_signals;
        if (bytes.size() % frame != 0) {
            throw DataError("wfdb: format 16 byte count is not a multiple of the frame size");
        }
        const std::size_t frames = bytes.size() / frame;
        if (n_samples > frames) {
            throw TruncatedFile("wfdb: signal file truncated");
        }
        const std::size_t count = (n_samples ? n_samples : frames) * n_signals;
        std::vector<std::int32_t> out(count);
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = static_cast<std::int16_t>(read_word(bytes, 2 * i));
        }
        return out;
    }
    if (format == kFormat212) {
        // Two 12-bit samples per three bytes. An odd total sample count ends in
        // a two-byte group.
        std::size_t total = 0;
        if (n_samples) {
            total = n_samples * n_signals;
            const std::size_t need = (3 * total + 1) / 2;
            if (bytes.size() < need) {
                throw TruncatedFile("wfdb: signal file truncated");
            }
        } else {
            if (bytes.size() % 3 == 1) {
                throw DataError("wfdb: format 212 byte count is not a multiple of the frame size");
            }
            total = (bytes.size() / 3) * 2 + (bytes.size() % 3 == 2 ? 1 : 0);
            if (total % n_signals != 0) {
                throw DataError("wfdb: format 212 byte count is not a multiple of the frame size");
            }
        }
        std::vector<std::int32_t> out(total);
        for (std::size_t i = 0; i < total; i += 2) {
            const std::size_t b = (i / 2) * 3;
            const std::uint32_t b0 = bytes[b];
            const std::uint32_t b1 = bytes[b + 1];
            out[i] = sign_extend_12(b0 | ((b1 & 0x0Fu) << 8));
            if (i + 1 < total) {
                const std::uint32_t b2 = bytes[b + 2];
                out[i + 1] = sign_extend_12(b2 | ((b1 & 0xF0u) << 4));
            }
        }
        return out;
    }
    throw UnsupportedFormat("wfdb: unsupported signal format " + std::to_string(format));
}

std::vector<std::uint8_t> encode_samples(int format, std::span<const std::int32_t> interleaved)
{
    std::vector<std::uint8_t> out;
    if (format == kFormat16) {
        out.reserve(interleaved.size() * 2);
        for (auto v : interleaved) {
            if (v < -32768 || v > 32767) {
                throw InvalidArgument("wfdb: sample out of range for format 16");
            }
            put_word(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        }
        return out;
    }
    if (format == kFormat212) {
        out.reserve((interleaved.size() * 3 + 1) / 2);
        for (std::size_t i = 0; i < interleaved.size(); i += 2) {
            const std::int32_t a = interleaved[i];
            if (a < -2048 || a > 2047) {
                throw InvalidArgument("wfdb: sample out of range for format 212");
            }
            const std::uint32_t ua = static_cast<std::uint32_t>(a) & 0x0FFFu;
            std::uint32_t ub = 0;
            if (i + 1 < interleaved.size()) {
                const std::int32_t b = interleaved[i + 1];
                if (b < -2048 || b > 2047) {
                    throw InvalidArgument("wfdb: sample out of range for format 212");
                }
                ub = static_cast<std::uint32_t>(b) & 0x0FFFu;
            }
            out.push_back(static_cast<std::uint8_t>(ua & 0xFF));
            out.push_back(static_cast<std::uint8_t>(((ua >> 8) & 0x0F) | ((ub >> 4) & 0xF0)));
            if (i + 1 < interleaved.size()) {
                out.push_back(static_cast<std::uint8_t>(ub & 0xFF));
            }
        }
        return out;
    }
    throw UnsupportedFormat("wfdb: unsupported signal format " + std::to_string(format));
}

EcgRecord read_signals(const RecordHeader& header, std::span<const std::uint8_t> bytes)
{
    if (header.signals.empty() || static_cast<int>(header.signals.size()) != header.n_signals) {
        throw DataError("wfdb: header signal list inconsistent with signal count");
    }
    const int format = header.signals.front().format;
    const std::size_t offset = header.signals.front().byte_offset;
    for (const auto& s : header.signals) {
        if (s.format != format || s.file_name != header.signals.front().file_name) {
            throw UnsupportedFormat("wfdb: read_signals expects all signals in one file with one format");
        }
    }
    if (offset > bytes.size()) {
        throw TruncatedFile("wfdb: byte offset beyond end of signal file");
    }
    const auto nsig = static_cast<std::size_t>(header.n_signals);
    auto digital = decode_samples(format, bytes.subspan(offset), nsig, header.n_samples_per_signal);
    const std::size_t n = digital.size() / nsig;

    EcgRecord rec;
    rec.header = header;
    rec.header.n_samples_per_signal = n;
    rec.signals.assign(nsig, std::vector<double>(n));
    for (std::size_t s = 0; s < nsig; ++s) {
        const double gain = header.signals[s].gain;
        const double base = header.signals[s].baseline;
        auto& dst = rec.signals[s];
        for (std::size_t t = 0; t < n; ++t) {
            dst[t] = (static_cast<double>(digital[t * nsig + s]) - base) / gain;
        }
    }
    return rec;
}

char symbol_for_code(int type_code)
{
    if (type_code < 0 || type_code >= static_cast<int>(kSymbols.size())) {
        return 0;
    }
    return kSymbols[static_cast<std::size_t>(type_code)];
}

int code_for_symbol(char symbol)
{
    if (symbol == 0) {
        return -1;
    }
    for (std::size_t i = 0; i < kSymbols.size(); ++i) {
        if (kSymbols[i] == symbol) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

bool is_beat_symbol(char symbol)
{
    static constexpr std::string_view kBeats = "NLRaVFJASEj/QenfB?r";
    return symbol != 0 && kBeats.find(symbol) != std::string_view::npos;
}

ClassLabel map_beat_label(char symbol)
{
    static constexpr std::string_view kNonPvc = "NLRBAaJSFejnE";
    if (symbol == 'V') {
        return ClassLabel::PVC;
    }
    if (symbol != 0 && kNonPvc.find(symbol) != std::string_view::npos) {
        return ClassLabel::NonPVC;
    }
    return ClassLabel::Unlabeled;
}

std::vector<AnnotationEntry> parse_annotations(std::span<const std::uint8_t> bytes)
{
    std::vector<AnnotationEntry> out;
    std::int64_t sample = 0;
    int chan = 0;
    int num = 0;
    std::size_t pos = 0;
    while (true) {
        if (pos + 2 > bytes.size()) {
            throw DataError("wfdb annotations: missing terminator");
        }
        const std::uint16_t w = read_word(bytes, pos);
        pos += 2;
        const int code = w >> kCodeShift;
        const int value = w & kDataMask;
        if (w == 0) {
            break;
        }
        switch (code) {
        case kSkip: {
            if (pos + 4 > bytes.size()) {
                throw DataError("wfdb annotations: SKIP interval overruns buffer");
            }
            // PDP-11 long: high word first, each word little-endian.
            const std::uint32_t hi = read_word(bytes, pos);
            const std::uint32_t lo = read_word(bytes, pos + 2);
            pos += 4;
            sample += static_cast<std::int32_t>((hi << 16) | lo);
            break;
        }
        case kNum:
            num = value;
            if (!out.empty()) {
                out.back().num = value;
            }
            break;
        case kSub:
            if (!out.empty()) {
                out.back().subtype = value;
            }
            break;
        case kChn:
            chan = value;
            if (!out.empty()) {
                out.back().channel = value;
            }
            break;
        case kAux: {
            const std::size_t padded = static_cast<std::size_t>(value + (value & 1));
            if (pos + padded > bytes.size()) {
                throw DataError("wfdb annotations: AUX length overruns buffer");
            }
            if (!out.empty()) {
                out.back().aux.assign(reinterpret_cast<const char*>(bytes.data() + pos), static_cast<std::size_t>(value));
            }
            pos += padded;
            break;
        }
        default: {
            sample += value;
            AnnotationEntry e;
            e.sample_index = sample;
            e.type_code = code;
            e.symbol = symbol_for_code(code);
            e.channel = chan;
            e.num = num;
            out.push_back(std::move(e));
            break;
        }
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_annotations(std::span<const AnnotationEntry> entries)
{
    std::vector<std::uint8_t> out;
    std::int64_t prev_sample = 0;
    int prev_chan = 0;
    int prev_num = 0;
    for (const auto& e : entries) {
        if (e.type_code <= 0 || e.type_code >= kSkip) {
            throw InvalidArgument("wfdb annotations: type code out of range");
        }
        const std::int64_t delta = e.sample_index - prev_sample;
        int word_delta = static_cast<int>(delta);
        if (delta < 0 || delta > kDataMask) {
            if (delta < INT32_MIN || delta > INT32_MAX) {
                throw InvalidArgument("wfdb annotations: sample increment exceeds 32 bits");
            }
            const auto u = static_cast<std::uint32_t>(static_cast<std::int32_t>(delta));
            put_word(out, make_word(kSkip, 0));
            put_word(out, static_cast<std::uint16_t>(u >> 16));
            put_word(out, static_cast<std::uint16_t>(u & 0xFFFF));
            word_delta = 0;
        }
        put_word(out, make_word(e.type_code, word_delta));
        if (e.subtype != 0) {
            put_word(out, make_word(kSub, e.subtype));
        }
        if (e.channel != prev_chan) {
            put_word(out, make_word(kChn, e.channel));
        }
        if (e.num != prev_num) {
            put_word(out, make_word(kNum, e.num));
        }
        if (!e.aux.empty()) {
            if (e.aux.size() > kDataMask) {
                throw InvalidArgument("wfdb annotations: AUX text too long");
            }
            put_word(out, make_word(kAux, static_cast<int>(e.aux.size())));
            out.insert(out.end(), e.aux.begin(), e.aux.end());
            if (e.aux.size() & 1) {
                out.push_back(0);
            }
        }
        prev_sample = e.sample_index;
        prev_chan = e.channel;
        prev_num = e.num;
    }
    put_word(out, 0);
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

EcgRecord load_record(const std::filesystem::path& header_path, const std::filesystem::path& annotation_path)
{
    const auto text = read_file_bytes(header_path);
    const auto header = parse_header(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
    const auto dir = header_path.parent_path();

    // Group signals by file, preserving header order.
    std::map<std::string, std::vector<int>> groups;
    std::vector<std::string> order;
    for (int i = 0; i < header.n_signals; ++i) {
        const auto& name = header.signals[static_cast<std::size_t>(i)].file_name;
        if (!groups.contains(name)) {
            order.push_back(name);
        }
        groups[name].push_back(i);
    }

    EcgRecord rec;
    rec.header = header;
    rec.signals.resize(static_cast<std::size_t>(header.n_signals));
    std::size_t n = header.n_samples_per_signal;
    for (const auto& file : order) {
        const auto& idx = groups[file];
        RecordHeader sub = header;
        sub.signals.clear();
        for (int i : idx) {
            sub.signals.push_back(header.signals[static_cast<std::size_t>(i)]);
        }
        sub.n_signals = static_cast<int>(idx.size());
        const auto bytes = read_file_bytes(dir / file);
        auto part = read_signals(sub, bytes);
        if (n == 0) {
            n = part.header.n_samples_per_signal;
        }
        if (part.header.n_samples_per_signal != n) {
            throw DataError("wfdb: signal files disagree on sample count in record " + header.record_name);
        }
        for (std::size_t k = 0; k < idx.size(); ++k) {
            rec.signals[static_cast<std::size_t>(idx[k])] = std::move(part.signals[k]);
        }
    }
    rec.header.n_samples_per_signal = n;
    if (!annotation_path.empty()) {
        rec.annotations = parse_annotations(read_file_bytes(annotation_path));
    }
    return rec;
}

void write_record(const std::filesystem::path& dir, const EcgRecord& record, std::string_view annotation_extension)
{
    std::filesystem::create_directories(dir);
    RecordHeader h = record.header;
    const std::string dat = h.record_name + ".dat";
    const auto nsig = static_cast<std::size_t>(h.n_signals);
    const std::size_t n = h.n_samples_per_signal;
    if (record.signals.size() != nsig) {
        throw InvalidArgument("wfdb: record signal count mismatch");
    }
    std::vector<std::int32_t> digital(n * nsig);
    for (std::size_t s = 0; s < nsig; ++s) {
        auto& spec = h.signals[s];
        spec.file_name = dat;
        spec.format = kFormat16;
        spec.byte_offset = 0;
        if (record.signals[s].size() != n) {
            throw InvalidArgument("wfdb: signal length mismatch");
        }
        for (std::size_t t = 0; t < n; ++t) {
            const double adc = std::round(record.signals[s][t] * spec.gain) + spec.baseline;
            digital[t * nsig + s] = static_cast<std::int32_t>(std::clamp(adc, -32768.0, 32767.0));
        }
    }
    const auto hea = format_header(h);
    write_file_bytes(dir / (h.record_name + ".hea"),
                     std::span(reinterpret_cast<const std::uint8_t*>(hea.data()), hea.size()));
    write_file_bytes(dir / dat, encode_samples(kFormat16, digital));
    write_file_bytes(dir / (h.record_name + "." + std::string(annotation_extension)),
                     encode_annotations(record.annotations));
}

} // namespace upvc::wfdb
