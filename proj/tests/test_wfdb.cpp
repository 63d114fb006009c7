#include <doctest.h>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "upvc/error.hpp"
#include "upvc/wfdb.hpp"

using namespace upvc;
using namespace upvc::wfdb;

namespace {

using Bytes = std::vector<std::uint8_t>;

void word(Bytes& b, int code, int delta)
{
    const auto w = static_cast<std::uint16_t>((code << 10) | delta);
    b.push_back(static_cast<std::uint8_t>(w & 0xFF));
    b.push_back(static_cast<std::uint8_t>(w >> 8));
}

} // namespace

TEST_CASE("header: two-signal 212 record")
{
    const auto h = parse_header("100 2 360 650000\n"
                                "100.dat 212 200 11 1024 995 -22131 0 MLII\n"
                                "100.dat 212 200 11 1024 1011 20052 0 V5\n");
    CHECK(h.record_name == "100");
    CHECK(h.n_signals == 2);
    CHECK(h.sampling_frequency == 360.0);
    CHECK(h.n_samples_per_signal == 650000);
    REQUIRE(h.signals.size() == 2);
    CHECK(h.signals[0].format == 212);
    CHECK(h.signals[0].gain == 200.0);
    CHECK(h.signals[0].baseline == 1024); // defaults to adc_zero
    CHECK(h.signals[0].lead_name == "MLII");
    CHECK(h.signals[1].lead_name == "V5");
}

TEST_CASE("header: single-signal format 16 at 250 Hz")
{
    const auto h = parse_header("# comment\nrec 1 250 1000\nrec.dat 16 1000(5)/mV 16 0 0 0 0 ECG\n");
    CHECK(h.n_signals == 1);
    CHECK(h.sampling_frequency == 250.0);
    CHECK(h.signals[0].format == 16);
    CHECK(h.signals[0].gain == 1000.0);
    CHECK(h.signals[0].baseline == 5);
    CHECK(h.signals[0].units == "mV");
}

TEST_CASE("header: errors")
{
    CHECK_THROWS_AS((void)parse_header("r 1 360 10\nr.dat 80\n"), UnsupportedFormat);
    CHECK_THROWS_AS((void)parse_header("r 1\nr.dat 16\n"), DataError);
    CHECK_THROWS_AS((void)parse_header("r x 360\n"), DataError);
    CHECK_THROWS_AS((void)parse_header("r 2 360 10\nr.dat 16\n"), DataError);
    CHECK_THROWS_AS((void)parse_header(""), DataError);
}

TEST_CASE("header: zero gain means the default gain")
{
    const auto h = parse_header("r 1 360 10\nr.dat 16 0 12 0\n");
    CHECK(h.signals[0].gain == kDefaultGain);
}

TEST_CASE("header: format round trip")
{
    const auto h = parse_header("r 2 257 20\nr.dat 16 1000(3)/mV 16 3 0 0 0 I\nr.dat 16 500(-2)/mV 16 -2 0 0 0 II\n");
    const auto again = parse_header(format_header(h));
    CHECK(again.record_name == h.record_name);
    CHECK(again.sampling_frequency == h.sampling_frequency);
    CHECK(again.n_samples_per_signal == h.n_samples_per_signal);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(again.signals[i].gain == h.signals[i].gain);
        CHECK(again.signals[i].baseline == h.signals[i].baseline);
        CHECK(again.signals[i].lead_name == h.signals[i].lead_name);
    }
}

TEST_CASE("format 212: packed pair")
{
    const Bytes b{0xE8, 0x03, 0x7D};
    const auto s = decode_samples(212, b, 2, 1);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == 1000);
    CHECK(s[1] == 125);
}

TEST_CASE("format 212: sign extension over the whole 12-bit range")
{
    for (int v = 0; v < 4096; ++v) {
        // low sample holds v: b0 = low byte, low nibble of b1 = high nibble
        const Bytes b{static_cast<std::uint8_t>(v & 0xFF), static_cast<std::uint8_t>((v >> 8) & 0x0F), 0};
        const auto s = decode_samples(212, b, 2, 1);
        const int expected = v >= 2048 ? v - 4096 : v;
        REQUIRE(s[0] == expected);
    }
    const Bytes b{0x00, 0x08, 0x00};
    CHECK(decode_samples(212, b, 2, 1)[0] == -2048);
}

TEST_CASE("format 16: little-endian two's complement")
{
    const Bytes b{0xFF, 0xFF, 0x00, 0x80, 0x34, 0x12};
    const auto s = decode_samples(16, b, 1, 3);
    CHECK(s == std::vector<std::int32_t>{-1, -32768, 0x1234});
}

TEST_CASE("signal files: truncation and frame-size errors")
{
    CHECK_THROWS_AS((void)decode_samples(16, Bytes{0x01, 0x02, 0x03}, 1, 0), DataError);
    CHECK_THROWS_AS((void)decode_samples(16, Bytes{0x01, 0x02, 0x03, 0x04}, 1, 3), TruncatedFile);
    CHECK_THROWS_AS((void)decode_samples(16, Bytes{0x01, 0x02, 0x03, 0x04, 0x05, 0x06}, 2, 0), DataError);
    CHECK_THROWS_AS((void)decode_samples(212, Bytes{0x01, 0x02}, 2, 1), TruncatedFile);
    CHECK_THROWS_AS((void)decode_samples(8, Bytes{0x01}, 1, 1), UnsupportedFormat);
}

TEST_CASE("signal files: encode/decode round trips byte-identically")
{
    std::mt19937_64 gen(5);
    for (const std::size_t n : {2u, 10u, 101u, 1000u}) {
        std::vector<std::int32_t> v212(n);
        std::vector<std::int32_t> v16(n);
        for (std::size_t i = 0; i < n; ++i) {
            v212[i] = static_cast<std::int32_t>(gen() % 4096) - 2048;
            v16[i] = static_cast<std::int32_t>(gen() % 65536) - 32768;
        }
        const auto b212 = encode_samples(212, v212);
        CHECK(b212.size() == (3 * n + 1) / 2);
        CHECK(decode_samples(212, b212, 1, n) == v212);
        CHECK(encode_samples(212, decode_samples(212, b212, 1, n)) == b212);
        const auto b16 = encode_samples(16, v16);
        CHECK(encode_samples(16, decode_samples(16, b16, 1, n)) == b16);
    }
    // raw crafted bytes survive decode -> encode
    Bytes crafted(300);
    for (auto& b : crafted) {
        b = static_cast<std::uint8_t>(gen());
    }
    CHECK(encode_samples(212, decode_samples(212, crafted, 2, 100)) == crafted);
    CHECK(encode_samples(16, decode_samples(16, crafted, 2, 75)) == crafted);
}

TEST_CASE("read_signals converts to physical units per lead")
{
    auto h = parse_header("r 2 360 3\nr.dat 16 200(1024)/mV 16 0 0 0 0 A\nr.dat 16 100(0)/mV 16 0 0 0 0 B\n");
    const std::vector<std::int32_t> adc{1024, 0, 1224, 50, 824, -100};
    const auto rec = read_signals(h, encode_samples(16, adc));
    REQUIRE(rec.signals.size() == 2);
    CHECK(rec.signals[0] == std::vector<double>{0.0, 1.0, -1.0});
    CHECK(rec.signals[1] == std::vector<double>{0.0, 0.5, -1.0});
    CHECK(rec.signals[0].size() == h.n_samples_per_signal);
}

TEST_CASE("annotations: beat words and cumulative sample indices")
{
    Bytes b;
    word(b, 1, 18);
    word(b, 5, 200);
    word(b, 0, 0);
    const auto a = parse_annotations(b);
    REQUIRE(a.size() == 2);
    CHECK(a[0].sample_index == 18);
    CHECK(a[0].symbol == 'N');
    CHECK(a[1].sample_index == 218);
    CHECK(a[1].symbol == 'V');
}

TEST_CASE("annotations: terminator only")
{
    CHECK(parse_annotations(Bytes{0x00, 0x00}).empty());
}

TEST_CASE("annotations: CHN before a beat sets its channel")
{
    Bytes b;
    word(b, 62, 1);
    word(b, 1, 10);
    word(b, 1, 10);
    word(b, 0, 0);
    const auto a = parse_annotations(b);
    REQUIRE(a.size() == 2);
    CHECK(a[0].channel == 1);
    CHECK(a[1].channel == 1);
}

TEST_CASE("annotations: SKIP, SUB, NUM and AUX")
{
    Bytes b;
    word(b, 59, 0); // SKIP 100000 as PDP-11 long
    const std::uint32_t skip = 100000;
    for (const std::uint16_t w : {static_cast<std::uint16_t>(skip >> 16), static_cast<std::uint16_t>(skip & 0xFFFF)}) {
        b.push_back(static_cast<std::uint8_t>(w & 0xFF));
        b.push_back(static_cast<std::uint8_t>(w >> 8));
    }
    word(b, 28, 0); // '+' rhythm change at 100000
    word(b, 63, 3); // AUX "(AB" padded
    b.insert(b.end(), {'(', 'A', 'B', 0});
    word(b, 5, 7);
    word(b, 61, 2);
    word(b, 60, 4);
    word(b, 0, 0);
    const auto a = parse_annotations(b);
    REQUIRE(a.size() == 2);
    CHECK(a[0].sample_index == 100000);
    CHECK(a[0].symbol == '+');
    CHECK(a[0].aux == "(AB");
    CHECK(a[1].sample_index == 100007);
    CHECK(a[1].subtype == 2);
    CHECK(a[1].num == 4);
    CHECK(encode_annotations(a) == b);
}

TEST_CASE("annotations: errors")
{
    Bytes b;
    word(b, 1, 5);
    CHECK_THROWS_AS((void)parse_annotations(b), DataError);
    Bytes aux;
    word(aux, 1, 5);
    word(aux, 63, 10);
    aux.insert(aux.end(), {'x', 'y'});
    CHECK_THROWS_AS((void)parse_annotations(aux), DataError);
}

TEST_CASE("annotations: crafted stream round trips and increments sum to the last index")
{
    std::mt19937_64 gen(9);
    const std::string beats = "NLRaVFJASEj/QenfB?r";
    std::vector<AnnotationEntry> entries;
    std::int64_t t = 0;
    for (int i = 0; i < 500; ++i) {
        t += static_cast<std::int64_t>(gen() % 3000);
        AnnotationEntry e;
        e.sample_index = t;
        e.symbol = beats[gen() % beats.size()];
        e.type_code = code_for_symbol(e.symbol);
        e.channel = static_cast<int>(gen() % 3 == 0 ? 1 : 0);
        if (gen() % 20 == 0) {
            e.aux = std::string(1 + gen() % 5, 'x');
        }
        entries.push_back(e);
    }
    const auto bytes = encode_annotations(entries);
    const auto parsed = parse_annotations(bytes);
    REQUIRE(parsed.size() == entries.size());
    CHECK(parsed.back().sample_index == t);
    CHECK(encode_annotations(parsed) == bytes);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(parsed[i] == entries[i]);
    }
}

TEST_CASE("label partition")
{
    CHECK(map_beat_label('V') == ClassLabel::PVC);
    const std::string non_pvc = "NLRBAaJSFejnE";
    for (const char c : non_pvc) {
        CHECK(map_beat_label(c) == ClassLabel::NonPVC);
    }
    for (const char c : std::string("Q?f/r+~|\"x[]!")) {
        CHECK(map_beat_label(c) == ClassLabel::Unlabeled);
    }
    CHECK(map_beat_label(0) == ClassLabel::Unlabeled);

    int pvc = 0;
    int non = 0;
    for (int code = 0; code < 64; ++code) {
        const auto l = map_beat_label(symbol_for_code(code));
        pvc += l == ClassLabel::PVC;
        non += l == ClassLabel::NonPVC;
    }
    CHECK(pvc == 1);
    CHECK(non == 13);
}

TEST_CASE("crafted record: class counts partition the beats")
{
    const std::string seq = "NNVQNA/VfE?Nr";
    int pvc = 0;
    int non = 0;
    int unl = 0;
    int beats = 0;
    for (const char c : seq) {
        beats += is_beat_symbol(c);
        switch (map_beat_label(c)) {
        case ClassLabel::PVC: ++pvc; break;
        case ClassLabel::NonPVC: ++non; break;
        case ClassLabel::Unlabeled: ++unl; break;
        }
    }
    CHECK(pvc == 2);
    CHECK(non == 6);
    CHECK(unl == 5);
    CHECK(pvc + non + unl == beats);
}

TEST_CASE("record files round trip through disk")
{
    fixtures::TempDir tmp("wfdb");
    EcgRecord rec;
    rec.header = parse_header("rt 2 250 5\nrt.dat 16 1000(0)/mV 16 0 0 0 0 I\nrt.dat 16 1000(0)/mV 16 0 0 0 0 II\n");
    rec.signals = {{0.0, 0.5, -0.25, 1.0, 0.001}, {0.1, 0.2, 0.3, 0.4, 0.5}};
    AnnotationEntry n;
    n.sample_index = 1;
    n.symbol = 'N';
    n.type_code = 1;
    AnnotationEntry v = n;
    v.sample_index = 3;
    v.symbol = 'V';
    v.type_code = 5;
    rec.annotations = {n, v};
    write_record(tmp.path(), rec);
    const auto back = load_record(tmp.path() / "rt.hea", tmp.path() / "rt.atr");
    CHECK(back.header.n_samples_per_signal == 5);
    REQUIRE(back.signals.size() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(back.signals[l][i] == doctest::Approx(rec.signals[l][i]).epsilon(1e-12));
        }
    }
    CHECK(back.annotations == rec.annotations);
    CHECK_THROWS_AS((void)load_record(tmp.path() / "missing.hea", {}), DataError);
}
