#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "test_util.hpp"
#include "uwbg/error.hpp"
#include "uwbg/synth.hpp"

using namespace uwbg;
using namespace uwbg::synth;

namespace {

SynthConfig clean_config()
{
    SynthConfig c;
    c.noise_sigma = 0.0;
    c.outlier_rate = 0.0;
    return c;
}

} // namespace

TEST_CASE("subclass encoding")
{
    std::set<int> seen;
    for (int g = 0; g < 5; ++g) {
        for (int d = 0; d < 3; ++d) {
            SubclassLabel l(static_cast<GestureClass>(g), static_cast<DistanceBand>(d));
            CHECK(l.index() == g * 3 + d);
            CHECK(SubclassLabel::from_index(l.index()) == l);
            seen.insert(l.index());
        }
    }
    SubclassLabel none(GestureClass::NoGesture, std::nullopt);
    CHECK(none.index() == 15);
    seen.insert(15);
    CHECK(seen.size() == 16);
    CHECK(SubclassLabel::from_index(10).name() == "PALM_D25");
    CHECK(none.name() == "NO_GESTURE");
    CHECK_THROWS_AS(SubclassLabel(GestureClass::Ok, std::nullopt), InvalidArgument);
    CHECK_THROWS_AS(SubclassLabel(GestureClass::NoGesture, DistanceBand::D10), InvalidArgument);
    CHECK_THROWS_AS(SubclassLabel::from_index(16), InvalidArgument);
}

TEST_CASE("envelope is a raised cosine")
{
    CHECK(envelope(0, 120) == doctest::Approx(0.0));
    CHECK(envelope(119, 120) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(envelope(59, 120) == doctest::Approx(envelope(60, 120)));
    CHECK(envelope(59, 120) < 1.0);
    CHECK(envelope(30, 61) == doctest::Approx(1.0));
}

TEST_CASE("NO_GESTURE without noise is all zero")
{
    const auto m = synth_recording(GestureClass::NoGesture, std::nullopt, clean_config(), 123);
    CHECK(m.bins == 64);
    CHECK(m.frames == 120);
    CHECK(std::all_of(m.data.begin(), m.data.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("PALM D10 peak cell and value")
{
    // Closed form evaluated independently: the two PALM reflectors overlap
    // so the maximum sits one bin past r0 = 8, at the first of the two
    // symmetric envelope-peak frames (59, 60).
    //   (0.8 exp(-1/32) + 0.5 exp(-1/8)) * 0.5 (1 - cos(2 pi 59 / 119))
    const double expected = 1.2164230656874038;
    const auto m = synth_recording(GestureClass::Palm, DistanceBand::D10, clean_config(), 1);
    const auto it = std::max_element(m.data.begin(), m.data.end());
    const auto idx = static_cast<int>(it - m.data.begin());
    CHECK(idx / m.frames == 9);
    CHECK(idx % m.frames == 59);
    CHECK(*it == doctest::Approx(expected).epsilon(1e-6));
    CHECK(signal_peak(GestureClass::Palm, DistanceBand::D10, clean_config()) == doctest::Approx(expected));
}

TEST_CASE("signal placement follows the reflector table")
{
    const auto cfg = clean_config();
    for (int sc = 0; sc < 15; ++sc) {
        const auto label = SubclassLabel::from_index(sc);
        const auto m = synth_recording(label.gesture(), label.distance(), cfg, 5);
        std::vector<double> rows(m.bins, 0.0);
        for (int b = 0; b < m.bins; ++b) {
            for (int t = 0; t < m.frames; ++t) rows[b] += m.at(b, t);
        }
        const int argmax = static_cast<int>(std::max_element(rows.begin(), rows.end()) - rows.begin());
        double extent = 0.0;
        for (const auto& r : reflectors(label.gesture())) extent = std::max(extent, std::abs(r.offset));
        CHECK(std::abs(argmax - base_bin(*label.distance())) <= extent);
    }
}

TEST_CASE("synthesis is deterministic and seed dependent")
{
    SynthConfig cfg;
    const auto a = synth_recording(GestureClass::Stop, DistanceBand::D50, cfg, 77);
    const auto b = synth_recording(GestureClass::Stop, DistanceBand::D50, cfg, 77);
    const auto c = synth_recording(GestureClass::Stop, DistanceBand::D50, cfg, 78);
    CHECK(a == b);
    CHECK(a.data != c.data);
    CHECK_THROWS_AS(synth_recording(GestureClass::Ok, std::nullopt, cfg, 1), InvalidArgument);
    CHECK_THROWS_AS(synth_recording(GestureClass::NoGesture, DistanceBand::D25, cfg, 1), InvalidArgument);
}

TEST_CASE("noise-free class templates are pairwise distinct")
{
    const auto cfg = clean_config();
    std::vector<RangeTimeMap> t;
    for (int sc = 0; sc < 16; ++sc) {
        const auto l = SubclassLabel::from_index(sc);
        t.push_back(synth_recording(l.gesture(), l.distance(), cfg, 0));
    }
    for (int i = 0; i < 16; ++i) {
        for (int j = i + 1; j < 16; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < t[i].data.size(); ++k) {
                const double d = t[i].data[k] - t[j].data[k];
                d2 += d * d;
            }
            CHECK(std::sqrt(d2) > 0.0);
        }
    }
}

TEST_CASE("inject_outliers counts")
{
    SynthConfig cfg;
    const auto m = synth_recording(GestureClass::Like, DistanceBand::D25, cfg, 4);

    const auto none = inject_outliers(m, 0.0, 5.0, 1);
    CHECK(none.indices.empty());
    CHECK(none.map == m);

    const auto one = inject_outliers(m, 1.0 / 7680.0, 5.0, 1);
    REQUIRE(one.indices.size() == 1);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) changed += one.map.data[i] != m.data[i];
    CHECK(changed == 1);
    CHECK(one.map.data[one.indices[0]] == doctest::Approx(m.data[one.indices[0]] + 5.0));

    // floor(0.01 * 7680) = 76
    const auto many = inject_outliers(m, 0.01, 5.0, 9);
    CHECK(many.indices.size() == 76);
    CHECK(std::set<std::size_t>(many.indices.begin(), many.indices.end()).size() == 76);
    CHECK(inject_outliers(m, 0.01, 5.0, 9).indices == many.indices);
    CHECK(inject_outliers(m, 0.01, 5.0, 10).indices != many.indices);

    CHECK_THROWS_AS(inject_outliers(m, 1.5, 5.0, 1), InvalidArgument);
    CHECK_THROWS_AS(inject_outliers(m, 0.1, 0.0, 1), InvalidArgument);
}

TEST_CASE("RTM round trip and format errors")
{
    test::TempDir dir("rtm");
    SynthConfig cfg;
    const auto m = make_sample(cfg, 3, 99);
    save_rtm(m, dir / "a.rtm");
    CHECK(load_rtm(dir / "a.rtm") == m);

    auto bytes = encode_rtm(m);
    CHECK(bytes.size() == 24 + 64 * 120 * 4);

    auto bad = bytes;
    bad[0] = 'X';
    try {
        decode_rtm(bad);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "magic");
    }

    auto shorter = bytes;
    shorter.resize(shorter.size() - 4);
    try {
        decode_rtm(shorter);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "payload length");
    }

    auto version = bytes;
    version[4] = 2;
    try {
        decode_rtm(version);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "format_version");
    }

    CHECK_THROWS_AS(load_rtm(dir / "missing.rtm"), IoError);
}

TEST_CASE("generate_dataset")
{
    test::TempDir a("gen_a"), b("gen_b"), empty("gen_e");
    SynthConfig cfg;
    cfg.samples_per_subclass = 10;
    cfg.seed = 7;
    const auto m = generate_dataset(cfg, a.path());
    CHECK(m.entries.size() == 160);
    generate_dataset(cfg, b.path());
    for (const auto& e : m.entries) {
        REQUIRE(test::read_file(a / e.path) == test::read_file(b / e.path));
        CHECK(load_rtm(m.resolve(e)).label().index() == e.subclass);
    }
    CHECK(test::read_file(a / kManifestFileName) == test::read_file(b / kManifestFileName));

    const auto loaded = load_manifest(a / kManifestFileName);
    CHECK(loaded.entries == m.entries);
    CHECK(loaded.config == cfg);

    cfg.samples_per_subclass = 0;
    const auto e = generate_dataset(cfg, empty.path());
    CHECK(e.entries.empty());
    std::size_t files = 0;
    for (const auto& f : std::filesystem::directory_iterator(empty.path())) files += f.path().extension() == ".rtm";
    CHECK(files == 0);
}

TEST_CASE("SynthConfig JSON rejects unknown keys")
{
    SynthConfig c;
    c.seed = 12;
    c.noise_sigma = 0.2;
    CHECK(nlohmann::json(c).get<SynthConfig>() == c);
    nlohmann::json j = c;
    j["colour"] = 1;
    CHECK_THROWS(j.get<SynthConfig>());
}

TEST_CASE("outlier reference amplitude")
{
    const SynthConfig cfg;
    CHECK(outlier_reference(GestureClass::NoGesture, std::nullopt, cfg) == 1.0);
    CHECK(outlier_reference(GestureClass::Palm, DistanceBand::D10, cfg) ==
          signal_peak(GestureClass::Palm, DistanceBand::D10, cfg));
}
