#include "uwbg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "uwbg/error.hpp"
#include "uwbg/rng.hpp"

namespace uwbg::synth {

namespace {

// Salt mixed into a sample seed to get its outlier-injection seed.
constexpr std::uint64_t kOutlierSalt = 0x6F75746C69657273ULL; // "outliers"

void check_pairing(GestureClass g, const std::optional<DistanceBand>& d)
{
    if (static_cast<unsigned>(g) >= static_cast<unsigned>(kNumGestures)) {
        throw InvalidArgument("gesture index out of range");
    }
    if (g == GestureClass::NoGesture && d.has_value()) {
        throw InvalidArgument("NO_GESTURE takes no distance band");
    }
    if (g != GestureClass::NoGesture && !d.has_value()) {
        throw InvalidArgument("distance band required for " + std::string(gesture_name(g)));
    }
    if (d && static_cast<int>(*d) >= kNumDistances) {
        throw InvalidArgument("distance index out of range");
    }
}

} // namespace

std::string_view gesture_name(GestureClass g)
{
    switch (g) {
    case GestureClass::Ok: return "OK";
    case GestureClass::Victory: return "VICTORY";
    case GestureClass::Stop: return "STOP";
    case GestureClass::Palm: return "PALM";
    case GestureClass::Like: return "LIKE";
    case GestureClass::NoGesture: return "NO_GESTURE";
    }
    return "?";
}

std::string_view distance_name(DistanceBand d)
{
    switch (d) {
    case DistanceBand::D10: return "D10";
    case DistanceBand::D25: return "D25";
    case DistanceBand::D50: return "D50";
    }
    return "?";
}

int distance_cm(DistanceBand d)
{
    switch (d) {
    case DistanceBand::D10: return 10;
    case DistanceBand::D25: return 25;
    case DistanceBand::D50: return 50;
    }
    return 0;
}

SubclassLabel::SubclassLabel(GestureClass gesture, std::optional<DistanceBand> distance)
    : gesture_(gesture), distance_(distance)
{
    check_pairing(gesture_, distance_);
}

SubclassLabel SubclassLabel::from_index(int index)
{
    if (index < 0 || index >= kNumSubclasses) {
        throw InvalidArgument("subclass index " + std::to_string(index) + " outside 0..15");
    }
    if (index == kNoGestureSubclass) {
        return SubclassLabel(GestureClass::NoGesture, std::nullopt);
    }
    return SubclassLabel(static_cast<GestureClass>(index / kNumDistances),
                         static_cast<DistanceBand>(index % kNumDistances));
}

int SubclassLabel::index() const noexcept
{
    if (!distance_) {
        return kNoGestureSubclass;
    }
    return static_cast<int>(gesture_) * kNumDistances + static_cast<int>(*distance_);
}

std::string SubclassLabel::name() const
{
    std::string s(gesture_name(gesture_));
    if (distance_) {
        s += '_';
        s += distance_name(*distance_);
    }
    return s;
}

std::vector<Reflector> reflectors(GestureClass g)
{
    switch (g) {
    case GestureClass::Ok: return {{0, 1.5, 1.0}, {3, 1.0, 0.6}};
    case GestureClass::Victory: return {{0, 1.0, 0.9}, {4, 1.0, 0.9}};
    case GestureClass::Stop: return {{0, 3.0, 1.0}};
    case GestureClass::Palm: return {{0, 4.0, 0.8}, {2, 2.0, 0.5}};
    case GestureClass::Like: return {{0, 1.2, 1.0}, {-3, 1.2, 0.7}};
    case GestureClass::NoGesture: return {};
    }
    return {};
}

int base_bin(DistanceBand d)
{
    switch (d) {
    case DistanceBand::D10: return 8;
    case DistanceBand::D25: return 24;
    case DistanceBand::D50: return 48;
    }
    return 0;
}

void validate(const RangeTimeMap& map)
{
    if (map.bins < 8 || map.frames < 8) {
        throw InvalidArgument("range-time map needs at least 8 bins and 8 frames, got " +
                              std::to_string(map.bins) + "x" + std::to_string(map.frames));
    }
    if (map.data.size() != static_cast<std::size_t>(map.bins) * static_cast<std::size_t>(map.frames)) {
        throw InvalidArgument("range-time map payload does not match bins x frames");
    }
    for (float v : map.data) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("range-time map contains a non-finite value");
        }
    }
    check_pairing(map.gesture, map.distance);
}

void SynthConfig::validate() const
{
    if (bins < 8 || frames < 8) {
        throw InvalidArgument("bins and frames must be >= 8");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw InvalidArgument("noise_sigma must be finite and >= 0");
    }
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
        throw InvalidArgument("outlier_rate must lie in [0, 1]");
    }
    if (!(outlier_magnitude > 0.0) || !std::isfinite(outlier_magnitude)) {
        throw InvalidArgument("outlier_magnitude must be finite and > 0");
    }
    if (samples_per_subclass < 0) {
        throw InvalidArgument("samples_per_subclass must be >= 0");
    }
}

void to_json(nlohmann::json& j, const SynthConfig& c)
{
    j = nlohmann::json{{"bins", c.bins},
                       {"frames", c.frames},
                       {"noise_sigma", c.noise_sigma},
                       {"outlier_rate", c.outlier_rate},
                       {"outlier_magnitude", c.outlier_magnitude},
                       {"samples_per_subclass", c.samples_per_subclass},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c)
{
    for (const auto& [key, value] : j.items()) {
        if (key == "bins") c.bins = value.get<int>();
        else if (key == "frames") c.frames = value.get<int>();
        else if (key == "noise_sigma") c.noise_sigma = value.get<double>();
        else if (key == "outlier_rate") c.outlier_rate = value.get<double>();
        else if (key == "outlier_magnitude") c.outlier_magnitude = value.get<double>();
        else if (key == "samples_per_subclass") c.samples_per_subclass = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else throw InvalidArgument("unknown synth config key '" + key + "'");
    }
}

double envelope(int frame, int frames)
{
    return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * frame / (frames - 1)));
}

namespace {

double scaled_base_bin(DistanceBand d, int bins)
{
    // Table is for 64 bins; other geometries scale it.
    if (bins == 64) {
        return base_bin(d);
    }
    return std::round(base_bin(d) * bins / 64.0);
}

double profile(GestureClass g, std::optional<DistanceBand> d, int bin, int bins)
{
    if (!d) {
        return 0.0;
    }
    const double r0 = scaled_base_bin(*d, bins);
    double sum = 0.0;
    for (const auto& r : reflectors(g)) {
        const double u = (bin - (r0 + r.offset)) / r.sigma;
        sum += r.amplitude * std::exp(-0.5 * u * u);
    }
    return sum;
}

} // namespace

RangeTimeMap synth_recording(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg,
                             std::uint64_t sample_seed)
{
    check_pairing(gesture, distance);
    cfg.validate();

    RangeTimeMap map;
    map.bins = cfg.bins;
    map.frames = cfg.frames;
    map.seed = sample_seed;
    map.gesture = gesture;
    map.distance = distance;
    map.data.assign(static_cast<std::size_t>(cfg.bins) * cfg.frames, 0.0f);

    std::vector<double> env(cfg.frames);
    for (int t = 0; t < cfg.frames; ++t) {
        env[t] = envelope(t, cfg.frames);
    }

    Rng rng(sample_seed);
    for (int b = 0; b < cfg.bins; ++b) {
        const double p = profile(gesture, distance, b, cfg.bins);
        for (int t = 0; t < cfg.frames; ++t) {
            double v = p * env[t];
            if (cfg.noise_sigma > 0.0) {
                v += cfg.noise_sigma * rng.normal();
            }
            map.at(b, t) = static_cast<float>(v);
        }
    }
    return map;
}

double signal_peak(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg)
{
    check_pairing(gesture, distance);
    double peak = 0.0;
    double env_peak = 0.0;
    for (int t = 0; t < cfg.frames; ++t) {
        env_peak = std::max(env_peak, envelope(t, cfg.frames));
    }
    for (int b = 0; b < cfg.bins; ++b) {
        peak = std::max(peak, profile(gesture, distance, b, cfg.bins) * env_peak);
    }
    return peak;
}

InjectionResult inject_outliers(const RangeTimeMap& map, double rate, double magnitude, std::uint64_t seed)
{
    if (!(rate >= 0.0 && rate <= 1.0)) {
        throw InvalidArgument("outlier rate must lie in [0, 1]");
    }
    if (!(magnitude > 0.0) || !std::isfinite(magnitude)) {
        throw InvalidArgument("outlier magnitude must be finite and > 0");
    }

    InjectionResult out{map, {}};
    const std::size_t cells = map.cells();
    // The epsilon keeps rate = k / cells from flooring to k - 1.
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(cells) + 1e-9));
    if (count == 0) {
        return out;
    }

    std::vector<std::size_t> order(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
        std::swap(order[i], order[j]);
    }
    out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(out.indices.begin(), out.indices.end());
    for (std::size_t idx : out.indices) {
        out.map.data[idx] = static_cast<float>(out.map.data[idx] + magnitude);
    }
    return out;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, int subclass, int sample_index)
{
    return derive_seed(dataset_seed, static_cast<std::uint64_t>(subclass), static_cast<std::uint64_t>(sample_index));
}

double outlier_reference(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg)
{
    const double peak = signal_peak(gesture, distance, cfg);
    return peak > 0.0 ? peak : 1.0;
}

RangeTimeMap make_sample(const SynthConfig& cfg, int subclass, std::uint64_t seed)
{
    const auto label = SubclassLabel::from_index(subclass);
    RangeTimeMap map = synth_recording(label.gesture(), label.distance(), cfg, seed);
    if (cfg.outlier_rate > 0.0) {
        const double ref = outlier_reference(label.gesture(), label.distance(), cfg);
        map = inject_outliers(map, cfg.outlier_rate, cfg.outlier_magnitude * ref, mix64(seed ^ kOutlierSalt)).map;
    }
    return map;
}

void to_json(nlohmann::json& j, const DatasetManifest& m)
{
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"path", e.path}, {"subclass", e.subclass}, {"seed", e.seed}});
    }
    j = nlohmann::json{{"format_version", m.format_version}, {"config", m.config}, {"entries", std::move(entries)}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m)
{
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != DatasetManifest::kFormatVersion) {
        throw FormatError("format_version", "unsupported manifest format_version " +
                                                std::to_string(m.format_version));
    }
    m.config = j.at("config").get<SynthConfig>();
    m.entries.clear();
    for (const auto& e : j.at("entries")) {
        ManifestEntry entry{e.at("path").get<std::string>(), e.at("subclass").get<int>(),
                            e.at("seed").get<std::uint64_t>()};
        if (entry.subclass < 0 || entry.subclass >= kNumSubclasses) {
            throw FormatError("subclass", "manifest entry '" + entry.path + "' has subclass " +
                                              std::to_string(entry.subclass) + " outside 0..15");
        }
        m.entries.push_back(std::move(entry));
    }
}

DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir)
{
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());
    }

    DatasetManifest manifest;
    manifest.config = cfg;
    manifest.root = out_dir;
    for (int sc = 0; sc < kNumSubclasses; ++sc) {
        for (int i = 0; i < cfg.samples_per_subclass; ++i) {
            const std::uint64_t seed = sample_seed(cfg.seed, sc, i);
            char name[32];
            std::snprintf(name, sizeof name, "s%02d_%04d.rtm", sc, i);
            save_rtm(make_sample(cfg, sc, seed), out_dir / name);
            manifest.entries.push_back({name, sc, seed});
        }
    }
    save_manifest(manifest, out_dir / kManifestFileName);
    return manifest;
}

} // namespace uwbg::synth
