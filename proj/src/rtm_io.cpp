#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uwbg/error.hpp"
#include "uwbg/synth.hpp"

namespace uwbg::synth {

namespace {

constexpr char kMagic[4] = {'U', 'W', 'B', 'G'};
constexpr std::uint16_t kRtmVersion = 1;
constexpr std::uint8_t kNoDistance = 255;
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 4 + 1 + 1 + 8;

template <typename UInt>
void put_le(std::vector<std::uint8_t>& out, UInt v)
{
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

template <typename UInt>
UInt get_le(const std::uint8_t* p)
{
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        v |= static_cast<UInt>(p[i]) << (8 * i);
    }
    return v;
}

} // namespace

std::vector<std::uint8_t> encode_rtm(const RangeTimeMap& map)
{
    validate(map);
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + map.data.size() * 4);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kRtmVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.bins));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.frames));
    out.push_back(static_cast<std::uint8_t>(map.gesture));
    out.push_back(map.distance ? static_cast<std::uint8_t>(*map.distance) : kNoDistance);
    put_le<std::uint64_t>(out, map.seed);
    for (float v : map.data) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

RangeTimeMap decode_rtm(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("magic", "not an RTM file: bad magic");
    }
    if (bytes.size() < kHeaderSize) {
        throw FormatError("header", "RTM header truncated");
    }
    const std::uint8_t* p = bytes.data() + 4;
    const auto version = get_le<std::uint16_t>(p);
    if (version != kRtmVersion) {
        throw FormatError("format_version", "unsupported RTM format_version " + std::to_string(version));
    }
    const auto bins = get_le<std::uint32_t>(p + 2);
    const auto frames = get_le<std::uint32_t>(p + 6);
    const std::uint8_t gesture = p[10];
    const std::uint8_t distance = p[11];
    const auto seed = get_le<std::uint64_t>(p + 12);

    if (bins < 8 || bins > (1u << 20)) {
        throw FormatError("bins", "RTM bins out of range: " + std::to_string(bins));
    }
    if (frames < 8 || frames > (1u << 20)) {
        throw FormatError("frames", "RTM frames out of range: " + std::to_string(frames));
    }
    if (gesture >= kNumGestures) {
        throw FormatError("gesture", "RTM gesture code out of range: " + std::to_string(gesture));
    }
    const bool no_gesture = gesture == static_cast<std::uint8_t>(GestureClass::NoGesture);
    if (no_gesture ? distance != kNoDistance : distance >= kNumDistances) {
        throw FormatError("distance", "RTM distance code " + std::to_string(distance) + " invalid for gesture " +
                                          std::string(gesture_name(static_cast<GestureClass>(gesture))));
    }

    const std::size_t cells = static_cast<std::size_t>(bins) * frames;
    if (bytes.size() != kHeaderSize + cells * 4) {
        throw FormatError("payload length", "RTM payload length " + std::to_string(bytes.size() - kHeaderSize) +
                                                " does not match " + std::to_string(bins) + "x" +
                                                std::to_string(frames) + " float32 cells");
    }

    RangeTimeMap map;
    map.bins = static_cast<int>(bins);
    map.frames = static_cast<int>(frames);
    map.seed = seed;
    map.gesture = static_cast<GestureClass>(gesture);
    if (!no_gesture) {
        map.distance = static_cast<DistanceBand>(distance);
    }
    map.data.resize(cells);
    const std::uint8_t* payload = bytes.data() + kHeaderSize;
    for (std::size_t i = 0; i < cells; ++i) {
        map.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload + 4 * i));
        if (!std::isfinite(map.data[i])) {
            throw FormatError("payload", "RTM payload contains a non-finite value at cell " + std::to_string(i));
        }
    }
    return map;
}

void save_rtm(const RangeTimeMap& map, const std::filesystem::path& path)
{
    const auto bytes = encode_rtm(map);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

RangeTimeMap load_rtm(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return decode_rtm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(e.field(), path.string() + ": " + e.what());
    }
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f << nlohmann::json(m).dump(2) << '\n';
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open manifest " + path.string());
    }
    DatasetManifest m;
    try {
        m = nlohmann::json::parse(f).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest", path.string() + ": " + e.what());
    }
    m.root = path.parent_path();
    return m;
}

} // namespace uwbg::synth
