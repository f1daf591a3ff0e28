#pragma once

// Synthetic UWB range-time maps and the on-disk dataset they form.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace uwbg::synth {

enum class GestureClass : std::uint8_t { Ok = 0, Victory = 1, Stop = 2, Palm = 3, Like = 4, NoGesture = 5 };
inline constexpr int kNumGestures = 6;

enum class DistanceBand : std::uint8_t { D10 = 0, D25 = 1, D50 = 2 };
inline constexpr int kNumDistances = 3;

inline constexpr int kNumSubclasses = 16;
inline constexpr int kNoGestureSubclass = 15;

std::string_view gesture_name(GestureClass g);
std::string_view distance_name(DistanceBand d);
int distance_cm(DistanceBand d);

/// Gesture x distance. Encodes to 0..15: gesture*3 + distance for the five
/// real gestures, 15 for NO_GESTURE (which has no distance).
class SubclassLabel {
public:
    /// Throws InvalidArgument unless `distance` is present iff `gesture` is a
    /// real gesture.
    SubclassLabel(GestureClass gesture, std::optional<DistanceBand> distance);

    static SubclassLabel from_index(int index);

    int index() const noexcept;
    GestureClass gesture() const noexcept { return gesture_; }
    std::optional<DistanceBand> distance() const noexcept { return distance_; }
    /// "PALM_D25", "NO_GESTURE".
    std::string name() const;

    friend bool operator==(const SubclassLabel&, const SubclassLabel&) = default;

private:
    GestureClass gesture_;
    std::optional<DistanceBand> distance_;
};

/// One Gaussian reflector in a gesture signature, in range-bin units.
struct Reflector {
    double offset;
    double sigma;
    double amplitude;
};

std::vector<Reflector> reflectors(GestureClass g);

/// Base range bin of a distance band (for the default 64 bins).
int base_bin(DistanceBand d);

struct RangeTimeMap {
    int bins = 0;
    int frames = 0;
    /// Row-major, row = range bin, column = slow-time frame.
    std::vector<float> data;
    std::uint64_t seed = 0;
    GestureClass gesture = GestureClass::NoGesture;
    std::optional<DistanceBand> distance;

    float at(int bin, int frame) const { return data[static_cast<std::size_t>(bin) * frames + frame]; }
    float& at(int bin, int frame) { return data[static_cast<std::size_t>(bin) * frames + frame]; }
    std::size_t cells() const noexcept { return data.size(); }
    SubclassLabel label() const { return SubclassLabel(gesture, distance); }

    friend bool operator==(const RangeTimeMap&, const RangeTimeMap&) = default;
};

/// Throws InvalidArgument if the map breaks its invariants (dims >= 8,
/// matching payload, finite values).
void validate(const RangeTimeMap& map);

struct SynthConfig {
    int bins = 64;
    int frames = 120;
    double noise_sigma = 0.05;
    double outlier_rate = 0.01;
    /// Multiple of the recording's noise-free signal peak (1.0 for NO_GESTURE).
    double outlier_magnitude = 8.0;
    int samples_per_subclass = 60;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Raised-cosine envelope 0.5 * (1 - cos(2*pi*t / (frames - 1))).
double envelope(int frame, int frames);

RangeTimeMap synth_recording(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg,
                             std::uint64_t sample_seed);

/// Largest noise-free amplitude of the gesture's signature under `cfg`.
double signal_peak(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg);

/// Amplitude outlier magnitudes are multiples of: signal_peak, or 1.0 for
/// the empty NO_GESTURE signature.
double outlier_reference(GestureClass gesture, std::optional<DistanceBand> distance, const SynthConfig& cfg);

struct InjectionResult {
    RangeTimeMap map;
    /// Flat (row-major) indices of altered cells, ascending.
    std::vector<std::size_t> indices;
};

/// Adds `magnitude` to floor(rate * cells) distinct uniformly chosen cells.
InjectionResult inject_outliers(const RangeTimeMap& map, double rate, double magnitude, std::uint64_t seed);

struct ManifestEntry {
    /// Relative to the manifest's directory.
    std::string path;
    int subclass = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    static constexpr int kFormatVersion = 1;

    int format_version = kFormatVersion;
    SynthConfig config;
    std::vector<ManifestEntry> entries;
    /// Directory entry paths resolve against. Not serialized.
    std::filesystem::path root;

    std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

inline constexpr const char* kManifestFileName = "manifest.json";

/// Seed for sample `sample_index` of `subclass` (see derive_seed in rng.hpp).
std::uint64_t sample_seed(std::uint64_t dataset_seed, int subclass, int sample_index);

/// Writes `samples_per_subclass` RTM files for each of the 16 subclasses into
/// `out_dir`, plus manifest.json. Output bytes depend only on `cfg`.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// The recording generate_dataset writes for (subclass, sample seed),
/// including injected outliers.
RangeTimeMap make_sample(const SynthConfig& cfg, int subclass, std::uint64_t seed);

void save_rtm(const RangeTimeMap& map, const std::filesystem::path& path);
RangeTimeMap load_rtm(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_rtm(const RangeTimeMap& map);
RangeTimeMap decode_rtm(const std::vector<std::uint8_t>& bytes);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Sets `root` to the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

} // namespace uwbg::synth
