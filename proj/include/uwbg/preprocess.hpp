#pragma once

// Outlier mitigation, normalization, false-color rendering and letterboxing
// of range-time maps into fixed-size network inputs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "uwbg/synth.hpp"

namespace uwbg::preprocess {

struct ColorAnchor {
    double t;
    std::uint8_t r, g, b;

    friend bool operator==(const ColorAnchor&, const ColorAnchor&) = default;
};

/// Jet-like map: blue, cyan, green, yellow, red at t = 0, .25, .5, .75, 1.
std::vector<ColorAnchor> default_colormap();

/// How the rolling median treats the first/last window/2 samples.
///   Truncate: the window is clipped to the series (fewer samples).
///   Shift:    the full window is slid inward so it stays inside the series.
enum class EdgeMode { Truncate, Shift };

struct PreprocessConfig {
    int median_window = 5;
    /// Edge handling of the median baseline used by mitigate_outliers. With
    /// Truncate, two outliers in the last three frames outvote the clean
    /// sample and survive.
    EdgeMode edge_mode = EdgeMode::Shift;
    double z_threshold = 3.0;
    /// A cell is only flagged if its residual also exceeds this fraction of
    /// the map's (max - min). Keeps the scale-free z-score from firing on
    /// round-off-sized residuals of noise-free data. 0 disables the floor.
    double min_residual_fraction = 0.05;
    int target_width = 159;
    int target_height = 200;
    std::vector<ColorAnchor> colormap = default_colormap();

    void validate() const;
    friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);

struct FloatMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct RgbaRaster {
    int width = 0;
    int height = 0;
    /// Row-major, 4 bytes per pixel.
    std::vector<std::uint8_t> pixels;

    RgbaRaster() = default;
    RgbaRaster(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 4, 0) {}

    std::uint8_t* px(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
    const std::uint8_t* px(int x, int y) const { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4; }

    friend bool operator==(const RgbaRaster&, const RgbaRaster&) = default;
};

struct ContentRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    friend bool operator==(const ContentRect&, const ContentRect&) = default;
};

/// Letterboxed network input. Padding pixels are (0,0,0,0); content pixels
/// have alpha 255.
struct FalseColorImage {
    RgbaRaster raster;
    ContentRect content;

    int width() const noexcept { return raster.width; }
    int height() const noexcept { return raster.height; }

    friend bool operator==(const FalseColorImage&, const FalseColorImage&) = default;
};

/// Centered sliding median. With Truncate an even-sized clipped window takes
/// the mean of its two middle values. Series shorter than the window use the
/// whole series in either mode.
std::vector<double> rolling_median(std::span<const double> series, int window,
                                   EdgeMode mode = EdgeMode::Truncate);

/// Population z-score. A zero standard deviation gives all zeros.
std::vector<double> zscore(std::span<const double> values);

struct MitigationResult {
    synth::RangeTimeMap map;
    std::size_t replaced = 0;
};

/// Per range bin, replaces cells whose rolling-median residual is a z-score
/// outlier with the rolling median at that cell.
MitigationResult mitigate_outliers(const synth::RangeTimeMap& map, const PreprocessConfig& cfg);

/// Global min-max to [0, 1]; a constant map gives all zeros. Accepts any
/// non-empty matrix, not only full-size recordings.
FloatMatrix normalize_minmax(const synth::RangeTimeMap& map);

/// Piecewise-linear colormap lookup; rows become raster rows.
RgbaRaster apply_colormap(const FloatMatrix& norm, const PreprocessConfig& cfg);

/// Single lookup, exposed for tests and the legend in the CLI.
std::array<std::uint8_t, 4> colormap_lookup(double t, const std::vector<ColorAnchor>& anchors);

FalseColorImage resize_letterbox(const RgbaRaster& src, int target_w = 159, int target_h = 200);

FalseColorImage preprocess_pipeline(const synth::RangeTimeMap& map, const PreprocessConfig& cfg);

/// 8-bit RGBA, non-interlaced.
void write_png(const RgbaRaster& raster, const std::filesystem::path& path);
RgbaRaster read_png(const std::filesystem::path& path);

} // namespace uwbg::preprocess
