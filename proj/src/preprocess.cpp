#include "uwbg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "uwbg/error.hpp"

namespace uwbg::preprocess {

std::vector<ColorAnchor> default_colormap()
{
    return {{0.0, 0, 0, 255}, {0.25, 0, 255, 255}, {0.5, 0, 255, 0}, {0.75, 255, 255, 0}, {1.0, 255, 0, 0}};
}

void PreprocessConfig::validate() const
{
    if (median_window < 3 || median_window % 2 == 0) {
        throw InvalidArgument("median_window must be odd and >= 3, got " + std::to_string(median_window));
    }
    if (!(z_threshold > 0.0)) {
        throw InvalidArgument("z_threshold must be > 0");
    }
    if (!(min_residual_fraction >= 0.0 && min_residual_fraction < 1.0)) {
        throw InvalidArgument("min_residual_fraction must lie in [0, 1)");
    }
    if (target_width < 1 || target_height < 1) {
        throw InvalidArgument("target dimensions must be positive");
    }
    if (colormap.size() < 2 || colormap.front().t != 0.0 || colormap.back().t != 1.0) {
        throw InvalidArgument("colormap needs >= 2 anchors spanning t = 0 .. 1");
    }
    for (std::size_t i = 1; i < colormap.size(); ++i) {
        if (!(colormap[i].t > colormap[i - 1].t)) {
            throw InvalidArgument("colormap anchors must be strictly increasing in t");
        }
    }
}

void to_json(nlohmann::json& j, const PreprocessConfig& c)
{
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : c.colormap) {
        anchors.push_back({a.t, a.r, a.g, a.b});
    }
    j = nlohmann::json{{"median_window", c.median_window},
                       {"edge_mode", c.edge_mode == EdgeMode::Shift ? "shift" : "truncate"},
                       {"z_threshold", c.z_threshold},
                       {"min_residual_fraction", c.min_residual_fraction},
                       {"target_width", c.target_width},
                       {"target_height", c.target_height},
                       {"colormap", std::move(anchors)}};
}

void from_json(const nlohmann::json& j, PreprocessConfig& c)
{
    for (const auto& [key, value] : j.items()) {
        if (key == "median_window") c.median_window = value.get<int>();
        else if (key == "edge_mode") {
            const auto m = value.get<std::string>();
            if (m == "shift") c.edge_mode = EdgeMode::Shift;
            else if (m == "truncate") c.edge_mode = EdgeMode::Truncate;
            else throw InvalidArgument("edge_mode must be \"shift\" or \"truncate\", got \"" + m + "\"");
        }
        else if (key == "z_threshold") c.z_threshold = value.get<double>();
        else if (key == "min_residual_fraction") c.min_residual_fraction = value.get<double>();
        else if (key == "target_width") c.target_width = value.get<int>();
        else if (key == "target_height") c.target_height = value.get<int>();
        else if (key == "colormap") {
            c.colormap.clear();
            for (const auto& a : value) {
                if (!a.is_array() || a.size() != 4) {
                    throw InvalidArgument("colormap anchor must be [t, r, g, b]");
                }
                c.colormap.push_back({a[0].get<double>(), a[1].get<std::uint8_t>(), a[2].get<std::uint8_t>(),
                                      a[3].get<std::uint8_t>()});
            }
        }
        else throw InvalidArgument("unknown preprocess config key '" + key + "'");
    }
}

std::vector<double> rolling_median(std::span<const double> series, int window, EdgeMode mode)
{
    if (window < 3 || window % 2 == 0) {
        throw InvalidArgument("rolling median window must be odd and >= 3, got " + std::to_string(window));
    }
    if (series.empty()) {
        throw InvalidArgument("rolling median of an empty series");
    }
    const auto n = static_cast<std::ptrdiff_t>(series.size());
    const std::ptrdiff_t half = window / 2;
    std::vector<double> out(series.size());
    std::vector<double> buf;
    buf.reserve(static_cast<std::size_t>(window));
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        std::ptrdiff_t lo = i - half;
        std::ptrdiff_t hi = i + half;
        if (mode == EdgeMode::Shift && n >= window) {
            const std::ptrdiff_t shift = lo < 0 ? -lo : (hi > n - 1 ? (n - 1) - hi : 0);
            lo += shift;
            hi += shift;
        }
        lo = std::max<std::ptrdiff_t>(0, lo);
        hi = std::min(n - 1, hi);
        buf.assign(series.begin() + lo, series.begin() + hi + 1);
        std::sort(buf.begin(), buf.end());
        const std::size_t m = buf.size();
        out[static_cast<std::size_t>(i)] = (m % 2 == 1) ? buf[m / 2] : 0.5 * (buf[m / 2 - 1] + buf[m / 2]);
    }
    return out;
}

std::vector<double> zscore(std::span<const double> values)
{
    if (values.size() < 2) {
        throw InvalidArgument("z-score needs at least 2 values");
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
    std::vector<double> z(values.size(), 0.0);
    if (sd > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            z[i] = (values[i] - mean) / sd;
        }
    }
    return z;
}

MitigationResult mitigate_outliers(const synth::RangeTimeMap& map, const PreprocessConfig& cfg)
{
    synth::validate(map);
    cfg.validate();

    const auto [lo, hi] = std::minmax_element(map.data.begin(), map.data.end());
    const double floor_abs = cfg.min_residual_fraction * (static_cast<double>(*hi) - *lo);

    MitigationResult out{map, 0};
    std::vector<double> row(static_cast<std::size_t>(map.frames));
    std::vector<double> residual(row.size());
    for (int b = 0; b < map.bins; ++b) {
        for (int t = 0; t < map.frames; ++t) {
            row[t] = map.at(b, t);
        }
        const auto med = rolling_median(row, cfg.median_window, cfg.edge_mode);
        for (std::size_t t = 0; t < row.size(); ++t) {
            residual[t] = row[t] - med[t];
        }
        const auto z = zscore(residual);
        for (int t = 0; t < map.frames; ++t) {
            if (std::abs(z[t]) > cfg.z_threshold && std::abs(residual[t]) > floor_abs) {
                out.map.at(b, t) = static_cast<float>(med[t]);
                ++out.replaced;
            }
        }
    }
    return out;
}

FloatMatrix normalize_minmax(const synth::RangeTimeMap& map)
{
    if (map.bins < 1 || map.frames < 1 || map.data.size() != static_cast<std::size_t>(map.bins) * map.frames) {
        throw InvalidArgument("normalize_minmax: matrix is empty or its payload does not match its dimensions");
    }
    FloatMatrix out{map.bins, map.frames, std::vector<double>(map.data.size(), 0.0)};
    const auto [lo_it, hi_it] = std::minmax_element(map.data.begin(), map.data.end());
    const double lo = *lo_it;
    const double range = static_cast<double>(*hi_it) - lo;
    if (range > 0.0) {
        for (std::size_t i = 0; i < map.data.size(); ++i) {
            out.data[i] = (map.data[i] - lo) / range;
        }
    }
    return out;
}

namespace {

std::uint8_t round_u8(double v)
{
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

} // namespace

std::array<std::uint8_t, 4> colormap_lookup(double t, const std::vector<ColorAnchor>& anchors)
{
    constexpr double kTol = 1e-6;
    if (!(t >= -kTol && t <= 1.0 + kTol)) {
        throw InvalidArgument("colormap input " + std::to_string(t) + " outside [0, 1]");
    }
    t = std::clamp(t, 0.0, 1.0);
    std::size_t k = 1;
    while (k + 1 < anchors.size() && t > anchors[k].t) {
        ++k;
    }
    const ColorAnchor& a = anchors[k - 1];
    const ColorAnchor& b = anchors[k];
    const double f = (t - a.t) / (b.t - a.t);
    return {round_u8(a.r + (b.r - a.r) * f), round_u8(a.g + (b.g - a.g) * f), round_u8(a.b + (b.b - a.b) * f), 255};
}

RgbaRaster apply_colormap(const FloatMatrix& norm, const PreprocessConfig& cfg)
{
    cfg.validate();
    RgbaRaster out(norm.cols, norm.rows);
    for (int r = 0; r < norm.rows; ++r) {
        for (int c = 0; c < norm.cols; ++c) {
            const auto rgba = colormap_lookup(norm.at(r, c), cfg.colormap);
            std::copy(rgba.begin(), rgba.end(), out.px(c, r));
        }
    }
    return out;
}

FalseColorImage resize_letterbox(const RgbaRaster& src, int target_w, int target_h)
{
    if (src.width < 1 || src.height < 1) {
        throw InvalidArgument("cannot resize an empty raster");
    }
    if (target_w < 1 || target_h < 1) {
        throw InvalidArgument("target dimensions must be positive");
    }
    const double scale = std::min(static_cast<double>(target_w) / src.width, static_cast<double>(target_h) / src.height);
    const int cw = std::clamp(static_cast<int>(std::floor(src.width * scale + 0.5)), 1, target_w);
    const int ch = std::clamp(static_cast<int>(std::floor(src.height * scale + 0.5)), 1, target_h);

    FalseColorImage img;
    img.raster = RgbaRaster(target_w, target_h);
    img.content = {(target_w - cw) / 2, (target_h - ch) / 2, cw, ch};

    // Half-pixel-center sampling positions, shared by every row/column.
    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int dst, int src_len) {
        std::vector<Tap> out(static_cast<std::size_t>(dst));
        const double ratio = static_cast<double>(src_len) / dst;
        for (int i = 0; i < dst; ++i) {
            const double s = std::clamp((i + 0.5) * ratio - 0.5, 0.0, static_cast<double>(src_len - 1));
            const int i0 = static_cast<int>(std::floor(s));
            out[i] = {i0, std::min(i0 + 1, src_len - 1), s - i0};
        }
        return out;
    };
    const auto xs = taps(cw, src.width);
    const auto ys = taps(ch, src.height);

    for (int y = 0; y < ch; ++y) {
        const Tap& ty = ys[y];
        for (int x = 0; x < cw; ++x) {
            const Tap& tx = xs[x];
            const std::uint8_t* p00 = src.px(tx.i0, ty.i0);
            const std::uint8_t* p01 = src.px(tx.i1, ty.i0);
            const std::uint8_t* p10 = src.px(tx.i0, ty.i1);
            const std::uint8_t* p11 = src.px(tx.i1, ty.i1);
            std::uint8_t* dst = img.raster.px(img.content.x + x, img.content.y + y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] + (p01[c] - p00[c]) * tx.f;
                const double bottom = p10[c] + (p11[c] - p10[c]) * tx.f;
                dst[c] = round_u8(top + (bottom - top) * ty.f);
            }
            dst[3] = 255;
        }
    }
    return img;
}

FalseColorImage preprocess_pipeline(const synth::RangeTimeMap& map, const PreprocessConfig& cfg)
{
    const auto cleaned = mitigate_outliers(map, cfg);
    const auto norm = normalize_minmax(cleaned.map);
    const auto colored = apply_colormap(norm, cfg);
    return resize_letterbox(colored, cfg.target_width, cfg.target_height);
}

} // namespace uwbg::preprocess
