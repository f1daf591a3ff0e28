#include "uwbg/models.hpp"

#include <algorithm>
#include <fstream>

#include "uwbg/error.hpp"
#include "uwbg/synth.hpp"

namespace uwbg::models {

using nn::LayerKind;
using nn::LayerSpec;

namespace {

ModelConfig with_head(std::string name, std::vector<LayerSpec> layers)
{
    layers.push_back(LayerSpec::of(LayerKind::SoftmaxCE));
    return ModelConfig{std::move(name), nn::InputShape{}, std::move(layers), synth::kNumSubclasses};
}

const LayerSpec kRelu = LayerSpec::of(LayerKind::ReLU);
const LayerSpec kGap = LayerSpec::of(LayerKind::GlobalAvgPool);

} // namespace

ModelConfig cnn_mini()
{
    return with_head("cnn-mini", {LayerSpec::conv(3, 8, 3, 2), kRelu, LayerSpec::maxpool(2, 2),
                                  LayerSpec::conv(8, 16, 3), kRelu, LayerSpec::maxpool(2, 2), kGap,
                                  LayerSpec::dense(16, 16)});
}

ModelConfig cnn_ref()
{
    return with_head("cnn-ref", {LayerSpec::conv(3, 16, 3, 2), kRelu, LayerSpec::maxpool(2, 2),
                                 LayerSpec::conv(16, 32, 3), kRelu, LayerSpec::maxpool(2, 2),
                                 LayerSpec::conv(32, 64, 3), kRelu, LayerSpec::maxpool(2, 2), kGap,
                                 LayerSpec::dense(64, 16)});
}

ModelConfig mbn_ref()
{
    std::vector<LayerSpec> layers{LayerSpec::conv(3, 16, 3, 2), kRelu};
    // (in, out, stride) per depthwise-separable block
    const int blocks[4][3] = {{16, 32, 2}, {32, 64, 2}, {64, 64, 2}, {64, 128, 1}};
    for (const auto& b : blocks) {
        layers.push_back(LayerSpec::depthwise(b[0], 3, b[2]));
        layers.push_back(kRelu);
        layers.push_back(LayerSpec::conv(b[0], b[1], 1));
        layers.push_back(kRelu);
    }
    layers.push_back(kGap);
    layers.push_back(LayerSpec::dense(128, 16));
    return with_head("mbn-ref", std::move(layers));
}

std::vector<std::string> reference_names()
{
    return {"cnn-mini", "cnn-ref", "mbn-ref"};
}

ModelConfig reference_config(std::string_view name)
{
    if (name == "cnn-mini") return cnn_mini();
    if (name == "cnn-ref") return cnn_ref();
    if (name == "mbn-ref") return mbn_ref();
    throw InvalidArgument("unknown reference model '" + std::string(name) + "' (cnn-mini, cnn-ref, mbn-ref)");
}

ModelConfig load_model_config(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open model config " + path.string());
    }
    try {
        return nlohmann::json::parse(f).get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(-1, path.string() + ": " + e.what());
    }
}

ModelConfig resolve_model_config(const std::string& name_or_path)
{
    const auto names = reference_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
        return reference_config(name_or_path);
    }
    return load_model_config(name_or_path);
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed)
{
    Model m(cfg);
    m.init(seed);
    return m;
}

void to_json(nlohmann::json& j, const MemoryEstimate& m)
{
    j = nlohmann::json{{"param_bytes", m.param_bytes},
                       {"peak_activation_bytes", m.peak_activation_bytes},
                       {"total_bytes", m.total_bytes}};
}

void from_json(const nlohmann::json& j, MemoryEstimate& m)
{
    m.param_bytes = j.at("param_bytes").get<std::size_t>();
    m.peak_activation_bytes = j.at("peak_activation_bytes").get<std::size_t>();
    m.total_bytes = j.at("total_bytes").get<std::size_t>();
}

MemoryEstimate estimate_memory(const ModelConfig& cfg)
{
    const auto shapes = nn::infer_shapes(cfg);
    MemoryEstimate m;
    m.param_bytes = sizeof(float) * nn::count_params(cfg);
    for (const auto& s : shapes) {
        m.peak_activation_bytes = std::max(m.peak_activation_bytes, sizeof(float) * s.size());
    }
    m.total_bytes = m.param_bytes + m.peak_activation_bytes;
    return m;
}

int subclass_to_superclass(int subclass)
{
    if (subclass < 0 || subclass >= synth::kNumSubclasses) {
        throw InvalidArgument("subclass index " + std::to_string(subclass) + " outside 0..15");
    }
    return subclass == synth::kNoGestureSubclass ? kNumSuperclasses - 1 : subclass / synth::kNumDistances;
}

void image_to_chw(const preprocess::FalseColorImage& image, float* dst)
{
    const std::size_t plane = static_cast<std::size_t>(image.width()) * image.height();
    const std::uint8_t* px = image.raster.pixels.data();
    for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = px[4 * i] / 255.0f;
        dst[plane + i] = px[4 * i + 1] / 255.0f;
        dst[2 * plane + i] = px[4 * i + 2] / 255.0f;
    }
}

nn::Tensor image_to_tensor(const preprocess::FalseColorImage& image)
{
    nn::Tensor t({1, 3, static_cast<std::size_t>(image.height()), static_cast<std::size_t>(image.width())});
    image_to_chw(image, t.data());
    return t;
}

Prediction predict(const Model& model, const preprocess::FalseColorImage& image)
{
    const auto& in = model.config().input;
    if (in.channels != 3 || image.width() != in.width || image.height() != in.height ||
        image.raster.pixels.size() != static_cast<std::size_t>(image.width()) * image.height() * 4) {
        throw ShapeError("model '" + model.config().name + "' expects a " + std::to_string(in.width) + "x" +
                         std::to_string(in.height) + " RGBA image, got " + std::to_string(image.width()) + "x" +
                         std::to_string(image.height()));
    }
    const auto probs = model.forward_probs(image_to_tensor(image));
    Prediction p;
    p.probs.assign(probs.values().begin(), probs.values().end());
    const auto best = std::max_element(p.probs.begin(), p.probs.end());
    p.subclass = static_cast<int>(best - p.probs.begin());
    p.confidence = *best;
    p.superclass = model.config().num_classes == synth::kNumSubclasses ? subclass_to_superclass(p.subclass) : 0;
    return p;
}

} // namespace uwbg::models
