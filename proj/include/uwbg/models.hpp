#pragma once

// Reference architectures, parameter/memory accounting and single-image
// prediction.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "uwbg/nn/model.hpp"
#include "uwbg/preprocess.hpp"

namespace uwbg::models {

using nn::Model;
using nn::ModelConfig;

inline constexpr int kNumSuperclasses = 6;

/// 2 x (conv, relu, maxpool) -> global avg pool -> dense.
ModelConfig cnn_mini();
/// 3 x (conv, relu, maxpool) with 16/32/64 channels -> global avg pool -> dense.
ModelConfig cnn_ref();
/// Stride-2 stem conv, 4 depthwise-separable blocks (width 1.0) -> global avg
/// pool -> dense.
ModelConfig mbn_ref();

/// "cnn-mini", "cnn-ref", "mbn-ref".
std::vector<std::string> reference_names();
ModelConfig reference_config(std::string_view name);

/// Reads a ModelConfig JSON document.
ModelConfig load_model_config(const std::filesystem::path& path);
/// A reference name, or else a path to a JSON config.
ModelConfig resolve_model_config(const std::string& name_or_path);

/// Validated, He-initialized network; weights depend only on (cfg, seed).
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

struct MemoryEstimate {
    std::size_t param_bytes = 0;
    std::size_t peak_activation_bytes = 0; // largest layer output at batch 1
    std::size_t total_bytes = 0;

    friend bool operator==(const MemoryEstimate&, const MemoryEstimate&) = default;
};

void to_json(nlohmann::json& j, const MemoryEstimate& m);
void from_json(const nlohmann::json& j, MemoryEstimate& m);

using nn::count_params;
MemoryEstimate estimate_memory(const ModelConfig& cfg);

/// 0..14 -> index / 3, 15 -> 5 (NO_GESTURE).
int subclass_to_superclass(int subclass);

struct Prediction {
    std::vector<float> probs;
    int subclass = 0;
    int superclass = 0;
    float confidence = 0.0f;
};

/// RGB scaled to [0, 1], alpha dropped, written as CHW into `dst`.
void image_to_chw(const preprocess::FalseColorImage& image, float* dst);
nn::Tensor image_to_tensor(const preprocess::FalseColorImage& image);

Prediction predict(const Model& model, const preprocess::FalseColorImage& image);

} // namespace uwbg::models
