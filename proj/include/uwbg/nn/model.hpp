#pragma once

// Layer stacks built from a declarative config, with forward/backward passes
// and checkpoint I/O.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uwbg/nn/ops.hpp"
#include "uwbg/nn/tensor.hpp"

namespace uwbg::nn {

enum class LayerKind { Conv2D, DepthwiseConv2D, ReLU, MaxPool2D, GlobalAvgPool, Dense, SoftmaxCE };

std::string_view layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(std::string_view name);

/// Kind-specific fields:
///   Conv2D          in_channels, out_channels, kernel, stride, padding
///   DepthwiseConv2D in_channels (= out), kernel, stride, padding
///   MaxPool2D       kernel, stride
///   Dense           in_channels (input features; 0 = infer), units
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    int units = 0;

    static LayerSpec conv(int in, int out, int k, int stride = 1, int pad = -1);
    static LayerSpec depthwise(int channels, int k, int stride = 1, int pad = -1);
    static LayerSpec maxpool(int k, int stride);
    static LayerSpec dense(int in_features, int units);
    static LayerSpec of(LayerKind kind);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

void to_json(nlohmann::json& j, const LayerSpec& s);
void from_json(const nlohmann::json& j, LayerSpec& s);

struct InputShape {
    int channels = 3;
    int height = 200;
    int width = 159;

    friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct ModelConfig {
    std::string name;
    InputShape input;
    std::vector<LayerSpec> layers;
    int num_classes = 16;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Rejects unknown keys.
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Per-sample activation shape (channels, height, width).
struct ActShape {
    std::size_t c = 0, h = 0, w = 0;

    std::size_t size() const noexcept { return c * h * w; }
    friend bool operator==(const ActShape&, const ActShape&) = default;
};

/// Output shape of every layer. Throws ConfigError naming the first layer
/// whose input does not chain, or -1-indexed errors for a missing head.
std::vector<ActShape> infer_shapes(const ModelConfig& cfg);

/// Parameter tensor shapes of one layer given its input shape.
std::vector<Shape> param_shapes(const LayerSpec& spec, const ActShape& in);

std::size_t count_params(const ModelConfig& cfg);

template <typename T>
using ParamSet = std::vector<std::vector<BasicTensor<T>>>;

template <typename T>
struct ForwardTrace {
    /// acts[i] is the input to layer i; the last entry holds the logits.
    std::vector<BasicTensor<T>> acts;
    std::vector<std::vector<std::uint32_t>> argmax;
    /// Hash of every ReLU on/off decision and pool argmax. Two passes with
    /// equal signatures lie in the same piecewise-smooth region.
    std::uint64_t kink_signature = 0;
    /// Largest single layer output produced, in bytes.
    std::size_t peak_output_bytes = 0;
};

/// A built network. Parameters are mutable for training; forward passes are
/// const and safe to run concurrently.
template <typename T>
class BasicModel {
public:
    /// Validates the config and allocates zeroed parameters.
    explicit BasicModel(ModelConfig cfg);

    /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    void init(std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<ActShape>& shapes() const noexcept { return shapes_; }
    ParamSet<T>& params() noexcept { return params_; }
    const ParamSet<T>& params() const noexcept { return params_; }
    std::size_t param_count() const;

    /// Logits for an NCHW batch. `trace` (optional) keeps what backward needs.
    BasicTensor<T> forward(const BasicTensor<T>& x, ForwardTrace<T>* trace = nullptr) const;

    /// Softmax probabilities; the head's output counts toward the peak.
    BasicTensor<T> forward_probs(const BasicTensor<T>& x, ForwardTrace<T>* trace = nullptr) const;

    /// Parameter gradients from d(loss)/d(logits). Returns d(loss)/d(input)
    /// when `input_grad` is non-null.
    ParamSet<T> backward(const ForwardTrace<T>& trace, const BasicTensor<T>& d_logits,
                         BasicTensor<T>* input_grad = nullptr) const;

    /// Mean softmax cross-entropy and its gradients.
    double loss_and_grad(const BasicTensor<T>& x, const std::vector<int>& targets, ParamSet<T>& grads) const;
    double loss(const BasicTensor<T>& x, const std::vector<int>& targets, std::uint64_t* kink_signature = nullptr) const;

    template <typename U>
    BasicModel<U> cast() const
    {
        BasicModel<U> out(config_);
        for (std::size_t l = 0; l < params_.size(); ++l) {
            for (std::size_t p = 0; p < params_[l].size(); ++p) {
                out.params()[l][p] = params_[l][p].template cast<U>();
            }
        }
        return out;
    }

private:
    void check_input(const BasicTensor<T>& x) const;

    ModelConfig config_;
    std::vector<ActShape> shapes_;
    ParamSet<T> params_;
};

using Model = BasicModel<float>;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

} // namespace uwbg::nn
