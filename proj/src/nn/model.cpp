#include "uwbg/nn/model.hpp"

#include <cmath>

#include "uwbg/error.hpp"
#include "uwbg/rng.hpp"

namespace uwbg::nn {

std::string_view layer_kind_name(LayerKind k)
{
    switch (k) {
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::DepthwiseConv2D: return "depthwise_conv2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
    case LayerKind::SoftmaxCE: return "softmax_ce";
    }
    return "?";
}

LayerKind parse_layer_kind(std::string_view name)
{
    for (auto k : {LayerKind::Conv2D, LayerKind::DepthwiseConv2D, LayerKind::ReLU, LayerKind::MaxPool2D,
                   LayerKind::GlobalAvgPool, LayerKind::Dense, LayerKind::SoftmaxCE}) {
        if (layer_kind_name(k) == name) {
            return k;
        }
    }
    throw InvalidArgument("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv(int in, int out, int k, int stride, int pad)
{
    return {LayerKind::Conv2D, in, out, k, stride, pad < 0 ? k / 2 : pad, 0};
}

LayerSpec LayerSpec::depthwise(int channels, int k, int stride, int pad)
{
    return {LayerKind::DepthwiseConv2D, channels, channels, k, stride, pad < 0 ? k / 2 : pad, 0};
}

LayerSpec LayerSpec::maxpool(int k, int stride)
{
    return {LayerKind::MaxPool2D, 0, 0, k, stride, 0, 0};
}

LayerSpec LayerSpec::dense(int in_features, int units)
{
    return {LayerKind::Dense, in_features, 0, 0, 1, 0, units};
}

LayerSpec LayerSpec::of(LayerKind kind)
{
    LayerSpec s;
    s.kind = kind;
    return s;
}

void to_json(nlohmann::json& j, const LayerSpec& s)
{
    j = nlohmann::json{{"kind", layer_kind_name(s.kind)}};
    switch (s.kind) {
    case LayerKind::Conv2D:
        j["in_channels"] = s.in_channels;
        j["out_channels"] = s.out_channels;
        j["kernel"] = s.kernel;
        j["stride"] = s.stride;
        j["padding"] = s.padding;
        break;
    case LayerKind::DepthwiseConv2D:
        j["channels"] = s.in_channels;
        j["kernel"] = s.kernel;
        j["stride"] = s.stride;
        j["padding"] = s.padding;
        break;
    case LayerKind::MaxPool2D:
        j["kernel"] = s.kernel;
        j["stride"] = s.stride;
        break;
    case LayerKind::Dense:
        j["in_features"] = s.in_channels;
        j["units"] = s.units;
        break;
    default: break;
    }
}

void from_json(const nlohmann::json& j, LayerSpec& s)
{
    s = LayerSpec{};
    s.kind = parse_layer_kind(j.at("kind").get<std::string>());
    bool pad_given = false;
    for (const auto& [key, value] : j.items()) {
        const auto bad = [&] {
            return InvalidArgument("key '" + key + "' is not valid for layer kind " +
                                   std::string(layer_kind_name(s.kind)));
        };
        if (key == "kind") continue;
        const int v = value.get<int>();
        switch (s.kind) {
        case LayerKind::Conv2D:
            if (key == "in_channels") s.in_channels = v;
            else if (key == "out_channels") s.out_channels = v;
            else if (key == "kernel") s.kernel = v;
            else if (key == "stride") s.stride = v;
            else if (key == "padding") { s.padding = v; pad_given = true; }
            else throw bad();
            break;
        case LayerKind::DepthwiseConv2D:
            if (key == "channels") s.in_channels = s.out_channels = v;
            else if (key == "kernel") s.kernel = v;
            else if (key == "stride") s.stride = v;
            else if (key == "padding") { s.padding = v; pad_given = true; }
            else throw bad();
            break;
        case LayerKind::MaxPool2D:
            if (key == "kernel") s.kernel = v;
            else if (key == "stride") s.stride = v;
            else throw bad();
            break;
        case LayerKind::Dense:
            if (key == "in_features") s.in_channels = v;
            else if (key == "units") s.units = v;
            else throw bad();
            break;
        default: throw bad();
        }
    }
    if (!pad_given && (s.kind == LayerKind::Conv2D || s.kind == LayerKind::DepthwiseConv2D)) {
        s.padding = s.kernel / 2;
    }
    if (s.kind == LayerKind::MaxPool2D && !j.contains("stride")) {
        s.stride = s.kernel;
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c)
{
    j = nlohmann::json{{"name", c.name},
                       {"input", {{"channels", c.input.channels}, {"height", c.input.height}, {"width", c.input.width}}},
                       {"num_classes", c.num_classes},
                       {"layers", c.layers}};
}

void from_json(const nlohmann::json& j, ModelConfig& c)
{
    c = ModelConfig{};
    for (const auto& [key, value] : j.items()) {
        if (key == "name") c.name = value.get<std::string>();
        else if (key == "num_classes") c.num_classes = value.get<int>();
        else if (key == "layers") c.layers = value.get<std::vector<LayerSpec>>();
        else if (key == "input") {
            for (const auto& [k, v] : value.items()) {
                if (k == "channels") c.input.channels = v.get<int>();
                else if (k == "height") c.input.height = v.get<int>();
                else if (k == "width") c.input.width = v.get<int>();
                else throw InvalidArgument("unknown model input key '" + k + "'");
            }
        }
        else throw InvalidArgument("unknown model config key '" + key + "'");
    }
}

namespace {

std::string shape_str(const ActShape& s)
{
    return "[" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

ConfigError layer_error(std::size_t i, const LayerSpec& spec, const std::string& msg)
{
    return ConfigError(static_cast<int>(i),
                       "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(spec.kind)) + "): " + msg);
}

} // namespace

std::vector<ActShape> infer_shapes(const ModelConfig& cfg)
{
    if (cfg.input.channels < 1 || cfg.input.height < 1 || cfg.input.width < 1) {
        throw ConfigError(-1, "input dimensions must be positive");
    }
    if (cfg.layers.empty()) {
        throw ConfigError(-1, "model has no layers and therefore no softmax_ce head");
    }
    if (cfg.num_classes < 1) {
        throw ConfigError(-1, "num_classes must be positive");
    }
    ActShape cur{static_cast<std::size_t>(cfg.input.channels), static_cast<std::size_t>(cfg.input.height),
                 static_cast<std::size_t>(cfg.input.width)};
    std::vector<ActShape> out;
    out.reserve(cfg.layers.size());
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerSpec& s = cfg.layers[i];
        const bool flat = cur.h == 1 && cur.w == 1;
        switch (s.kind) {
        case LayerKind::Conv2D:
        case LayerKind::DepthwiseConv2D: {
            const bool dw = s.kind == LayerKind::DepthwiseConv2D;
            if (s.in_channels != static_cast<int>(cur.c)) {
                throw layer_error(i, s, "expects " + std::to_string(s.in_channels) + " input channels, gets " +
                                            shape_str(cur));
            }
            if (dw && s.out_channels != s.in_channels) {
                throw layer_error(i, s, "depthwise output channels must equal input channels");
            }
            if (s.out_channels < 1 || s.kernel < 1 || s.stride < 1 || s.padding < 0) {
                throw layer_error(i, s, "needs out_channels, kernel, stride >= 1 and padding >= 0");
            }
            const std::size_t ph = cur.h + 2 * static_cast<std::size_t>(s.padding);
            const std::size_t pw = cur.w + 2 * static_cast<std::size_t>(s.padding);
            if (static_cast<std::size_t>(s.kernel) > ph || static_cast<std::size_t>(s.kernel) > pw) {
                throw layer_error(i, s, "kernel " + std::to_string(s.kernel) + " larger than padded input " +
                                            shape_str(cur));
            }
            cur = {static_cast<std::size_t>(s.out_channels), (ph - s.kernel) / s.stride + 1,
                   (pw - s.kernel) / s.stride + 1};
            break;
        }
        case LayerKind::ReLU: break;
        case LayerKind::MaxPool2D:
            if (s.kernel < 1 || s.stride < 1) {
                throw layer_error(i, s, "needs kernel and stride >= 1");
            }
            if (static_cast<std::size_t>(s.kernel) > cur.h || static_cast<std::size_t>(s.kernel) > cur.w) {
                throw layer_error(i, s, "kernel " + std::to_string(s.kernel) + " larger than input " + shape_str(cur));
            }
            cur = {cur.c, (cur.h - s.kernel) / s.stride + 1, (cur.w - s.kernel) / s.stride + 1};
            break;
        case LayerKind::GlobalAvgPool: cur = {cur.c, 1, 1}; break;
        case LayerKind::Dense:
            if (!flat) {
                throw layer_error(i, s, "needs a flat input, got " + shape_str(cur) + " (insert global_avg_pool)");
            }
            if (s.in_channels != 0 && s.in_channels != static_cast<int>(cur.c)) {
                throw layer_error(i, s, "expects " + std::to_string(s.in_channels) + " input features, gets " +
                                            shape_str(cur));
            }
            if (s.units < 1) {
                throw layer_error(i, s, "needs units >= 1");
            }
            cur = {static_cast<std::size_t>(s.units), 1, 1};
            break;
        case LayerKind::SoftmaxCE:
            if (i + 1 != cfg.layers.size()) {
                throw layer_error(i, s, "softmax_ce head must be the final layer");
            }
            if (!flat || cur.c != static_cast<std::size_t>(cfg.num_classes)) {
                throw layer_error(i, s, "head expects " + std::to_string(cfg.num_classes) + " logits, gets " +
                                            shape_str(cur));
            }
            break;
        }
        out.push_back(cur);
    }
    if (cfg.layers.back().kind != LayerKind::SoftmaxCE) {
        throw layer_error(cfg.layers.size() - 1, cfg.layers.back(), "final layer must be the softmax_ce head");
    }
    return out;
}

std::vector<Shape> param_shapes(const LayerSpec& spec, const ActShape& in)
{
    const auto k = static_cast<std::size_t>(spec.kernel);
    switch (spec.kind) {
    case LayerKind::Conv2D:
        return {{static_cast<std::size_t>(spec.out_channels), in.c, k, k}, {static_cast<std::size_t>(spec.out_channels)}};
    case LayerKind::DepthwiseConv2D: return {{in.c, 1, k, k}, {in.c}};
    case LayerKind::Dense:
        return {{in.size(), static_cast<std::size_t>(spec.units)}, {static_cast<std::size_t>(spec.units)}};
    default: return {};
    }
}

std::size_t count_params(const ModelConfig& cfg)
{
    const auto shapes = infer_shapes(cfg);
    ActShape in{static_cast<std::size_t>(cfg.input.channels), static_cast<std::size_t>(cfg.input.height),
                static_cast<std::size_t>(cfg.input.width)};
    std::size_t total = 0;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        for (const auto& s : param_shapes(cfg.layers[i], in)) {
            total += element_count(s);
        }
        in = shapes[i];
    }
    return total;
}

template <typename T>
BasicModel<T>::BasicModel(ModelConfig cfg) : config_(std::move(cfg)), shapes_(infer_shapes(config_))
{
    ActShape in{static_cast<std::size_t>(config_.input.channels), static_cast<std::size_t>(config_.input.height),
                static_cast<std::size_t>(config_.input.width)};
    params_.resize(config_.layers.size());
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        for (auto& s : param_shapes(config_.layers[i], in)) {
            params_[i].emplace_back(std::move(s));
        }
        in = shapes_[i];
    }
}

template <typename T>
void BasicModel<T>::init(std::uint64_t seed)
{
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].empty()) {
            continue;
        }
        auto& w = params_[i][0];
        const std::size_t fan_in = w.size() / (config_.layers[i].kind == LayerKind::Dense ? w.dim(1) : w.dim(0));
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : w.values()) {
            v = static_cast<T>(rng.uniform(-bound, bound));
        }
        params_[i][1].fill(T{});
    }
}

template <typename T>
std::size_t BasicModel<T>::param_count() const
{
    std::size_t n = 0;
    for (const auto& layer : params_) {
        for (const auto& p : layer) {
            n += p.size();
        }
    }
    return n;
}

template <typename T>
void BasicModel<T>::check_input(const BasicTensor<T>& x) const
{
    const auto& in = config_.input;
    if (x.rank() != 4 || x.dim(0) < 1 || x.dim(1) != static_cast<std::size_t>(in.channels) ||
        x.dim(2) != static_cast<std::size_t>(in.height) || x.dim(3) != static_cast<std::size_t>(in.width)) {
        throw ShapeError("model '" + config_.name + "' expects [N," + std::to_string(in.channels) + "," +
                         std::to_string(in.height) + "," + std::to_string(in.width) + "] input, got " +
                         to_string(x.shape()));
    }
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline void fnv_mix(std::uint64_t& h, std::uint64_t v)
{
    h = (h ^ v) * kFnvPrime;
}

} // namespace

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& x, ForwardTrace<T>* trace) const
{
    check_input(x);
    if (trace) {
        *trace = ForwardTrace<T>{};
        trace->acts.reserve(config_.layers.size());
        trace->argmax.resize(config_.layers.size());
        trace->kink_signature = kFnvOffset;
    }
    BasicTensor<T> cur = x;
    std::size_t peak = 0;
    for (std::size_t i = 0; i + 1 < config_.layers.size(); ++i) {
        const LayerSpec& s = config_.layers[i];
        const auto& p = params_[i];
        BasicTensor<T> next;
        switch (s.kind) {
        case LayerKind::Conv2D: next = conv2d(cur, p[0], p[1], s.stride, s.padding); break;
        case LayerKind::DepthwiseConv2D: next = depthwise_conv2d(cur, p[0], p[1], s.stride, s.padding); break;
        case LayerKind::ReLU:
            next = relu(cur);
            if (trace) {
                std::uint64_t word = 0;
                for (std::size_t k = 0; k < cur.size(); ++k) {
                    word = (word << 1) | (cur[k] > T{} ? 1u : 0u);
                    if (k % 64 == 63) fnv_mix(trace->kink_signature, word);
                }
                fnv_mix(trace->kink_signature, word);
            }
            break;
        case LayerKind::MaxPool2D: {
            auto r = maxpool2d(cur, s.kernel, s.stride);
            next = std::move(r.output);
            if (trace) {
                for (auto a : r.argmax) fnv_mix(trace->kink_signature, a);
                trace->argmax[i] = std::move(r.argmax);
            }
            break;
        }
        case LayerKind::GlobalAvgPool: next = global_avg_pool(cur); break;
        case LayerKind::Dense: next = dense(cur, p[0], p[1]); break;
        case LayerKind::SoftmaxCE: break;
        }
        peak = std::max(peak, next.size() * sizeof(T));
        if (trace) {
            trace->acts.push_back(std::move(cur));
        }
        cur = std::move(next);
    }
    if (trace) {
        trace->acts.push_back(cur);
        trace->peak_output_bytes = peak;
    }
    return cur;
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_probs(const BasicTensor<T>& x, ForwardTrace<T>* trace) const
{
    auto probs = softmax(forward(x, trace));
    if (trace) {
        trace->peak_output_bytes = std::max(trace->peak_output_bytes, probs.size() * sizeof(T));
    }
    return probs;
}

template <typename T>
ParamSet<T> BasicModel<T>::backward(const ForwardTrace<T>& trace, const BasicTensor<T>& d_logits,
                                    BasicTensor<T>* input_grad) const
{
    const std::size_t head = config_.layers.size() - 1;
    if (trace.acts.size() != head + 1) {
        throw InvalidArgument("forward trace does not belong to this model");
    }
    if (d_logits.shape() != trace.acts.back().shape()) {
        throw ShapeError("logit gradient " + to_string(d_logits.shape()) + " vs logits " +
                         to_string(trace.acts.back().shape()));
    }
    ParamSet<T> grads(params_.size());
    BasicTensor<T> g = d_logits;
    for (std::size_t i = head; i-- > 0;) {
        const LayerSpec& s = config_.layers[i];
        const auto& in = trace.acts[i];
        const bool want_in = i > 0 || input_grad != nullptr;
        switch (s.kind) {
        case LayerKind::Conv2D: {
            auto r = conv2d_grad(in, params_[i][0], g, s.stride, s.padding, want_in);
            grads[i] = {std::move(r.d_weights), std::move(r.d_bias)};
            g = std::move(r.d_input);
            break;
        }
        case LayerKind::DepthwiseConv2D: {
            auto r = depthwise_conv2d_grad(in, params_[i][0], g, s.stride, s.padding, want_in);
            grads[i] = {std::move(r.d_weights), std::move(r.d_bias)};
            g = std::move(r.d_input);
            break;
        }
        case LayerKind::ReLU: g = relu_grad(in, g); break;
        case LayerKind::MaxPool2D: g = maxpool2d_grad(in.shape(), trace.argmax[i], g); break;
        case LayerKind::GlobalAvgPool: g = global_avg_pool_grad(in.shape(), g); break;
        case LayerKind::Dense: {
            auto r = dense_grad(in, params_[i][0], g, want_in);
            grads[i] = {std::move(r.d_weights), std::move(r.d_bias)};
            g = std::move(r.d_input);
            break;
        }
        case LayerKind::SoftmaxCE: break;
        }
    }
    if (input_grad) {
        *input_grad = std::move(g);
    }
    return grads;
}

template <typename T>
double BasicModel<T>::loss_and_grad(const BasicTensor<T>& x, const std::vector<int>& targets, ParamSet<T>& grads) const
{
    ForwardTrace<T> trace;
    const auto logits = forward(x, &trace);
    const auto ce = softmax_cross_entropy(logits, targets);
    grads = backward(trace, ce.d_logits);
    return ce.loss;
}

template <typename T>
double BasicModel<T>::loss(const BasicTensor<T>& x, const std::vector<int>& targets,
                           std::uint64_t* kink_signature) const
{
    if (kink_signature) {
        ForwardTrace<T> trace;
        const auto logits = forward(x, &trace);
        *kink_signature = trace.kink_signature;
        return softmax_cross_entropy(logits, targets).loss;
    }
    return softmax_cross_entropy(forward(x), targets).loss;
}

template class BasicModel<float>;
template class BasicModel<double>;

} // namespace uwbg::nn
