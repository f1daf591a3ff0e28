#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "uwbg/error.hpp"
#include "uwbg/models.hpp"
#include "uwbg/nn/adam.hpp"
#include "uwbg/nn/gradcheck.hpp"
#include "uwbg/nn/model.hpp"
#include "uwbg/rng.hpp"

using namespace uwbg;
using namespace uwbg::nn;

namespace {

ModelConfig tiny()
{
    ModelConfig c;
    c.name = "tiny";
    c.input = {3, 12, 10};
    c.num_classes = 4;
    c.layers = {LayerSpec::conv(3, 4, 3), LayerSpec::of(LayerKind::ReLU), LayerSpec::maxpool(2, 2),
                LayerSpec::depthwise(4, 3, 2), LayerSpec::of(LayerKind::ReLU), LayerSpec::conv(4, 6, 1),
                LayerSpec::of(LayerKind::GlobalAvgPool), LayerSpec::dense(6, 4), LayerSpec::of(LayerKind::SoftmaxCE)};
    return c;
}

Tensor random_input(const ModelConfig& c, std::size_t n, std::uint64_t seed)
{
    Tensor x({n, static_cast<std::size_t>(c.input.channels), static_cast<std::size_t>(c.input.height),
              static_cast<std::size_t>(c.input.width)});
    Rng r(seed);
    for (auto& v : x.values()) v = static_cast<float>(r.uniform());
    return x;
}

int config_error_index(const ModelConfig& c)
{
    try {
        infer_shapes(c);
    } catch (const ConfigError& e) {
        return e.layer_index();
    }
    return -100;
}

} // namespace

TEST_CASE("shape inference agrees with a forward pass")
{
    for (const auto& cfg : {tiny(), models::cnn_mini(), models::cnn_ref(), models::mbn_ref()}) {
        const Model m = models::build_model(cfg, 1);
        ForwardTrace<float> tr;
        m.forward(random_input(cfg, 1, 2), &tr);
        const auto shapes = infer_shapes(cfg);
        REQUIRE(tr.acts.size() == cfg.layers.size());
        for (std::size_t i = 0; i + 1 < cfg.layers.size(); ++i) {
            const auto& a = tr.acts[i + 1];
            CHECK(ActShape{a.dim(1), a.dim(2), a.dim(3)} == shapes[i]);
        }
    }
}

TEST_CASE("config errors name the offending layer")
{
    auto c = tiny();
    c.layers[5] = LayerSpec::conv(5, 6, 1);
    CHECK(config_error_index(c) == 5);

    c = tiny();
    c.layers.erase(c.layers.begin() + 6); // drop the global average pool before dense
    CHECK(config_error_index(c) == 6);

    c = tiny();
    c.layers.pop_back();
    CHECK(config_error_index(c) >= -1);

    c.layers.clear();
    CHECK(config_error_index(c) == -1);

    c = tiny();
    c.layers[7] = LayerSpec::dense(7, 4);
    CHECK(config_error_index(c) == 7);

    c = tiny();
    c.layers[7] = LayerSpec::dense(6, 5); // chains, but the head expects 4 logits
    CHECK(config_error_index(c) == 8);
}

TEST_CASE("ModelConfig JSON round trip")
{
    for (const auto& cfg : {tiny(), models::cnn_ref(), models::mbn_ref()}) {
        const nlohmann::json j = cfg;
        CHECK(j.get<ModelConfig>() == cfg);
    }
    nlohmann::json j = tiny();
    j["dropout"] = 0.5;
    CHECK_THROWS(j.get<ModelConfig>());
}

TEST_CASE("initialization is seeded")
{
    const auto a = models::build_model(tiny(), 5);
    const auto b = models::build_model(tiny(), 5);
    const auto c = models::build_model(tiny(), 6);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
    for (const auto& layer : a.params()) {
        if (layer.size() == 2) {
            CHECK(layer[1] == Tensor(layer[1].shape()));
        }
    }
}

TEST_CASE("checkpoint round trip is bit exact")
{
    test::TempDir dir("ckpt");
    const auto m = models::build_model(tiny(), 9);
    save_checkpoint(m, dir / "m.uwbm");
    const auto back = load_checkpoint(dir / "m.uwbm");
    CHECK(back.config() == m.config());
    CHECK(back.params() == m.params());
    const auto x = random_input(tiny(), 3, 1);
    CHECK(back.forward_probs(x) == m.forward_probs(x));

    auto bytes = encode_checkpoint(m);
    bytes[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    bytes = encode_checkpoint(m);
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    bytes = encode_checkpoint(m);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
}

TEST_CASE("grad_check on small models")
{
    const auto cfg = tiny();
    const auto m = models::build_model(cfg, 3);
    const auto rep = grad_check(m, random_input(cfg, 4, 4), {0, 1, 2, 3});
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.failing_layers().empty());
    for (const auto& l : rep.layers) {
        CHECK(l.checked > 0);
    }

    GradCheckOptions strict;
    strict.tol = 1e-30;
    const auto bad = grad_check(m, random_input(cfg, 4, 4), {0, 1, 2, 3}, strict);
    CHECK_FALSE(bad.passed);
    REQUIRE_FALSE(bad.failing_layers().empty());
    CHECK(bad.failing_layers().front().find("layer") != std::string::npos);

    // zero input, zero weights: everything is still defined
    Model zero(cfg);
    const auto z = grad_check(zero, Tensor({2, 3, 12, 10}), {0, 1});
    CHECK(std::isfinite(z.max_rel_error));
    for (const auto& l : z.layers) {
        CHECK(std::isfinite(l.max_rel_error));
        CHECK(std::isfinite(l.mean_rel_error));
    }
}

TEST_CASE("grad_check on the reference CNN-mini")
{
    const auto cfg = models::cnn_mini();
    const auto m = models::build_model(cfg, 11);
    const auto rep = grad_check(m, random_input(cfg, 4, 12), {0, 5, 10, 15});
    for (const auto& l : rep.layers) {
        INFO(l.name << " max " << l.max_rel_error << " checked " << l.checked);
        CHECK(l.max_rel_error < 1e-4);
    }
    CHECK(rep.passed);
}

TEST_CASE("peak activation matches the analytic estimate")
{
    for (const auto& cfg : {models::cnn_mini(), models::cnn_ref(), models::mbn_ref()}) {
        const auto m = models::build_model(cfg, 1);
        ForwardTrace<float> tr;
        m.forward_probs(random_input(cfg, 1, 3), &tr);
        CHECK(tr.peak_output_bytes == models::estimate_memory(cfg).peak_activation_bytes);
    }
}
