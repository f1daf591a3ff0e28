#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "uwbg/error.hpp"
#include "uwbg/models.hpp"
#include "uwbg/nn/adam.hpp"
#include "uwbg/rng.hpp"

using namespace uwbg;
using namespace uwbg::models;

namespace {

// (k*k*in + 1) * out per conv, (k*k + 1) * c per depthwise, (in + 1) * out per dense.
std::size_t conv_p(std::size_t in, std::size_t out, std::size_t k) { return (k * k * in + 1) * out; }
std::size_t dw_p(std::size_t c, std::size_t k) { return (k * k + 1) * c; }

preprocess::FalseColorImage sample_image(int subclass, std::uint64_t seed)
{
    return preprocess::preprocess_pipeline(synth::make_sample(synth::SynthConfig{}, subclass, seed),
                                           preprocess::PreprocessConfig{});
}

} // namespace

TEST_CASE("reference parameter counts match closed-form sums")
{
    const std::size_t cnn_ref_expected = conv_p(3, 16, 3) + conv_p(16, 32, 3) + conv_p(32, 64, 3) + conv_p(64, 16, 1);
    CHECK(cnn_ref_expected == 24624);
    CHECK(count_params(cnn_ref()) == cnn_ref_expected);
    CHECK(build_model(cnn_ref(), 0).param_count() == cnn_ref_expected);

    const std::size_t mbn_expected = conv_p(3, 16, 3) + dw_p(16, 3) + conv_p(16, 32, 1) + dw_p(32, 3) +
                                     conv_p(32, 64, 1) + dw_p(64, 3) + conv_p(64, 64, 1) + dw_p(64, 3) +
                                     conv_p(64, 128, 1) + conv_p(128, 16, 1);
    CHECK(mbn_expected == 19408);
    CHECK(count_params(mbn_ref()) == mbn_expected);

    CHECK(count_params(cnn_mini()) == conv_p(3, 8, 3) + conv_p(8, 16, 3) + conv_p(16, 16, 1));
}

TEST_CASE("memory estimates")
{
    const auto c = estimate_memory(cnn_ref());
    const auto m = estimate_memory(mbn_ref());
    CHECK(c.param_bytes == 4 * count_params(cnn_ref()));
    CHECK(c.total_bytes == c.param_bytes + c.peak_activation_bytes);
    // stride-2 stem: 16 x 100 x 80 floats
    CHECK(c.peak_activation_bytes == 16 * 100 * 80 * 4);
    CHECK(m.param_bytes < c.param_bytes);
    CHECK(m.total_bytes < c.total_bytes);

    ModelConfig empty = cnn_ref();
    empty.layers.clear();
    CHECK_THROWS_AS(estimate_memory(empty), ConfigError);
    CHECK_THROWS_AS(count_params(empty), ConfigError);
}

TEST_CASE("reference configs by name")
{
    for (const auto& n : reference_names()) {
        CHECK(reference_config(n).name == n);
        CHECK(resolve_model_config(n) == reference_config(n));
    }
    CHECK_THROWS_AS(reference_config("resnet"), InvalidArgument);

    test::TempDir dir("mcfg");
    std::ofstream(dir / "m.json") << nlohmann::json(mbn_ref()).dump();
    CHECK(resolve_model_config((dir / "m.json").string()) == mbn_ref());
}

TEST_CASE("subclass_to_superclass")
{
    CHECK(subclass_to_superclass(1) == 0);
    CHECK(subclass_to_superclass(15) == 5);
    std::set<int> outs;
    for (int g = 0; g < 5; ++g) {
        for (int d = 0; d < 3; ++d) {
            CHECK(subclass_to_superclass(g * 3 + d) == g);
        }
    }
    for (int s = 0; s < 16; ++s) {
        const int v = subclass_to_superclass(s);
        CHECK(v >= 0);
        CHECK(v <= 5);
        outs.insert(v);
    }
    CHECK(outs.size() == 6);
    CHECK_THROWS_AS(subclass_to_superclass(16), InvalidArgument);
    CHECK_THROWS_AS(subclass_to_superclass(-1), InvalidArgument);
}

TEST_CASE("predict")
{
    const auto model = build_model(cnn_ref(), 4);
    for (int sc : {0, 7, 15}) {
        const auto p = predict(model, sample_image(sc, 3));
        REQUIRE(p.probs.size() == 16);
        const double sum = std::accumulate(p.probs.begin(), p.probs.end(), 0.0);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(p.confidence == *std::max_element(p.probs.begin(), p.probs.end()));
        CHECK(p.superclass == subclass_to_superclass(p.subclass));
    }

    preprocess::FalseColorImage blank;
    blank.raster = preprocess::RgbaRaster(159, 200);
    const auto p = predict(model, blank);
    for (float v : p.probs) CHECK(std::isfinite(v));
    CHECK(std::accumulate(p.probs.begin(), p.probs.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));

    preprocess::FalseColorImage wrong;
    wrong.raster = preprocess::RgbaRaster(200, 159);
    CHECK_THROWS_AS(predict(model, wrong), ShapeError);
}

TEST_CASE("checkpoint round trip preserves predictions")
{
    test::TempDir dir("pred");
    const auto model = build_model(mbn_ref(), 8);
    nn::save_checkpoint(model, dir / "m.uwbm");
    const auto back = nn::load_checkpoint(dir / "m.uwbm");
    const auto img = sample_image(9, 1);
    const auto a = predict(model, img);
    const auto b = predict(back, img);
    CHECK(a.probs == b.probs);
    CHECK(a.subclass == b.subclass);
}

TEST_CASE("50 Adam steps halve the CNN-mini training loss")
{
    const auto cfg = cnn_mini();
    auto model = build_model(cfg, 2);
    nn::Tensor x({32, 3, 200, 159});
    std::vector<int> targets;
    for (int i = 0; i < 32; ++i) {
        image_to_chw(sample_image(i % 16, 1000 + static_cast<std::uint64_t>(i)), x.data() + i * 3 * 200 * 159);
        targets.push_back(i % 16);
    }
    nn::AdamState st(nn::AdamConfig{2e-2});
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
        nn::ParamSet<float> grads;
        const double loss = model.loss_and_grad(x, targets, grads);
        REQUIRE(std::isfinite(loss));
        if (step == 0) first = loss;
        std::vector<nn::Tensor*> p;
        std::vector<const nn::Tensor*> g;
        for (std::size_t l = 0; l < grads.size(); ++l) {
            for (std::size_t k = 0; k < grads[l].size(); ++k) {
                p.push_back(&model.params()[l][k]);
                g.push_back(&grads[l][k]);
            }
        }
        nn::adam_step(p, g, st);
    }
    last = model.loss(x, targets);
    INFO("first " << first << " last " << last);
    CHECK(last <= 0.5 * first);
}
