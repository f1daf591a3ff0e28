#include <doctest.h>

#include <cmath>
#include <numeric>

#include "uwbg/error.hpp"
#include "uwbg/nn/adam.hpp"
#include "uwbg/nn/gradcheck.hpp"
#include "uwbg/nn/ops.hpp"
#include "uwbg/rng.hpp"

using namespace uwbg;
using namespace uwbg::nn;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed)
{
    Tensor t(std::move(s));
    Rng r(seed);
    for (auto& v : t.values()) v = static_cast<float>(r.uniform(-1, 1));
    return t;
}

} // namespace

TEST_CASE("conv2d basics")
{
    const auto x = random_tensor({2, 3, 5, 4}, 1);
    Tensor w({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0f;
    CHECK(conv2d(x, w, Tensor({3}), 1, 0) == x);

    const Tensor ones({1, 1, 3, 3}, 1.0f);
    const auto y = conv2d(ones, Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}), 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 9.0f);

    // out = floor((in + 2p - k) / s) + 1
    const auto z = conv2d(random_tensor({1, 3, 9, 8}, 2), random_tensor({5, 3, 3, 3}, 3), Tensor({5}), 2, 1);
    CHECK(z.shape() == Shape{1, 5, 5, 4});

    CHECK_THROWS_AS(conv2d(x, random_tensor({4, 2, 3, 3}, 4), Tensor({4}), 1, 1), ShapeError);
    CHECK_THROWS_AS(conv2d(ones, random_tensor({1, 1, 5, 5}, 4), Tensor({1}), 1, 0), ShapeError);
}

TEST_CASE("conv2d matches a direct loop")
{
    const auto x = random_tensor({2, 3, 7, 6}, 5);
    const auto w = random_tensor({4, 3, 3, 3}, 6);
    const auto b = random_tensor({4}, 7);
    const int s = 2, p = 1;
    const auto y = conv2d(x, w, b, s, p);
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t o = 0; o < 4; ++o) {
            for (std::size_t i = 0; i < y.dim(2); ++i) {
                for (std::size_t j = 0; j < y.dim(3); ++j) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < 3; ++c) {
                        for (int u = 0; u < 3; ++u) {
                            for (int v = 0; v < 3; ++v) {
                                const int r = static_cast<int>(i) * s - p + u;
                                const int q = static_cast<int>(j) * s - p + v;
                                if (r < 0 || q < 0 || r >= 7 || q >= 6) continue;
                                acc += static_cast<double>(x.at(n, c, r, q)) * w.at(o, c, u, v);
                            }
                        }
                    }
                    REQUIRE(y.at(n, o, i, j) == doctest::Approx(acc).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("depthwise separable")
{
    CHECK(depthwise_separable_param_count(32, 64, 3) == 288 + 32 + 2048 + 64);
    CHECK(depthwise_separable_param_count(32, 64, 3) == 2432);
    CHECK(conv2d_param_count(32, 64, 3) == 18496);

    const auto x = random_tensor({2, 4, 6, 5}, 8);
    SeparableParams<float> p{Tensor({4, 1, 3, 3}), Tensor({4}), Tensor({4, 4, 1, 1}), Tensor({4})};
    for (int c = 0; c < 4; ++c) {
        p.dw_weights.at(c, 0, 1, 1) = 1.0f;
        p.pw_weights.at(c, c, 0, 0) = 1.0f;
    }
    CHECK(depthwise_separable(x, p, 1) == x);

    p.pw_weights = Tensor({4, 3, 1, 1});
    CHECK_THROWS_AS(depthwise_separable(x, p, 1), ShapeError);
}

TEST_CASE("maxpool2d")
{
    const Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    const auto r = maxpool2d(x, 2, 2);
    CHECK(r.output[0] == 4.0f);

    const Tensor c({1, 1, 4, 4}, 3.0f);
    const auto rc = maxpool2d(c, 2, 2);
    CHECK(rc.output == Tensor({1, 1, 2, 2}, 3.0f));
    const auto g = maxpool2d_grad(c.shape(), rc.argmax, Tensor({1, 1, 2, 2}, 1.0f));
    // first row-major element of each window
    const std::vector<float> expect{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    CHECK(g.storage() == expect);

    CHECK(maxpool2d(random_tensor({1, 2, 7, 5}, 1), 3, 2).output.shape() == Shape{1, 2, 3, 2});
    CHECK_THROWS_AS(maxpool2d(x, 3, 1), ShapeError);
}

TEST_CASE("relu")
{
    const Tensor x({3}, std::vector<float>{-1, 0, 2});
    CHECK(relu(x).storage() == std::vector<float>{0, 0, 2});
    const auto g = relu_grad(x, Tensor({3}, std::vector<float>{5, 5, 5}));
    CHECK(g.storage() == std::vector<float>{0, 0, 5});
}

TEST_CASE("dense")
{
    const auto x = random_tensor({3, 4, 1, 1}, 9);
    Tensor eye({4, 4});
    for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i * 4 + i)] = 1.0f;
    CHECK(dense(x, eye, Tensor({4})).storage() == x.storage());

    // W is [in, out] row-major, y = x W: [1,2] [[1,1],[0,1]] = [1,3]
    const Tensor v({1, 2, 1, 1}, std::vector<float>{1, 2});
    const Tensor w({2, 2}, std::vector<float>{1, 1, 0, 1});
    CHECK(dense(v, w, Tensor({2})).storage() == std::vector<float>{1, 3});
    CHECK_THROWS_AS(dense(v, Tensor({3, 2}), Tensor({2})), ShapeError);
}

TEST_CASE("global average pool")
{
    const Tensor x({1, 2, 1, 2}, std::vector<float>{1, 3, 2, 6});
    CHECK(global_avg_pool(x).storage() == std::vector<float>{2, 4});
}

TEST_CASE("softmax cross-entropy")
{
    const Tensor z({1, 2}, std::vector<float>{0, 0});
    const auto r = softmax_cross_entropy(z, {0});
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-7));

    const auto big = random_tensor({4, 16}, 3);
    Tensor scaled = big;
    for (auto& v : scaled.values()) v *= 50.0f;
    const auto s = softmax_cross_entropy(scaled, {0, 5, 9, 15});
    CHECK(std::isfinite(s.loss));
    for (std::size_t n = 0; n < 4; ++n) {
        double ps = 0.0, gs = 0.0;
        for (std::size_t k = 0; k < 16; ++k) {
            ps += s.probs[n * 16 + k];
            gs += s.d_logits[n * 16 + k];
        }
        CHECK(ps == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::abs(gs) < 1e-6);
    }
    CHECK_THROWS_AS(softmax_cross_entropy(z, {2}), InvalidArgument);
    CHECK_THROWS_AS(softmax_cross_entropy(z, {-1}), InvalidArgument);
}

TEST_CASE("adam")
{
    Tensor p({1}, 0.0f);
    const Tensor g({1}, 1.0f);
    AdamState st;
    adam_step({&p}, {&g}, st);
    // m_hat = 1, v_hat = 1: step = -lr / (1 + eps)
    CHECK(p[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-6));
    CHECK(st.t == 1);

    Tensor q = random_tensor({5}, 4);
    const Tensor q0 = q;
    const Tensor zero({5});
    AdamState st2;
    adam_step({&q}, {&zero}, st2);
    CHECK(q == q0);

    Tensor a = random_tensor({6}, 1), b = a;
    AdamState sa, sb;
    for (int i = 0; i < 20; ++i) {
        const auto gr = random_tensor({6}, 100 + i);
        adam_step({&a}, {&gr}, sa);
        adam_step({&b}, {&gr}, sb);
    }
    CHECK(a == b);

    const Tensor wrong({2});
    CHECK_THROWS_AS(adam_step({&p}, {&wrong}, st), ShapeError);
}

TEST_CASE("every layer kind passes a finite-difference check")
{
    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(relative_error(1.0, 1.0 + 1e-9) < 1e-8);
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        for (const auto& r : check_all_op_gradients(seed)) {
            INFO(r.op << " seed " << seed << " max rel " << r.max_rel_error);
            CHECK(r.checked > 0);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}
