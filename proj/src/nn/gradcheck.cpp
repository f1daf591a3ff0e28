#include "uwbg/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "uwbg/rng.hpp"

namespace uwbg::nn {

double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    return std::abs(analytic - numeric) / denom;
}

std::vector<std::string> GradCheckReport::failing_layers() const
{
    std::vector<std::string> out;
    for (const auto& l : layers) {
        if (!l.passed) {
            out.push_back(l.name);
        }
    }
    return out;
}

GradCheckReport grad_check(const Model& model, const Tensor& input, const std::vector<int>& targets,
                           const GradCheckOptions& opts)
{
    BasicModel<double> m = model.cast<double>();
    const auto x = input.cast<double>();

    ParamSet<double> analytic;
    m.loss_and_grad(x, targets, analytic);
    std::uint64_t base_sig = 0;
    m.loss(x, targets, &base_sig);

    GradCheckReport report;
    report.tol = opts.tol;
    Rng rng(opts.seed);
    for (std::size_t li = 0; li < m.params().size(); ++li) {
        auto& tensors = m.params()[li];
        if (tensors.empty()) {
            continue;
        }
        LayerGradCheck lc;
        lc.layer = li;
        lc.name = "layer " + std::to_string(li) + " (" + std::string(layer_kind_name(m.config().layers[li].kind)) + ")";

        std::vector<std::pair<std::size_t, std::size_t>> candidates;
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            for (std::size_t k = 0; k < tensors[t].size(); ++k) {
                candidates.emplace_back(t, k);
            }
        }
        shuffle(candidates, rng);

        double sum = 0.0;
        for (const auto& [t, k] : candidates) {
            if (lc.checked >= opts.params_per_layer) {
                break;
            }
            double& p = tensors[t][k];
            const double saved = p;
            std::uint64_t sig_plus = 0, sig_minus = 0;
            p = saved + opts.h;
            const double lp = m.loss(x, targets, &sig_plus);
            p = saved - opts.h;
            const double lm = m.loss(x, targets, &sig_minus);
            p = saved;
            if (sig_plus != base_sig || sig_minus != base_sig) {
                ++lc.skipped_nonsmooth;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * opts.h);
            const double err = relative_error(analytic[li][t][k], numeric);
            lc.max_rel_error = std::max(lc.max_rel_error, err);
            sum += err;
            ++lc.checked;
        }
        lc.mean_rel_error = lc.checked ? sum / static_cast<double>(lc.checked) : 0.0;
        lc.passed = lc.max_rel_error < opts.tol;
        report.max_rel_error = std::max(report.max_rel_error, lc.max_rel_error);
        report.passed = report.passed && lc.passed;
        report.layers.push_back(std::move(lc));
    }
    return report;
}

namespace {

using DTensor = BasicTensor<double>;

DTensor random_normal(Shape shape, Rng& rng)
{
    DTensor t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.normal();
    }
    return t;
}

// Runs the finite-difference comparison for a function of several tensors.
// `forward` evaluates the op on the current tensor values; `backward` maps an
// upstream gradient to one gradient per tensor (same order as `vars`).
double compare(std::vector<DTensor*> vars, const std::function<DTensor()>& forward,
               const std::function<std::vector<DTensor>(const DTensor&)>& backward, Rng& rng, double h,
               std::size_t& checked)
{
    const DTensor y0 = forward();
    const DTensor r = random_normal(y0.shape(), rng);
    auto objective = [&] {
        const DTensor y = forward();
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            s += r[i] * y[i];
        }
        return s;
    };
    const auto grads = backward(r);
    double worst = 0.0;
    for (std::size_t vi = 0; vi < vars.size(); ++vi) {
        DTensor& v = *vars[vi];
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double saved = v[k];
            v[k] = saved + h;
            const double fp = objective();
            v[k] = saved - h;
            const double fm = objective();
            v[k] = saved;
            worst = std::max(worst, relative_error(grads[vi][k], (fp - fm) / (2.0 * h)));
            ++checked;
        }
    }
    return worst;
}

OpGradCheck check_conv(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"conv2d", 0, 0.0};
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 0}}) {
        DTensor x = random_normal({4, 3, 8, 8}, rng);
        DTensor w = random_normal({5, 3, 3, 3}, rng);
        DTensor b = random_normal({5}, rng);
        const double e = compare(
            {&x, &w, &b}, [&] { return conv2d(x, w, b, stride, pad); },
            [&](const DTensor& g) {
                auto r = conv2d_grad(x, w, g, stride, pad, true);
                return std::vector<DTensor>{r.d_input, r.d_weights, r.d_bias};
            },
            rng, h, out.checked);
        out.max_rel_error = std::max(out.max_rel_error, e);
    }
    return out;
}

OpGradCheck check_depthwise(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"depthwise_conv2d", 0, 0.0};
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}}) {
        DTensor x = random_normal({4, 3, 8, 8}, rng);
        DTensor w = random_normal({3, 1, 3, 3}, rng);
        DTensor b = random_normal({3}, rng);
        const double e = compare(
            {&x, &w, &b}, [&] { return depthwise_conv2d(x, w, b, stride, pad); },
            [&](const DTensor& g) {
                auto r = depthwise_conv2d_grad(x, w, g, stride, pad, true);
                return std::vector<DTensor>{r.d_input, r.d_weights, r.d_bias};
            },
            rng, h, out.checked);
        out.max_rel_error = std::max(out.max_rel_error, e);
    }
    return out;
}

OpGradCheck check_relu(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"relu", 0, 0.0};
    // Keep every input at least 50 h away from the kink.
    DTensor x({4, 3, 5, 5});
    for (auto& v : x.values()) {
        v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.05 + std::abs(rng.normal()));
    }
    out.max_rel_error = compare(
        {&x}, [&] { return relu(x); }, [&](const DTensor& g) { return std::vector<DTensor>{relu_grad(x, g)}; }, rng,
        h, out.checked);
    return out;
}

OpGradCheck check_maxpool(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"maxpool2d", 0, 0.0};
    for (auto [k, s] : {std::pair{2, 2}, std::pair{3, 2}}) {
        // Distinct values 0.01 apart: a +-h perturbation never changes an argmax.
        DTensor x({2, 3, 6, 6});
        std::vector<std::size_t> perm(x.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        shuffle(perm, rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = 0.01 * static_cast<double>(perm[i]) - 1.0;
        }
        const double e = compare(
            {&x}, [&] { return maxpool2d(x, k, s).output; },
            [&](const DTensor& g) {
                const auto fwd = maxpool2d(x, k, s);
                return std::vector<DTensor>{maxpool2d_grad(x.shape(), fwd.argmax, g)};
            },
            rng, h, out.checked);
        out.max_rel_error = std::max(out.max_rel_error, e);
    }
    return out;
}

OpGradCheck check_gap(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"global_avg_pool", 0, 0.0};
    DTensor x = random_normal({4, 3, 5, 5}, rng);
    out.max_rel_error = compare(
        {&x}, [&] { return global_avg_pool(x); },
        [&](const DTensor& g) { return std::vector<DTensor>{global_avg_pool_grad(x.shape(), g)}; }, rng, h,
        out.checked);
    return out;
}

OpGradCheck check_dense(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"dense", 0, 0.0};
    DTensor x = random_normal({4, 6, 1, 1}, rng);
    DTensor w = random_normal({6, 5}, rng);
    DTensor b = random_normal({5}, rng);
    out.max_rel_error = compare(
        {&x, &w, &b}, [&] { return dense(x, w, b); },
        [&](const DTensor& g) {
            auto r = dense_grad(x, w, g, true);
            return std::vector<DTensor>{r.d_input, r.d_weights, r.d_bias};
        },
        rng, h, out.checked);
    return out;
}

OpGradCheck check_softmax_ce(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"softmax_ce", 0, 0.0};
    DTensor z = random_normal({4, 6, 1, 1}, rng);
    std::vector<int> targets(4);
    for (auto& t : targets) {
        t = static_cast<int>(rng.below(6));
    }
    const auto analytic = softmax_cross_entropy(z, targets).d_logits;
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double saved = z[k];
        z[k] = saved + h;
        const double lp = softmax_cross_entropy(z, targets).loss;
        z[k] = saved - h;
        const double lm = softmax_cross_entropy(z, targets).loss;
        z[k] = saved;
        out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[k], (lp - lm) / (2.0 * h)));
        ++out.checked;
    }
    return out;
}

} // namespace

OpGradCheck check_separable_gradients(std::uint64_t seed, double h)
{
    Rng rng(seed);
    OpGradCheck out{"depthwise_separable", 0, 0.0};
    DTensor x = random_normal({2, 3, 8, 8}, rng);
    SeparableParams<double> p{random_normal({3, 1, 3, 3}, rng), random_normal({3}, rng),
                              random_normal({4, 3, 1, 1}, rng), random_normal({4}, rng)};
    for (int stride : {1, 2}) {
        const double e = compare(
            {&x, &p.dw_weights, &p.dw_bias, &p.pw_weights, &p.pw_bias},
            [&] { return depthwise_separable(x, p, stride); },
            [&](const DTensor& g) {
                auto r = depthwise_separable_grad(x, p, g, stride);
                return std::vector<DTensor>{r.d_input, r.d_params.dw_weights, r.d_params.dw_bias,
                                            r.d_params.pw_weights, r.d_params.pw_bias};
            },
            rng, h, out.checked);
        out.max_rel_error = std::max(out.max_rel_error, e);
    }
    return out;
}

OpGradCheck check_op_gradients(LayerKind kind, std::uint64_t seed, double h)
{
    switch (kind) {
    case LayerKind::Conv2D: return check_conv(seed, h);
    case LayerKind::DepthwiseConv2D: return check_depthwise(seed, h);
    case LayerKind::ReLU: return check_relu(seed, h);
    case LayerKind::MaxPool2D: return check_maxpool(seed, h);
    case LayerKind::GlobalAvgPool: return check_gap(seed, h);
    case LayerKind::Dense: return check_dense(seed, h);
    case LayerKind::SoftmaxCE: return check_softmax_ce(seed, h);
    }
    return {};
}

std::vector<OpGradCheck> check_all_op_gradients(std::uint64_t seed, double h)
{
    std::vector<OpGradCheck> out;
    for (auto k : {LayerKind::Conv2D, LayerKind::DepthwiseConv2D, LayerKind::ReLU, LayerKind::MaxPool2D,
                   LayerKind::GlobalAvgPool, LayerKind::Dense, LayerKind::SoftmaxCE}) {
        out.push_back(check_op_gradients(k, seed, h));
    }
    out.push_back(check_separable_gradients(seed, h));
    return out;
}

} // namespace uwbg::nn
