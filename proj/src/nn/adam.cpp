#include "uwbg/nn/adam.hpp"

#include <cmath>

namespace uwbg::nn {

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state)
{
    if (params.size() != grads.size()) {
        throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                         " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i]->shape()) {
            throw ShapeError("adam: parameter " + to_string(params[i]->shape()) + " vs gradient " +
                             to_string(grads[i]->shape()));
        }
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    } else if (state.m.size() != params.size()) {
        throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) + " tensors, step has " +
                         std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].shape() != params[i]->shape()) {
            throw ShapeError("adam: moment " + to_string(state.m[i].shape()) + " vs parameter " +
                             to_string(params[i]->shape()));
        }
    }

    ++state.t;
    const auto& hp = state.hp;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i]->data();
        const float* g = grads[i]->data();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        for (std::size_t k = 0; k < params[i]->size(); ++k) {
            const double mk = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
            const double vk = hp.beta2 * v[k] + (1.0 - hp.beta2) * static_cast<double>(g[k]) * g[k];
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            p[k] = static_cast<float>(p[k] - hp.lr * (mk / c1) / (std::sqrt(vk / c2) + hp.eps));
        }
    }
}

} // namespace uwbg::nn
