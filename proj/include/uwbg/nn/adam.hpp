#pragma once

#include <cstdint>
#include <vector>

#include "uwbg/nn/tensor.hpp"

namespace uwbg::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moments per parameter tensor plus the step count.
struct AdamState {
    AdamConfig hp;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;

    explicit AdamState(AdamConfig cfg = {}) : hp(cfg) {}
};

/// One bias-corrected Adam update. Moments are created lazily on the first
/// step; afterwards every shape must match the state.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state);

} // namespace uwbg::nn
