#pragma once

// Central finite-difference verification of the hand-derived gradients.
// All checks run in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "uwbg/nn/model.hpp"

namespace uwbg::nn {

/// |a - n| / max(|a|, |n|, 1e-7). The floor keeps exact zeros comparable.
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
    double h = 1e-3;
    double tol = 1e-4;
    /// Parameters compared per layer (all of them if the layer is smaller).
    std::size_t params_per_layer = 200;
    std::uint64_t seed = 0;
};

struct LayerGradCheck {
    std::size_t layer = 0;
    std::string name; // "layer 3 (dense)"
    std::size_t checked = 0;
    /// Perturbations that flipped a ReLU or pool argmax. The central
    /// difference straddles a kink there and is not a valid oracle.
    std::size_t skipped_nonsmooth = 0;
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<LayerGradCheck> layers;
    double max_rel_error = 0.0;
    double tol = 0.0;
    bool passed = true;

    std::vector<std::string> failing_layers() const;
};

/// Compares analytic parameter gradients of `model` (converted to double)
/// with central differences of the mean cross-entropy on (input, targets).
GradCheckReport grad_check(const Model& model, const Tensor& input, const std::vector<int>& targets,
                           const GradCheckOptions& opts = {});

struct OpGradCheck {
    std::string op;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
};

/// Checks one layer kind in isolation (input and parameter gradients) on
/// random data drawn from `seed`, against the loss sum(r * y) for a random r
/// (plain cross-entropy for the softmax head).
OpGradCheck check_op_gradients(LayerKind kind, std::uint64_t seed, double h = 1e-3);

/// Same, for the depthwise-separable composite.
OpGradCheck check_separable_gradients(std::uint64_t seed, double h = 1e-3);

/// Every layer kind plus the separable composite.
std::vector<OpGradCheck> check_all_op_gradients(std::uint64_t seed, double h = 1e-3);

} // namespace uwbg::nn
