#pragma once

// Layer kernels with hand-derived gradients. Instantiated for float (training
// and inference) and double (finite-difference verification).

#include <cstdint>
#include <vector>

#include "uwbg/nn/tensor.hpp"

namespace uwbg::nn {

template <typename T>
struct ConvGrads {
    BasicTensor<T> d_input;   // empty when not requested
    BasicTensor<T> d_weights;
    BasicTensor<T> d_bias;
};

/// Cross-correlation. input [N,Cin,H,W], weights [Cout,Cin,k,k], bias [Cout].
/// Output spatial size is floor((in + 2*pad - k) / stride) + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias, int stride,
                      int pad);

template <typename T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& d_out,
                         int stride, int pad, bool want_input_grad = true);

/// One k x k filter per channel. weights [C,1,k,k], bias [C].
template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                                int stride, int pad);

template <typename T>
ConvGrads<T> depthwise_conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                   const BasicTensor<T>& d_out, int stride, int pad, bool want_input_grad = true);

template <typename T>
struct SeparableParams {
    BasicTensor<T> dw_weights; // [C,1,k,k]
    BasicTensor<T> dw_bias;    // [C]
    BasicTensor<T> pw_weights; // [Cout,C,1,1]
    BasicTensor<T> pw_bias;    // [Cout]
};

template <typename T>
struct SeparableGrads {
    BasicTensor<T> d_input;
    SeparableParams<T> d_params;
};

/// Depthwise k x k ("same" padding k/2) followed by a pointwise 1x1 conv.
template <typename T>
BasicTensor<T> depthwise_separable(const BasicTensor<T>& input, const SeparableParams<T>& p, int stride);

template <typename T>
SeparableGrads<T> depthwise_separable_grad(const BasicTensor<T>& input, const SeparableParams<T>& p,
                                           const BasicTensor<T>& d_out, int stride);

/// C_in*k^2 + C_in*C_out, plus C_in + C_out with biases.
std::size_t depthwise_separable_param_count(std::size_t c_in, std::size_t c_out, std::size_t k, bool with_bias = true);
std::size_t conv2d_param_count(std::size_t c_in, std::size_t c_out, std::size_t k, bool with_bias = true);

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    /// Per output element, the flat h*W+w index of its maximum in the input
    /// plane. Ties go to the first maximum in row-major order.
    std::vector<std::uint32_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel, int stride);

template <typename T>
BasicTensor<T> maxpool2d_grad(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                              const BasicTensor<T>& d_out);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Subgradient at 0 is taken as 0.
template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& d_out);

/// [N,C,H,W] -> [N,C,1,1].
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_grad(const Shape& input_shape, const BasicTensor<T>& d_out);

template <typename T>
struct DenseGrads {
    BasicTensor<T> d_input;
    BasicTensor<T> d_weights;
    BasicTensor<T> d_bias;
};

/// y = x W + b with x flattened to [N, F]. W is [F, U] row-major, so column j
/// holds the incoming weights of unit j. Output is [N, U, 1, 1].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <typename T>
DenseGrads<T> dense_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& d_out,
                         bool want_input_grad = true);

template <typename T>
struct SoftmaxCE {
    double loss = 0.0;        // mean over the batch of -log p[target]
    BasicTensor<T> probs;     // same shape as logits
    BasicTensor<T> d_logits;  // (probs - onehot) / batch
};

/// Numerically stable (max-subtracted) softmax over dim 1 plus mean
/// cross-entropy.
template <typename T>
SoftmaxCE<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<int>& targets);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

} // namespace uwbg::nn
