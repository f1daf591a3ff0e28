#include "uwbg/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace uwbg::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_rank4(const Shape& s, const char* what)
{
    if (s.size() != 4) {
        throw ShapeError(std::string(what) + " expects an NCHW tensor, got shape " + to_string(s));
    }
}

struct ConvDims {
    std::size_t n, cin, h, w, cout, k, oh, ow;
};

ConvDims conv_dims(const Shape& in, const Shape& wt, int stride, int pad, bool depthwise)
{
    require_rank4(in, "conv2d input");
    require_rank4(wt, "conv2d weights");
    if (stride < 1 || pad < 0) {
        throw ShapeError("conv2d needs stride >= 1 and pad >= 0");
    }
    const std::size_t k = wt[2];
    if (wt[3] != k) {
        throw ShapeError("conv2d kernel must be square, weights shape " + to_string(wt));
    }
    const std::size_t expected_cin = depthwise ? 1 : in[1];
    if (wt[1] != expected_cin || (depthwise && wt[0] != in[1])) {
        throw ShapeError("channel mismatch: input " + to_string(in) + " vs weights " + to_string(wt));
    }
    const std::size_t ph = in[2] + 2 * static_cast<std::size_t>(pad);
    const std::size_t pw = in[3] + 2 * static_cast<std::size_t>(pad);
    if (k == 0 || k > ph || k > pw) {
        throw ShapeError("kernel " + std::to_string(k) + " does not fit padded input " + to_string(in));
    }
    return {in[0], in[1], in[2], in[3], wt[0], k, (ph - k) / stride + 1, (pw - k) / stride + 1};
}

void check_bias(const Shape& b, std::size_t channels)
{
    if (b.size() != 1 || b[0] != channels) {
        throw ShapeError("bias shape " + to_string(b) + " does not match " + std::to_string(channels) + " channels");
    }
}

// Unrolls one sample into a (Cin*k*k) x (OH*OW) matrix.
template <typename T>
void im2col(const T* in, const ConvDims& d, int stride, int pad, T* col)
{
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto p = static_cast<std::ptrdiff_t>(pad);
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t c = 0; c < d.cin; ++c) {
        const T* plane = in + c * d.h * d.w;
        for (std::size_t ki = 0; ki < d.k; ++ki) {
            for (std::size_t kj = 0; kj < d.k; ++kj) {
                T* row = col + ((c * d.k + ki) * d.k + kj) * d.oh * d.ow;
                for (std::size_t oy = 0; oy < d.oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(ki);
                    T* dst = row + oy * d.ow;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + d.ow, T{});
                        continue;
                    }
                    const T* src = plane + iy * W;
                    for (std::size_t ox = 0; ox < d.ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(kj);
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T{};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, const ConvDims& d, int stride, int pad, T* in)
{
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto p = static_cast<std::ptrdiff_t>(pad);
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t c = 0; c < d.cin; ++c) {
        T* plane = in + c * d.h * d.w;
        for (std::size_t ki = 0; ki < d.k; ++ki) {
            for (std::size_t kj = 0; kj < d.k; ++kj) {
                const T* row = col + ((c * d.k + ki) * d.k + kj) * d.oh * d.ow;
                for (std::size_t oy = 0; oy < d.oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(ki);
                    if (iy < 0 || iy >= H) {
                        continue;
                    }
                    const T* src = row + oy * d.ow;
                    T* dst = plane + iy * W;
                    for (std::size_t ox = 0; ox < d.ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(kj);
                        if (ix >= 0 && ix < W) {
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

bool is_plain_pointwise(const ConvDims& d, int stride, int pad)
{
    return d.k == 1 && stride == 1 && pad == 0;
}

} // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias, int stride,
                      int pad)
{
    const ConvDims d = conv_dims(input.shape(), weights.shape(), stride, pad, false);
    check_bias(bias.shape(), d.cout);
    const std::size_t K = d.cin * d.k * d.k;
    const std::size_t P = d.oh * d.ow;
    BasicTensor<T> out({d.n, d.cout, d.oh, d.ow});
    const Eigen::Map<const RowMat<T>> W(weights.data(), static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(K));
    const bool direct = is_plain_pointwise(d, stride, pad);
    std::vector<T> col(direct ? 0 : K * P);
    for (std::size_t n = 0; n < d.n; ++n) {
        const T* src = input.data() + n * d.cin * d.h * d.w;
        if (!direct) {
            im2col(src, d, stride, pad, col.data());
        }
        const Eigen::Map<const RowMat<T>> X(direct ? src : col.data(), static_cast<Eigen::Index>(K),
                                            static_cast<Eigen::Index>(P));
        Eigen::Map<RowMat<T>> Y(out.data() + n * d.cout * P, static_cast<Eigen::Index>(d.cout),
                                static_cast<Eigen::Index>(P));
        Y.noalias() = W * X;
        for (std::size_t co = 0; co < d.cout; ++co) {
            Y.row(static_cast<Eigen::Index>(co)).array() += bias[co];
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& d_out,
                         int stride, int pad, bool want_input_grad)
{
    const ConvDims d = conv_dims(input.shape(), weights.shape(), stride, pad, false);
    const Shape expected{d.n, d.cout, d.oh, d.ow};
    if (d_out.shape() != expected) {
        throw ShapeError("conv2d upstream gradient " + to_string(d_out.shape()) + " vs output " + to_string(expected));
    }
    const std::size_t K = d.cin * d.k * d.k;
    const std::size_t P = d.oh * d.ow;
    ConvGrads<T> g;
    g.d_weights = BasicTensor<T>(weights.shape());
    g.d_bias = BasicTensor<T>({d.cout});
    if (want_input_grad) {
        g.d_input = BasicTensor<T>(input.shape());
    }

    const Eigen::Map<const RowMat<T>> W(weights.data(), static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(K));
    Eigen::Map<RowMat<T>> dW(g.d_weights.data(), static_cast<Eigen::Index>(d.cout), static_cast<Eigen::Index>(K));
    const bool direct = is_plain_pointwise(d, stride, pad);
    std::vector<T> col(direct ? 0 : K * P);
    std::vector<T> dcol(want_input_grad && !direct ? K * P : 0);
    std::vector<double> db(d.cout, 0.0);

    for (std::size_t n = 0; n < d.n; ++n) {
        const T* src = input.data() + n * d.cin * d.h * d.w;
        if (!direct) {
            im2col(src, d, stride, pad, col.data());
        }
        const Eigen::Map<const RowMat<T>> X(direct ? src : col.data(), static_cast<Eigen::Index>(K),
                                            static_cast<Eigen::Index>(P));
        const Eigen::Map<const RowMat<T>> dY(d_out.data() + n * d.cout * P, static_cast<Eigen::Index>(d.cout),
                                             static_cast<Eigen::Index>(P));
        dW.noalias() += dY * X.transpose();
        for (std::size_t co = 0; co < d.cout; ++co) {
            const T* r = d_out.data() + (n * d.cout + co) * P;
            double s = 0.0;
            for (std::size_t i = 0; i < P; ++i) {
                s += r[i];
            }
            db[co] += s;
        }
        if (want_input_grad) {
            T* dst = g.d_input.data() + n * d.cin * d.h * d.w;
            if (direct) {
                Eigen::Map<RowMat<T>> dX(dst, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
                dX.noalias() = W.transpose() * dY;
            } else {
                Eigen::Map<RowMat<T>> dC(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
                dC.noalias() = W.transpose() * dY;
                col2im(dcol.data(), d, stride, pad, dst);
            }
        }
    }
    for (std::size_t co = 0; co < d.cout; ++co) {
        g.d_bias[co] = static_cast<T>(db[co]);
    }
    return g;
}

template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                                int stride, int pad)
{
    const ConvDims d = conv_dims(input.shape(), weights.shape(), stride, pad, true);
    check_bias(bias.shape(), d.cin);
    BasicTensor<T> out({d.n, d.cin, d.oh, d.ow});
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.cin; ++c) {
            const T* plane = input.data() + (n * d.cin + c) * d.h * d.w;
            const T* kern = weights.data() + c * d.k * d.k;
            T* dst = out.data() + (n * d.cin + c) * d.oh * d.ow;
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
                for (std::size_t ox = 0; ox < d.ow; ++ox) {
                    T acc = bias[c];
                    for (std::size_t ki = 0; ki < d.k; ++ki) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (std::size_t kj = 0; kj < d.k; ++kj) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - pad;
                            if (ix < 0 || ix >= W) continue;
                            acc += kern[ki * d.k + kj] * plane[iy * W + ix];
                        }
                    }
                    dst[oy * d.ow + ox] = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                   const BasicTensor<T>& d_out, int stride, int pad, bool want_input_grad)
{
    const ConvDims d = conv_dims(input.shape(), weights.shape(), stride, pad, true);
    const Shape expected{d.n, d.cin, d.oh, d.ow};
    if (d_out.shape() != expected) {
        throw ShapeError("depthwise upstream gradient " + to_string(d_out.shape()) + " vs output " +
                         to_string(expected));
    }
    ConvGrads<T> g;
    g.d_weights = BasicTensor<T>(weights.shape());
    g.d_bias = BasicTensor<T>({d.cin});
    if (want_input_grad) {
        g.d_input = BasicTensor<T>(input.shape());
    }
    const auto H = static_cast<std::ptrdiff_t>(d.h);
    const auto W = static_cast<std::ptrdiff_t>(d.w);
    std::vector<double> dk(d.k * d.k);
    for (std::size_t c = 0; c < d.cin; ++c) {
        std::fill(dk.begin(), dk.end(), 0.0);
        double db = 0.0;
        const T* kern = weights.data() + c * d.k * d.k;
        for (std::size_t n = 0; n < d.n; ++n) {
            const T* plane = input.data() + (n * d.cin + c) * d.h * d.w;
            const T* up = d_out.data() + (n * d.cin + c) * d.oh * d.ow;
            T* dplane = want_input_grad ? g.d_input.data() + (n * d.cin + c) * d.h * d.w : nullptr;
            for (std::size_t oy = 0; oy < d.oh; ++oy) {
                for (std::size_t ox = 0; ox < d.ow; ++ox) {
                    const T gy = up[oy * d.ow + ox];
                    db += gy;
                    for (std::size_t ki = 0; ki < d.k; ++ki) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (std::size_t kj = 0; kj < d.k; ++kj) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - pad;
                            if (ix < 0 || ix >= W) continue;
                            dk[ki * d.k + kj] += static_cast<double>(gy) * plane[iy * W + ix];
                            if (dplane) {
                                dplane[iy * W + ix] += gy * kern[ki * d.k + kj];
                            }
                        }
                    }
                }
            }
        }
        for (std::size_t i = 0; i < dk.size(); ++i) {
            g.d_weights[c * d.k * d.k + i] = static_cast<T>(dk[i]);
        }
        g.d_bias[c] = static_cast<T>(db);
    }
    return g;
}

template <typename T>
BasicTensor<T> depthwise_separable(const BasicTensor<T>& input, const SeparableParams<T>& p, int stride)
{
    const int pad = static_cast<int>(p.dw_weights.dim(2) / 2);
    const auto mid = depthwise_conv2d(input, p.dw_weights, p.dw_bias, stride, pad);
    return conv2d(mid, p.pw_weights, p.pw_bias, 1, 0);
}

template <typename T>
SeparableGrads<T> depthwise_separable_grad(const BasicTensor<T>& input, const SeparableParams<T>& p,
                                           const BasicTensor<T>& d_out, int stride)
{
    const int pad = static_cast<int>(p.dw_weights.dim(2) / 2);
    const auto mid = depthwise_conv2d(input, p.dw_weights, p.dw_bias, stride, pad);
    auto pw = conv2d_grad(mid, p.pw_weights, d_out, 1, 0, true);
    auto dw = depthwise_conv2d_grad(input, p.dw_weights, pw.d_input, stride, pad, true);
    SeparableGrads<T> g;
    g.d_input = std::move(dw.d_input);
    g.d_params = {std::move(dw.d_weights), std::move(dw.d_bias), std::move(pw.d_weights), std::move(pw.d_bias)};
    return g;
}

std::size_t depthwise_separable_param_count(std::size_t c_in, std::size_t c_out, std::size_t k, bool with_bias)
{
    return c_in * k * k + c_in * c_out + (with_bias ? c_in + c_out : 0);
}

std::size_t conv2d_param_count(std::size_t c_in, std::size_t c_out, std::size_t k, bool with_bias)
{
    return c_in * c_out * k * k + (with_bias ? c_out : 0);
}

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel, int stride)
{
    require_rank4(input.shape(), "maxpool2d");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (kernel < 1 || stride < 1 || static_cast<std::size_t>(kernel) > H || static_cast<std::size_t>(kernel) > W) {
        throw ShapeError("maxpool kernel " + std::to_string(kernel) + " does not fit input " + to_string(input.shape()));
    }
    const std::size_t k = static_cast<std::size_t>(kernel);
    const std::size_t s = static_cast<std::size_t>(stride);
    const std::size_t OH = (H - k) / s + 1, OW = (W - k) / s + 1;
    PoolResult<T> r{BasicTensor<T>({N, C, OH, OW}), std::vector<std::uint32_t>(N * C * OH * OW)};
    for (std::size_t plane = 0; plane < N * C; ++plane) {
        const T* src = input.data() + plane * H * W;
        T* dst = r.output.data() + plane * OH * OW;
        std::uint32_t* arg = r.argmax.data() + plane * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                std::size_t best = (oy * s) * W + ox * s;
                for (std::size_t ki = 0; ki < k; ++ki) {
                    for (std::size_t kj = 0; kj < k; ++kj) {
                        const std::size_t idx = (oy * s + ki) * W + ox * s + kj;
                        if (src[idx] > src[best]) {
                            best = idx;
                        }
                    }
                }
                dst[oy * OW + ox] = src[best];
                arg[oy * OW + ox] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_grad(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                              const BasicTensor<T>& d_out)
{
    require_rank4(input_shape, "maxpool2d_grad");
    if (argmax.size() != d_out.size()) {
        throw ShapeError("maxpool argmax/gradient size mismatch");
    }
    BasicTensor<T> d_in(input_shape);
    const std::size_t plane_in = input_shape[2] * input_shape[3];
    const std::size_t plane_out = d_out.dim(2) * d_out.dim(3);
    for (std::size_t i = 0; i < d_out.size(); ++i) {
        const std::size_t plane = i / plane_out;
        d_in[plane * plane_in + argmax[i]] += d_out[i];
    }
    return d_in;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input)
{
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] > T{} ? input[i] : T{};
    }
    return out;
}

template <typename T>
BasicTensor<T> relu_grad(const BasicTensor<T>& input, const BasicTensor<T>& d_out)
{
    if (input.shape() != d_out.shape()) {
        throw ShapeError("relu gradient " + to_string(d_out.shape()) + " vs input " + to_string(input.shape()));
    }
    BasicTensor<T> d_in(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        d_in[i] = input[i] > T{} ? d_out[i] : T{};
    }
    return d_in;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input)
{
    require_rank4(input.shape(), "global_avg_pool");
    const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    BasicTensor<T> out({N, C, 1, 1});
    for (std::size_t plane = 0; plane < N * C; ++plane) {
        const T* src = input.data() + plane * HW;
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) {
            s += src[i];
        }
        out[plane] = static_cast<T>(s / static_cast<double>(HW));
    }
    return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_grad(const Shape& input_shape, const BasicTensor<T>& d_out)
{
    require_rank4(input_shape, "global_avg_pool_grad");
    const std::size_t HW = input_shape[2] * input_shape[3];
    if (d_out.size() * HW != element_count(input_shape)) {
        throw ShapeError("global_avg_pool gradient " + to_string(d_out.shape()) + " vs input " + to_string(input_shape));
    }
    BasicTensor<T> d_in(input_shape);
    const T inv = static_cast<T>(1.0 / static_cast<double>(HW));
    for (std::size_t plane = 0; plane < d_out.size(); ++plane) {
        std::fill_n(d_in.data() + plane * HW, HW, d_out[plane] * inv);
    }
    return d_in;
}

namespace {

std::size_t features_of(const Shape& s)
{
    if (s.empty()) {
        throw ShapeError("dense input has rank 0");
    }
    return element_count(s) / s[0];
}

} // namespace

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias)
{
    const std::size_t N = input.dim(0);
    const std::size_t F = features_of(input.shape());
    if (weights.rank() != 2 || weights.dim(0) != F) {
        throw ShapeError("dense weights " + to_string(weights.shape()) + " do not accept input " +
                         to_string(input.shape()));
    }
    const std::size_t U = weights.dim(1);
    check_bias(bias.shape(), U);
    BasicTensor<T> out({N, U, 1, 1});
    const Eigen::Map<const RowMat<T>> X(input.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(F));
    const Eigen::Map<const RowMat<T>> Wm(weights.data(), static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(U));
    Eigen::Map<RowMat<T>> Y(out.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(U));
    Y.noalias() = X * Wm;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t u = 0; u < U; ++u) {
            out[n * U + u] += bias[u];
        }
    }
    return out;
}

template <typename T>
DenseGrads<T> dense_grad(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& d_out,
                         bool want_input_grad)
{
    const std::size_t N = input.dim(0);
    const std::size_t F = features_of(input.shape());
    if (weights.rank() != 2 || weights.dim(0) != F) {
        throw ShapeError("dense weights " + to_string(weights.shape()) + " do not accept input " +
                         to_string(input.shape()));
    }
    const std::size_t U = weights.dim(1);
    if (d_out.size() != N * U) {
        throw ShapeError("dense upstream gradient " + to_string(d_out.shape()) + " vs " + std::to_string(N) + "x" +
                         std::to_string(U));
    }
    DenseGrads<T> g;
    g.d_weights = BasicTensor<T>(weights.shape());
    g.d_bias = BasicTensor<T>({U});
    const Eigen::Map<const RowMat<T>> X(input.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(F));
    const Eigen::Map<const RowMat<T>> Wm(weights.data(), static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(U));
    const Eigen::Map<const RowMat<T>> dY(d_out.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(U));
    Eigen::Map<RowMat<T>> dW(g.d_weights.data(), static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(U));
    dW.noalias() = X.transpose() * dY;
    for (std::size_t u = 0; u < U; ++u) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            s += d_out[n * U + u];
        }
        g.d_bias[u] = static_cast<T>(s);
    }
    if (want_input_grad) {
        g.d_input = BasicTensor<T>(input.shape());
        Eigen::Map<RowMat<T>> dX(g.d_input.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(F));
        dX.noalias() = dY * Wm.transpose();
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits)
{
    const std::size_t N = logits.dim(0);
    const std::size_t C = logits.size() / std::max<std::size_t>(N, 1);
    BasicTensor<T> probs(logits.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const T* z = logits.data() + n * C;
        const T zmax = *std::max_element(z, z + C);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            total += std::exp(static_cast<double>(z[c]) - zmax);
        }
        for (std::size_t c = 0; c < C; ++c) {
            probs[n * C + c] = static_cast<T>(std::exp(static_cast<double>(z[c]) - zmax) / total);
        }
    }
    return probs;
}

template <typename T>
SoftmaxCE<T> softmax_cross_entropy(const BasicTensor<T>& logits, const std::vector<int>& targets)
{
    const std::size_t N = logits.dim(0);
    if (targets.size() != N || N == 0) {
        throw InvalidArgument("need one target per logit row: " + std::to_string(targets.size()) + " targets for " +
                              std::to_string(N) + " rows");
    }
    const std::size_t C = logits.size() / N;
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= C) {
            throw InvalidArgument("target class " + std::to_string(t) + " outside 0.." + std::to_string(C - 1));
        }
    }
    SoftmaxCE<T> r;
    r.probs = BasicTensor<T>(logits.shape());
    r.d_logits = BasicTensor<T>(logits.shape());
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const T* z = logits.data() + n * C;
        const double zmax = *std::max_element(z, z + C);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            total += std::exp(z[c] - zmax);
        }
        const double log_total = std::log(total);
        const auto t = static_cast<std::size_t>(targets[n]);
        loss += -(z[t] - zmax - log_total);
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(z[c] - zmax - log_total);
            r.probs[n * C + c] = static_cast<T>(p);
            r.d_logits[n * C + c] = static_cast<T>((p - (c == t ? 1.0 : 0.0)) / static_cast<double>(N));
        }
    }
    r.loss = loss / static_cast<double>(N);
    return r;
}

#define UWBG_INSTANTIATE_OPS(T)                                                                                        \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, int);     \
    template ConvGrads<T> conv2d_grad(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, int,   \
                                      bool);                                                                           \
    template BasicTensor<T> depthwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                             int);                                                                     \
    template ConvGrads<T> depthwise_conv2d_grad(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                int, int, bool);                                                       \
    template BasicTensor<T> depthwise_separable(const BasicTensor<T>&, const SeparableParams<T>&, int);                \
    template SeparableGrads<T> depthwise_separable_grad(const BasicTensor<T>&, const SeparableParams<T>&,              \
                                                        const BasicTensor<T>&, int);                                   \
    template PoolResult<T> maxpool2d(const BasicTensor<T>&, int, int);                                                 \
    template BasicTensor<T> maxpool2d_grad(const Shape&, const std::vector<std::uint32_t>&, const BasicTensor<T>&);   \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                               \
    template BasicTensor<T> relu_grad(const BasicTensor<T>&, const BasicTensor<T>&);                                   \
    template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                    \
    template BasicTensor<T> global_avg_pool_grad(const Shape&, const BasicTensor<T>&);                                 \
    template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);                \
    template DenseGrads<T> dense_grad(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, bool);      \
    template SoftmaxCE<T> softmax_cross_entropy(const BasicTensor<T>&, const std::vector<int>&);                       \
    template BasicTensor<T> softmax(const BasicTensor<T>&);

UWBG_INSTANTIATE_OPS(float)
UWBG_INSTANTIATE_OPS(double)

#undef UWBG_INSTANTIATE_OPS

} // namespace uwbg::nn
