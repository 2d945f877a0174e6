#ifndef GWCOSAL_OPS_HPP
#define GWCOSAL_OPS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "gwcosal/tensor.hpp"

namespace gwcosal {

// One convolutional layer's parameters. Weights are (out_ch, in_ch, kh, kw).
// Used by conv2d as-is; deconv2d interprets the same parameters as its
// transpose, mapping out_ch input channels back to in_ch output channels
// (so bias, which has length out_ch for conv2d, must have length in_ch
// when the parameters drive a deconv2d layer -- identical for the square
// upsampling heads used here).
template <typename T>
struct ConvParams {
    Tensor<T> weights;
    std::vector<T> bias;
    long stride = 1;
    long pad = 0;

    long out_ch() const { return weights.shape.n; }
    long in_ch() const { return weights.shape.c; }
    long kh() const { return weights.shape.h; }
    long kw() const { return weights.shape.w; }
};

// Cached forward state; gradients computed from a context equal gradients
// computed by rerunning the forward pass.
template <typename T>
struct Conv2dContext {
    Tensor<T> input;
    ConvParams<T> params;
    Shape4 out_shape;
};

template <typename T>
struct Deconv2dContext {
    Tensor<T> input;
    ConvParams<T> params;
    Shape4 out_shape;
};

struct ReluContext {
    Shape4 shape;
    std::vector<std::uint8_t> positive; // x > 0 per element
};

struct MaxPool2Context {
    Shape4 in_shape;
    Shape4 out_shape;
    std::vector<std::size_t> argmax; // flat input index per output element
};

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    std::vector<T> bias;
};

Shape4 conv2d_out_shape(const Shape4& in, long out_ch, long in_ch, long kh, long kw,
                        long stride, long pad);
Shape4 deconv2d_out_shape(const Shape4& in, long out_ch, long in_ch, long kh, long kw,
                          long stride, long pad);

// y[n,o,i,j] = bias[o] + sum_{c,u,v} x_pad[n,c,i*s+u,j*s+v] * w[o,c,u,v],
// zero padding. Accumulation runs in ascending (c,u,v) order per output
// element, so results are bit-deterministic.
template <typename T>
std::pair<Tensor<T>, Conv2dContext<T>> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> conv2d_grad(const Conv2dContext<T>& ctx, const Tensor<T>& dy);

// Transposed convolution; exact adjoint of conv2d for identical parameters
// (zero bias). Output spatial size is (in - 1)*stride + k - 2*pad.
template <typename T>
std::pair<Tensor<T>, Deconv2dContext<T>> deconv2d(const Tensor<T>& x, const ConvParams<T>& p);

template <typename T>
ConvGrads<T> deconv2d_grad(const Deconv2dContext<T>& ctx, const Tensor<T>& dy);

// Per-channel bilinear interpolation weights for a deconv upsampling by
// `factor`: kernel size k = 2*factor - factor%2, separable profile
// w[i] = 1 - |i/factor - center| with center = (2*factor - 1 - factor%2) / (2*factor).
// Cross-channel entries are zero. Shape (channels, channels, k, k).
template <typename T>
Tensor<T> make_bilinear_kernel(long factor, long channels);

// Bilinear kernel packaged with the stride/pad that make deconv2d upsample
// by exactly `factor` (stride = factor, pad = (k - factor)/2), zero bias.
template <typename T>
ConvParams<T> bilinear_upsample_params(long factor, long channels);

template <typename T>
std::pair<Tensor<T>, ReluContext> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_grad(const ReluContext& ctx, const Tensor<T>& dy);

// 2x2 window, stride 2; ties break to the first element in row-major scan.
template <typename T>
std::pair<Tensor<T>, MaxPool2Context> maxpool2(const Tensor<T>& x);

template <typename T>
Tensor<T> maxpool2_grad(const MaxPool2Context& ctx, const Tensor<T>& dy);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<long>& sizes);

// Classical momentum: g = grad + weight_decay*param; vel' = momentum*vel + g;
// param' = param - lr*vel'. Rejects non-finite inputs.
template <typename T>
void sgd_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& vel,
                double lr, double momentum, double weight_decay);

} // namespace gwcosal

#endif
