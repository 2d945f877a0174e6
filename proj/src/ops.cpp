#include "gwcosal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gwcosal {

namespace {

std::string shape_mismatch(const char* what, const Shape4& got, const Shape4& want) {
    std::ostringstream os;
    os << what << ": got " << got.str() << ", expected " << want.str();
    return os.str();
}

// Dot product with four independent accumulators combined in a fixed order:
// vectorizable yet bit-deterministic across runs.
template <typename T>
T dot_stride1(const T* __restrict a, const T* __restrict b, long n) {
    T acc0 = T(0), acc1 = T(0), acc2 = T(0), acc3 = T(0);
    long j = 0;
    for (; j + 4 <= n; j += 4) {
        acc0 += a[j] * b[j];
        acc1 += a[j + 1] * b[j + 1];
        acc2 += a[j + 2] * b[j + 2];
        acc3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) acc0 += a[j] * b[j];
    return (acc0 + acc1) + (acc2 + acc3);
}

} // namespace

Shape4 conv2d_out_shape(const Shape4& in, long out_ch, long in_ch, long kh, long kw,
                        long stride, long pad) {
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    if (in.c != in_ch) {
        std::ostringstream os;
        os << "conv2d: input has " << in.c << " channels, weights expect " << in_ch;
        throw ShapeError(os.str());
    }
    const long oh = (in.h + 2 * pad - kh) / stride + 1;
    const long ow = (in.w + 2 * pad - kw) / stride + 1;
    if (in.h + 2 * pad - kh < 0 || in.w + 2 * pad - kw < 0 || oh < 1 || ow < 1) {
        std::ostringstream os;
        os << "conv2d: kernel " << kh << "x" << kw << " (stride " << stride << ", pad "
           << pad << ") does not fit input " << in.str();
        throw ShapeError(os.str());
    }
    return Shape4{in.n, out_ch, oh, ow};
}

Shape4 deconv2d_out_shape(const Shape4& in, long out_ch, long in_ch, long kh, long kw,
                          long stride, long pad) {
    if (stride < 1) throw ShapeError("deconv2d: stride must be >= 1");
    if (kh < stride || kw < stride) throw ShapeError("deconv2d: kernel size must be >= stride");
    if (in.c != out_ch) {
        std::ostringstream os;
        os << "deconv2d: input has " << in.c << " channels, weights expect " << out_ch;
        throw ShapeError(os.str());
    }
    const long oh = (in.h - 1) * stride + kh - 2 * pad;
    const long ow = (in.w - 1) * stride + kw - 2 * pad;
    if (oh <= 0 || ow <= 0) {
        std::ostringstream os;
        os << "deconv2d: output size " << oh << "x" << ow << " is not positive for input "
           << in.str();
        throw ShapeError(os.str());
    }
    return Shape4{in.n, in_ch, oh, ow};
}

template <typename T>
std::pair<Tensor<T>, Conv2dContext<T>> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
    if (static_cast<long>(p.bias.size()) != p.out_ch()) {
        throw ShapeError("conv2d: bias length does not match output channels");
    }
    const Shape4 os = conv2d_out_shape(x.shape, p.out_ch(), p.in_ch(), p.kh(), p.kw(),
                                       p.stride, p.pad);
    Tensor<T> y(os);
    const long N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const long O = p.out_ch(), KH = p.kh(), KW = p.kw(), S = p.stride, P = p.pad;
    const long OH = os.h, OW = os.w;

    for (long n = 0; n < N; ++n) {
        for (long o = 0; o < O; ++o) {
            T* __restrict yp = y.data.data() + y.index(n, o, 0, 0);
            std::fill(yp, yp + OH * OW, p.bias[static_cast<std::size_t>(o)]);
            for (long c = 0; c < C; ++c) {
                for (long u = 0; u < KH; ++u) {
                    for (long v = 0; v < KW; ++v) {
                        const T wv = p.weights.at(o, c, u, v);
                        if (wv == T(0)) continue;
                        for (long i = 0; i < OH; ++i) {
                            const long ih = i * S + u - P;
                            if (ih < 0 || ih >= H) continue;
                            const T* __restrict xr = x.data.data() + x.index(n, c, ih, 0);
                            T* __restrict yr = yp + i * OW;
                            if (S == 1) {
                                const long j0 = std::max(0L, P - v);
                                const long j1 = std::min(OW, W + P - v);
                                const T* __restrict xs = xr + (v - P);
                                for (long j = j0; j < j1; ++j) yr[j] += wv * xs[j];
                            } else {
                                for (long j = 0; j < OW; ++j) {
                                    const long iw = j * S + v - P;
                                    if (iw < 0 || iw >= W) continue;
                                    yr[j] += wv * xr[iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Conv2dContext<T> ctx{x, p, os};
    return {std::move(y), std::move(ctx)};
}

template <typename T>
ConvGrads<T> conv2d_grad(const Conv2dContext<T>& ctx, const Tensor<T>& dy) {
    if (!(dy.shape == ctx.out_shape)) {
        throw ShapeError(shape_mismatch("conv2d_grad: dY shape", dy.shape, ctx.out_shape));
    }
    const Tensor<T>& x = ctx.input;
    const ConvParams<T>& p = ctx.params;
    const long N = x.shape.n, C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const long O = p.out_ch(), KH = p.kh(), KW = p.kw(), S = p.stride, P = p.pad;
    const long OH = ctx.out_shape.h, OW = ctx.out_shape.w;

    ConvGrads<T> g{Tensor<T>(x.shape), Tensor<T>(p.weights.shape),
                   std::vector<T>(static_cast<std::size_t>(O), T(0))};

    for (long n = 0; n < N; ++n) {
        for (long o = 0; o < O; ++o) {
            const T* __restrict dyp = dy.data.data() + dy.index(n, o, 0, 0);
            T db = T(0);
            for (long t = 0; t < OH * OW; ++t) db += dyp[t];
            g.bias[static_cast<std::size_t>(o)] += db;

            for (long c = 0; c < C; ++c) {
                for (long u = 0; u < KH; ++u) {
                    for (long v = 0; v < KW; ++v) {
                        const T wv = p.weights.at(o, c, u, v);
                        T dw = T(0);
                        for (long i = 0; i < OH; ++i) {
                            const long ih = i * S + u - P;
                            if (ih < 0 || ih >= H) continue;
                            const T* __restrict dyr = dyp + i * OW;
                            const T* __restrict xr = x.data.data() + x.index(n, c, ih, 0);
                            T* __restrict dxr = g.input.data.data() + g.input.index(n, c, ih, 0);
                            if (S == 1) {
                                const long j0 = std::max(0L, P - v);
                                const long j1 = std::min(OW, W + P - v);
                                const T* __restrict xs = xr + (v - P);
                                T* __restrict dxs = dxr + (v - P);
                                for (long j = j0; j < j1; ++j) dxs[j] += wv * dyr[j];
                                dw += dot_stride1(dyr + j0, xs + j0, j1 - j0);
                            } else {
                                for (long j = 0; j < OW; ++j) {
                                    const long iw = j * S + v - P;
                                    if (iw < 0 || iw >= W) continue;
                                    dxr[iw] += wv * dyr[j];
                                    dw += dyr[j] * xr[iw];
                                }
                            }
                        }
                        g.weights.at(o, c, u, v) += dw;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
std::pair<Tensor<T>, Deconv2dContext<T>> deconv2d(const Tensor<T>& x, const ConvParams<T>& p) {
    if (static_cast<long>(p.bias.size()) != p.in_ch()) {
        throw ShapeError("deconv2d: bias length does not match output channels");
    }
    const Shape4 os = deconv2d_out_shape(x.shape, p.out_ch(), p.in_ch(), p.kh(), p.kw(),
                                         p.stride, p.pad);
    Tensor<T> y(os);
    const long N = x.shape.n, O = p.out_ch(), IH = x.shape.h, IW = x.shape.w;
    const long C = p.in_ch(), KH = p.kh(), KW = p.kw(), S = p.stride, P = p.pad;
    const long OH = os.h, OW = os.w;

    for (long n = 0; n < N; ++n) {
        for (long c = 0; c < C; ++c) {
            T* __restrict yp = y.data.data() + y.index(n, c, 0, 0);
            std::fill(yp, yp + OH * OW, p.bias[static_cast<std::size_t>(c)]);
        }
        for (long o = 0; o < O; ++o) {
            const T* __restrict xp = x.data.data() + x.index(n, o, 0, 0);
            for (long c = 0; c < C; ++c) {
                T* __restrict yp = y.data.data() + y.index(n, c, 0, 0);
                for (long u = 0; u < KH; ++u) {
                    for (long v = 0; v < KW; ++v) {
                        const T wv = p.weights.at(o, c, u, v);
                        if (wv == T(0)) continue;
                        for (long i = 0; i < IH; ++i) {
                            const long oh = i * S + u - P;
                            if (oh < 0 || oh >= OH) continue;
                            const T* __restrict xr = xp + i * IW;
                            T* __restrict yr = yp + oh * OW;
                            for (long j = 0; j < IW; ++j) {
                                const long ow = j * S + v - P;
                                if (ow < 0 || ow >= OW) continue;
                                yr[ow] += wv * xr[j];
                            }
                        }
                    }
                }
            }
        }
    }
    Deconv2dContext<T> ctx{x, p, os};
    return {std::move(y), std::move(ctx)};
}

template <typename T>
ConvGrads<T> deconv2d_grad(const Deconv2dContext<T>& ctx, const Tensor<T>& dy) {
    if (!(dy.shape == ctx.out_shape)) {
        throw ShapeError(shape_mismatch("deconv2d_grad: dY shape", dy.shape, ctx.out_shape));
    }
    const Tensor<T>& x = ctx.input;
    const ConvParams<T>& p = ctx.params;
    const long N = x.shape.n, O = p.out_ch(), IH = x.shape.h, IW = x.shape.w;
    const long C = p.in_ch(), KH = p.kh(), KW = p.kw(), S = p.stride, P = p.pad;
    const long OH = ctx.out_shape.h, OW = ctx.out_shape.w;

    ConvGrads<T> g{Tensor<T>(x.shape), Tensor<T>(p.weights.shape),
                   std::vector<T>(static_cast<std::size_t>(C), T(0))};

    for (long n = 0; n < N; ++n) {
        for (long c = 0; c < C; ++c) {
            const T* __restrict dyp = dy.data.data() + dy.index(n, c, 0, 0);
            T db = T(0);
            for (long t = 0; t < OH * OW; ++t) db += dyp[t];
            g.bias[static_cast<std::size_t>(c)] += db;
        }
        for (long o = 0; o < O; ++o) {
            const T* __restrict xp = x.data.data() + x.index(n, o, 0, 0);
            T* __restrict dxp = g.input.data.data() + g.input.index(n, o, 0, 0);
            for (long c = 0; c < C; ++c) {
                const T* __restrict dyp = dy.data.data() + dy.index(n, c, 0, 0);
                for (long u = 0; u < KH; ++u) {
                    for (long v = 0; v < KW; ++v) {
                        const T wv = p.weights.at(o, c, u, v);
                        T dw = T(0);
                        for (long i = 0; i < IH; ++i) {
                            const long oh = i * S + u - P;
                            if (oh < 0 || oh >= OH) continue;
                            const T* __restrict dyr = dyp + oh * OW;
                            const T* __restrict xr = xp + i * IW;
                            T* __restrict dxr = dxp + i * IW;
                            for (long j = 0; j < IW; ++j) {
                                const long ow = j * S + v - P;
                                if (ow < 0 || ow >= OW) continue;
                                dxr[j] += wv * dyr[ow];
                                dw += xr[j] * dyr[ow];
                            }
                        }
                        g.weights.at(o, c, u, v) += dw;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> make_bilinear_kernel(long factor, long channels) {
    if (factor < 1) throw ShapeError("make_bilinear_kernel: factor must be >= 1");
    if (channels < 1) throw ShapeError("make_bilinear_kernel: channels must be >= 1");
    const long k = 2 * factor - factor % 2;
    const double center = (2.0 * factor - 1.0 - factor % 2) / (2.0 * factor);
    std::vector<double> profile(static_cast<std::size_t>(k));
    for (long i = 0; i < k; ++i) {
        profile[static_cast<std::size_t>(i)] =
            1.0 - std::abs(static_cast<double>(i) / factor - center);
    }
    Tensor<T> kernel(Shape4{channels, channels, k, k});
    for (long c = 0; c < channels; ++c) {
        for (long i = 0; i < k; ++i) {
            for (long j = 0; j < k; ++j) {
                kernel.at(c, c, i, j) = static_cast<T>(
                    profile[static_cast<std::size_t>(i)] * profile[static_cast<std::size_t>(j)]);
            }
        }
    }
    return kernel;
}

template <typename T>
ConvParams<T> bilinear_upsample_params(long factor, long channels) {
    ConvParams<T> p;
    p.weights = make_bilinear_kernel<T>(factor, channels);
    p.bias.assign(static_cast<std::size_t>(channels), T(0));
    p.stride = factor;
    p.pad = (p.kh() - factor) / 2;
    return p;
}

template <typename T>
std::pair<Tensor<T>, ReluContext> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    ReluContext ctx{x.shape, std::vector<std::uint8_t>(x.numel())};
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const bool pos = x.data[i] > T(0);
        ctx.positive[i] = pos ? 1 : 0;
        y.data[i] = pos ? x.data[i] : T(0);
    }
    return {std::move(y), std::move(ctx)};
}

template <typename T>
Tensor<T> relu_grad(const ReluContext& ctx, const Tensor<T>& dy) {
    if (!(dy.shape == ctx.shape)) {
        throw ShapeError(shape_mismatch("relu_grad: dY shape", dy.shape, ctx.shape));
    }
    Tensor<T> dx(ctx.shape);
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        dx.data[i] = ctx.positive[i] ? dy.data[i] : T(0);
    }
    return dx;
}

template <typename T>
std::pair<Tensor<T>, MaxPool2Context> maxpool2(const Tensor<T>& x) {
    if (x.shape.h % 2 != 0 || x.shape.w % 2 != 0) {
        throw ShapeError("maxpool2: spatial dimensions must be even, got " + x.shape.str());
    }
    const Shape4 os{x.shape.n, x.shape.c, x.shape.h / 2, x.shape.w / 2};
    Tensor<T> y(os);
    MaxPool2Context ctx{x.shape, os, std::vector<std::size_t>(os.numel())};
    std::size_t out = 0;
    for (long n = 0; n < os.n; ++n) {
        for (long c = 0; c < os.c; ++c) {
            for (long i = 0; i < os.h; ++i) {
                for (long j = 0; j < os.w; ++j) {
                    std::size_t best = x.index(n, c, 2 * i, 2 * j);
                    T best_v = x.data[best];
                    const std::size_t cands[3] = {x.index(n, c, 2 * i, 2 * j + 1),
                                                  x.index(n, c, 2 * i + 1, 2 * j),
                                                  x.index(n, c, 2 * i + 1, 2 * j + 1)};
                    for (std::size_t cand : cands) {
                        if (x.data[cand] > best_v) {
                            best = cand;
                            best_v = x.data[cand];
                        }
                    }
                    y.data[out] = best_v;
                    ctx.argmax[out] = best;
                    ++out;
                }
            }
        }
    }
    return {std::move(y), std::move(ctx)};
}

template <typename T>
Tensor<T> maxpool2_grad(const MaxPool2Context& ctx, const Tensor<T>& dy) {
    if (!(dy.shape == ctx.out_shape)) {
        throw ShapeError(shape_mismatch("maxpool2_grad: dY shape", dy.shape, ctx.out_shape));
    }
    Tensor<T> dx(ctx.in_shape);
    for (std::size_t i = 0; i < dy.data.size(); ++i) {
        dx.data[ctx.argmax[i]] += dy.data[i];
    }
    return dx;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    const Shape4& s0 = xs.front().shape;
    long channels = 0;
    for (const Tensor<T>& x : xs) {
        if (x.shape.n != s0.n || x.shape.h != s0.h || x.shape.w != s0.w) {
            throw ShapeError(shape_mismatch("concat_channels: spatial/batch mismatch",
                                            x.shape, s0));
        }
        channels += x.shape.c;
    }
    Tensor<T> y(Shape4{s0.n, channels, s0.h, s0.w});
    const std::size_t plane = static_cast<std::size_t>(s0.h) * static_cast<std::size_t>(s0.w);
    for (long n = 0; n < s0.n; ++n) {
        std::size_t dst = y.index(n, 0, 0, 0);
        for (const Tensor<T>& x : xs) {
            const std::size_t len = static_cast<std::size_t>(x.shape.c) * plane;
            std::copy_n(x.data.data() + x.index(n, 0, 0, 0), len, y.data.data() + dst);
            dst += len;
        }
    }
    return y;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<long>& sizes) {
    long total = 0;
    for (long s : sizes) {
        if (s <= 0) throw ShapeError("split_channels: sizes must be positive");
        total += s;
    }
    if (total != x.shape.c) {
        std::ostringstream os;
        os << "split_channels: sizes sum to " << total << " but input has " << x.shape.c
           << " channels";
        throw ShapeError(os.str());
    }
    std::vector<Tensor<T>> out;
    out.reserve(sizes.size());
    const std::size_t plane = static_cast<std::size_t>(x.shape.h) * static_cast<std::size_t>(x.shape.w);
    long c0 = 0;
    for (long s : sizes) {
        Tensor<T> part(Shape4{x.shape.n, s, x.shape.h, x.shape.w});
        for (long n = 0; n < x.shape.n; ++n) {
            std::copy_n(x.data.data() + x.index(n, c0, 0, 0),
                        static_cast<std::size_t>(s) * plane,
                        part.data.data() + part.index(n, 0, 0, 0));
        }
        out.push_back(std::move(part));
        c0 += s;
    }
    return out;
}

template <typename T>
void sgd_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& vel,
                double lr, double momentum, double weight_decay) {
    if (!(param.shape == grad.shape) || !(param.shape == vel.shape)) {
        throw ShapeError("sgd_update: param/grad/velocity shapes differ");
    }
    if (!std::isfinite(lr) || !std::isfinite(momentum) || !std::isfinite(weight_decay)) {
        throw ShapeError("sgd_update: non-finite hyperparameter");
    }
    const T a = static_cast<T>(lr);
    const T m = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const T pv = param.data[i];
        const T gv = grad.data[i];
        if (!std::isfinite(static_cast<double>(pv)) || !std::isfinite(static_cast<double>(gv)) ||
            !std::isfinite(static_cast<double>(vel.data[i]))) {
            throw ShapeError("sgd_update: non-finite input value");
        }
        const T g_total = gv + wd * pv;
        vel.data[i] = m * vel.data[i] + g_total;
        param.data[i] = pv - a * vel.data[i];
    }
}

#define GWCOSAL_INSTANTIATE_OPS(T)                                                              \
    template std::pair<Tensor<T>, Conv2dContext<T>> conv2d(const Tensor<T>&,                    \
                                                           const ConvParams<T>&);               \
    template ConvGrads<T> conv2d_grad(const Conv2dContext<T>&, const Tensor<T>&);               \
    template std::pair<Tensor<T>, Deconv2dContext<T>> deconv2d(const Tensor<T>&,                \
                                                               const ConvParams<T>&);           \
    template ConvGrads<T> deconv2d_grad(const Deconv2dContext<T>&, const Tensor<T>&);           \
    template Tensor<T> make_bilinear_kernel<T>(long, long);                                     \
    template ConvParams<T> bilinear_upsample_params<T>(long, long);                             \
    template std::pair<Tensor<T>, ReluContext> relu(const Tensor<T>&);                          \
    template Tensor<T> relu_grad(const ReluContext&, const Tensor<T>&);                         \
    template std::pair<Tensor<T>, MaxPool2Context> maxpool2(const Tensor<T>&);                  \
    template Tensor<T> maxpool2_grad(const MaxPool2Context&, const Tensor<T>&);                 \
    template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                          \
    template std::vector<Tensor<T>> split_channels(const Tensor<T>&, const std::vector<long>&); \
    template void sgd_update(Tensor<T>&, const Tensor<T>&, Tensor<T>&, double, double, double);

GWCOSAL_INSTANTIATE_OPS(float)
GWCOSAL_INSTANTIATE_OPS(double)

#undef GWCOSAL_INSTANTIATE_OPS

} // namespace gwcosal
