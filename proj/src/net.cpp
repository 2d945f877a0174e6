#include "gwcosal/net.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gwcosal/rng.hpp"

namespace gwcosal::net {

namespace {

std::string two_digit(int v) {
    std::ostringstream os;
    if (v < 10) os << "0";
    os << v;
    return os.str();
}

template <typename T>
std::vector<T> bias_to_vec(const Tensor<T>& b) {
    return b.data;
}

template <typename T>
Tensor<T> bias_to_tensor(const std::vector<T>& b) {
    Tensor<T> t(Shape4{static_cast<long>(b.size()), 1, 1, 1});
    t.data = b;
    return t;
}

template <typename T>
ConvParams<T> conv_params_from(const ParamStore<T>& ps, const std::string& w_name,
                               const std::string& b_name, long stride, long pad) {
    ConvParams<T> p;
    p.weights = ps.value(w_name);
    p.bias = bias_to_vec(ps.value(b_name));
    p.stride = stride;
    p.pad = pad;
    return p;
}

template <typename T>
Tensor<T> run_conv(const Tensor<T>& in, const ParamStore<T>& ps, const std::string& w_name,
                   const std::string& b_name, bool use_relu, ConvReluTrace<T>& trace) {
    const ConvParams<T> p = conv_params_from(ps, w_name, b_name, 1, 1);
    auto [y, ctx] = conv2d(in, p);
    trace.conv = std::move(ctx);
    trace.has_relu = use_relu;
    if (!use_relu) return std::move(y);
    auto [a, rctx] = relu(y);
    trace.relu = std::move(rctx);
    return std::move(a);
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
    if (acc.numel() == 0) {
        acc = g;
        return;
    }
    if (!(acc.shape == g.shape)) throw ShapeError("gradient accumulation shape mismatch");
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
}

template <typename T>
void accumulate(GradStore<T>& grads, const std::string& name, const Tensor<T>& g) {
    add_into(grads[name], g);
}

// Backward through one conv(+relu) layer; accumulates parameter gradients
// and returns the gradient w.r.t. the layer input.
template <typename T>
Tensor<T> conv_layer_backward(const ConvReluTrace<T>& trace, const Tensor<T>& d_out,
                              GradStore<T>& grads, const std::string& w_name,
                              const std::string& b_name) {
    const Tensor<T>* d = &d_out;
    Tensor<T> d_pre;
    if (trace.has_relu) {
        d_pre = relu_grad(trace.relu, d_out);
        d = &d_pre;
    }
    ConvGrads<T> cg = conv2d_grad(trace.conv, *d);
    accumulate(grads, w_name, cg.weights);
    accumulate(grads, b_name, bias_to_tensor(cg.bias));
    return std::move(cg.input);
}

template <typename T>
Tensor<T> semantic_forward_traced(const Tensor<T>& image, const ParamStore<T>& params,
                                  const NetConfig& cfg, SemanticTrace<T>& trace) {
    if (image.shape.n != 1 || image.shape.c != 3 || image.shape.h != cfg.input_h ||
        image.shape.w != cfg.input_w) {
        throw ShapeError("semantic_forward: expected image of shape (1, 3, " +
                         std::to_string(cfg.input_h) + ", " + std::to_string(cfg.input_w) +
                         "), got " + image.shape.str());
    }
    trace.layers.resize(13);
    trace.pools.clear();
    Tensor<T> cur = image;
    std::size_t pool_idx = 0;
    for (int l = 1; l <= 13; ++l) {
        cur = run_conv(cur, params, semantic_conv_name(l, false), semantic_conv_name(l, true),
                       /*use_relu=*/true, trace.layers[static_cast<std::size_t>(l - 1)]);
        if (pool_idx < cfg.pool_positions.size() &&
            cfg.pool_positions[pool_idx] == l) {
            auto [pooled, pctx] = maxpool2(cur);
            trace.pools.push_back(std::move(pctx));
            cur = std::move(pooled);
            ++pool_idx;
        }
    }
    return cur;
}

template <typename T>
Tensor<T> branch_forward_traced(const Tensor<T>& in, const ParamStore<T>& params,
                                const NetConfig&, bool intra, BranchTrace<T>& trace) {
    trace.layers.resize(3);
    Tensor<T> cur = in;
    for (int l = 1; l <= 3; ++l) {
        const std::string w = intra ? intra_conv_name(l, false) : single_conv_name(l, false);
        const std::string b = intra ? intra_conv_name(l, true) : single_conv_name(l, true);
        cur = run_conv(cur, params, w, b, /*use_relu=*/true,
                       trace.layers[static_cast<std::size_t>(l - 1)]);
    }
    return cur;
}

template <typename T>
Tensor<T> head_forward_traced(const Tensor<T>& x_i, const Tensor<T>& big_x,
                              const ParamStore<T>& params, const NetConfig& cfg,
                              HeadTrace<T>& trace) {
    if (x_i.shape.h != big_x.shape.h || x_i.shape.w != big_x.shape.w ||
        x_i.shape.n != big_x.shape.n) {
        throw ShapeError("collaborative_forward: x_i " + x_i.shape.str() +
                         " and X " + big_x.shape.str() + " differ spatially");
    }
    const Tensor<T> merged_in = concat_channels<T>({x_i, big_x});
    const ConvParams<T> merge_p =
        conv_params_from(params, collab_merge_name(false), collab_merge_name(true), 1, 1);
    auto [pre, mctx] = conv2d(merged_in, merge_p);
    trace.merge = std::move(mctx);

    ConvParams<T> dec_p;
    dec_p.weights = params.value(collab_deconv_name(false));
    dec_p.bias = bias_to_vec(params.value(collab_deconv_name(true)));
    dec_p.stride = cfg.upsample_factor;
    dec_p.pad = (dec_p.kh() - cfg.upsample_factor) / 2;
    auto [r, dctx] = deconv2d(pre, dec_p);
    trace.deconv = std::move(dctx);
    return std::move(r);
}

} // namespace

std::string semantic_conv_name(int layer_1based, bool bias) {
    return "shared/conv" + two_digit(layer_1based) + (bias ? ".b" : ".w");
}
std::string intra_conv_name(int layer_1based, bool bias) {
    return "intra/conv" + std::to_string(layer_1based) + (bias ? ".b" : ".w");
}
std::string single_conv_name(int layer_1based, bool bias) {
    return "single/conv" + std::to_string(layer_1based) + (bias ? ".b" : ".w");
}
std::string collab_merge_name(bool bias) { return bias ? "collab/merge.b" : "collab/merge.w"; }
std::string collab_deconv_name(bool bias) { return bias ? "collab/deconv.b" : "collab/deconv.w"; }

NetConfig NetConfig::desk(int k, long input_h, long input_w) {
    NetConfig cfg;
    cfg.k = k;
    cfg.profile = "desk";
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.semantic_widths = {8, 8, 16, 16, 32, 32, 32, 64, 64, 64, 64, 64, 64};
    cfg.pool_positions = {2, 4, 7};
    cfg.group_branch_width = 32;
    cfg.single_branch_width = 32;
    cfg.upsample_factor = 8;
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::paper(int k, long input_h, long input_w) {
    NetConfig cfg;
    cfg.k = k;
    cfg.profile = "paper";
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.semantic_widths = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    cfg.pool_positions = {2, 4, 7, 10};
    cfg.group_branch_width = 128;
    cfg.single_branch_width = 128;
    cfg.upsample_factor = 16;
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::micro(int k, long input_h, long input_w) {
    NetConfig cfg;
    cfg.k = k;
    cfg.profile = "micro";
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    cfg.semantic_widths = {2, 2, 2, 2, 3, 3, 3, 4, 4, 4, 4, 4, 4};
    cfg.pool_positions = {2, 4, 7};
    cfg.group_branch_width = 4;
    cfg.single_branch_width = 4;
    cfg.upsample_factor = 8;
    cfg.validate();
    return cfg;
}

void NetConfig::validate() const {
    if (k < 1) throw ConfigError("NetConfig: k must be >= 1");
    if (semantic_widths.size() != 13) {
        throw ConfigError("NetConfig: semantic block must have exactly 13 conv layers, got " +
                          std::to_string(semantic_widths.size()));
    }
    for (long w : semantic_widths) {
        if (w < 1) throw ConfigError("NetConfig: semantic widths must be positive");
    }
    int prev = 0;
    for (int p : pool_positions) {
        if (p < 1 || p > 13) throw ConfigError("NetConfig: pool positions must be in [1, 13]");
        if (p <= prev) throw ConfigError("NetConfig: pool positions must be ascending");
        prev = p;
    }
    const long expected_factor = 1L << pool_positions.size();
    if (upsample_factor != expected_factor) {
        throw ConfigError("NetConfig: upsample_factor " + std::to_string(upsample_factor) +
                          " does not equal cumulative pooling downsampling " +
                          std::to_string(expected_factor));
    }
    if (input_h < upsample_factor || input_w < upsample_factor ||
        input_h % upsample_factor != 0 || input_w % upsample_factor != 0) {
        throw ConfigError("NetConfig: input size " + std::to_string(input_h) + "x" +
                          std::to_string(input_w) + " must be divisible by " +
                          std::to_string(upsample_factor));
    }
    if (group_branch_width < 1 || single_branch_width < 1) {
        throw ConfigError("NetConfig: branch widths must be positive");
    }
    if (group_branch_width != single_branch_width) {
        throw ConfigError("NetConfig: group and single branch widths must match (ablation mode "
                          "substitutes x_i for X)");
    }
}

std::map<std::string, Shape4> param_shapes(const NetConfig& cfg) {
    cfg.validate();
    std::map<std::string, Shape4> shapes;
    auto conv = [&shapes](const std::string& w_name, const std::string& b_name, long out_c,
                          long in_c) {
        shapes[w_name] = Shape4{out_c, in_c, 3, 3};
        shapes[b_name] = Shape4{out_c, 1, 1, 1};
    };

    long in_c = 3;
    for (int l = 1; l <= 13; ++l) {
        const long out_c = cfg.semantic_widths[static_cast<std::size_t>(l - 1)];
        conv(semantic_conv_name(l, false), semantic_conv_name(l, true), out_c, in_c);
        in_c = out_c;
    }

    const long cs = cfg.semantic_channels();
    conv(intra_conv_name(1, false), intra_conv_name(1, true), cfg.group_branch_width,
         static_cast<long>(cfg.k) * cs);
    conv(intra_conv_name(2, false), intra_conv_name(2, true), cfg.group_branch_width,
         cfg.group_branch_width);
    conv(intra_conv_name(3, false), intra_conv_name(3, true), cfg.group_branch_width,
         cfg.group_branch_width);

    conv(single_conv_name(1, false), single_conv_name(1, true), cfg.single_branch_width, cs);
    conv(single_conv_name(2, false), single_conv_name(2, true), cfg.single_branch_width,
         cfg.single_branch_width);
    conv(single_conv_name(3, false), single_conv_name(3, true), cfg.single_branch_width,
         cfg.single_branch_width);

    conv(collab_merge_name(false), collab_merge_name(true), 1,
         cfg.single_branch_width + cfg.group_branch_width);

    const long dk = 2 * cfg.upsample_factor - cfg.upsample_factor % 2;
    shapes[collab_deconv_name(false)] = Shape4{1, 1, dk, dk};
    shapes[collab_deconv_name(true)] = Shape4{1, 1, 1, 1};
    return shapes;
}

template <typename T>
ParamStore<T> init_params(const NetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore<T> ps;
    for (const auto& [name, shape] : param_shapes(cfg)) {
        if (name == collab_deconv_name(false)) {
            ps.insert(name, make_bilinear_kernel<T>(cfg.upsample_factor, 1));
        } else if (name.ends_with(".w")) {
            const double fan_in = static_cast<double>(shape.c) * static_cast<double>(shape.h) *
                                  static_cast<double>(shape.w);
            const double std_dev = std::sqrt(2.0 / fan_in);
            Tensor<T> w(shape);
            for (std::size_t i = 0; i < w.data.size(); ++i) {
                w.data[i] = static_cast<T>(rng.normal() * std_dev);
            }
            ps.insert(name, std::move(w));
        } else {
            ps.insert(name, Tensor<T>(shape));
        }
    }
    return ps;
}

template <typename T>
Tensor<T> semantic_forward(const Tensor<T>& image, const ParamStore<T>& params,
                           const NetConfig& cfg) {
    SemanticTrace<T> trace;
    return semantic_forward_traced(image, params, cfg, trace);
}

template <typename T>
Tensor<T> intra_forward(const std::vector<Tensor<T>>& s, const ParamStore<T>& params,
                        const NetConfig& cfg) {
    if (static_cast<int>(s.size()) != cfg.k) {
        throw ShapeError("intra_forward: expected " + std::to_string(cfg.k) +
                         " semantic features, got " + std::to_string(s.size()));
    }
    BranchTrace<T> trace;
    return branch_forward_traced(concat_channels(s), params, cfg, /*intra=*/true, trace);
}

template <typename T>
Tensor<T> single_forward(const Tensor<T>& s_i, const ParamStore<T>& params,
                         const NetConfig& cfg) {
    BranchTrace<T> trace;
    return branch_forward_traced(s_i, params, cfg, /*intra=*/false, trace);
}

template <typename T>
Tensor<T> collaborative_forward(const Tensor<T>& x_i, const Tensor<T>& big_x,
                                const ParamStore<T>& params, const NetConfig& cfg) {
    HeadTrace<T> trace;
    return head_forward_traced(x_i, big_x, params, cfg, trace);
}

template <typename T>
GroupActivations<T> forward_group(const std::vector<Tensor<T>>& images,
                                  const ParamStore<T>& params, const NetConfig& cfg,
                                  GroupMode mode) {
    if (static_cast<int>(images.size()) != cfg.k) {
        throw ShapeError("forward_group: expected " + std::to_string(cfg.k) + " images, got " +
                         std::to_string(images.size()));
    }
    GroupActivations<T> acts;
    acts.mode = mode;
    acts.semantic_traces.resize(images.size());
    acts.single_traces.resize(images.size());
    acts.head_traces.resize(images.size());

    for (std::size_t i = 0; i < images.size(); ++i) {
        acts.s.push_back(
            semantic_forward_traced(images[i], params, cfg, acts.semantic_traces[i]));
    }

    if (mode == GroupMode::group) {
        acts.big_x = branch_forward_traced(concat_channels(acts.s), params, cfg,
                                           /*intra=*/true, acts.intra_trace);
    } else {
        acts.big_x = Tensor<T>(Shape4{1, cfg.group_branch_width, cfg.feature_h(),
                                      cfg.feature_w()});
    }

    for (std::size_t i = 0; i < images.size(); ++i) {
        acts.x.push_back(
            branch_forward_traced(acts.s[i], params, cfg, /*intra=*/false,
                                  acts.single_traces[i]));
    }

    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor<T>& x_slot = acts.x[i];
        const Tensor<T>& group_slot = (mode == GroupMode::group) ? acts.big_x : acts.x[i];
        acts.r.push_back(
            head_forward_traced(x_slot, group_slot, params, cfg, acts.head_traces[i]));
    }
    return acts;
}

template <typename T>
GradStore<T> backward_group(const GroupActivations<T>& acts, const std::vector<Tensor<T>>& d_r,
                            const ParamStore<T>& params, const NetConfig& cfg) {
    if (acts.mode != GroupMode::group) {
        throw ConfigError("backward_group: single-ablation activations are inference-only");
    }
    if (d_r.size() != acts.r.size()) {
        throw ShapeError("backward_group: expected " + std::to_string(acts.r.size()) +
                         " output gradients, got " + std::to_string(d_r.size()));
    }
    GradStore<T> grads;
    for (const auto& [name, e] : params.entries) grads[name] = Tensor<T>(e.value.shape);

    const int k = cfg.k;
    Tensor<T> d_big_x(acts.big_x.shape);
    std::vector<Tensor<T>> d_s(static_cast<std::size_t>(k));

    for (int i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!(d_r[idx].shape == acts.r[idx].shape)) {
            throw ShapeError("backward_group: dR[" + std::to_string(i) + "] shape " +
                             d_r[idx].shape.str() + " does not match R " +
                             acts.r[idx].shape.str());
        }
        ConvGrads<T> dg = deconv2d_grad(acts.head_traces[idx].deconv, d_r[idx]);
        accumulate(grads, collab_deconv_name(false), dg.weights);
        accumulate(grads, collab_deconv_name(true), bias_to_tensor(dg.bias));

        ConvGrads<T> mg = conv2d_grad(acts.head_traces[idx].merge, dg.input);
        accumulate(grads, collab_merge_name(false), mg.weights);
        accumulate(grads, collab_merge_name(true), bias_to_tensor(mg.bias));

        std::vector<Tensor<T>> parts = split_channels(
            mg.input, {cfg.single_branch_width, cfg.group_branch_width});
        add_into(d_big_x, parts[1]);

        // single branch (shared weights): layers 3..1
        Tensor<T> d = std::move(parts[0]);
        for (int l = 3; l >= 1; --l) {
            d = conv_layer_backward(acts.single_traces[idx].layers[static_cast<std::size_t>(l - 1)],
                                    d, grads, single_conv_name(l, false),
                                    single_conv_name(l, true));
        }
        d_s[idx] = std::move(d);
    }

    // intra branch, then distribute to the K semantic positions
    Tensor<T> d = std::move(d_big_x);
    for (int l = 3; l >= 1; --l) {
        d = conv_layer_backward(acts.intra_trace.layers[static_cast<std::size_t>(l - 1)], d,
                                grads, intra_conv_name(l, false), intra_conv_name(l, true));
    }
    const long cs = cfg.semantic_channels();
    std::vector<Tensor<T>> d_s_intra = split_channels(d, std::vector<long>(
                                                             static_cast<std::size_t>(k), cs));
    for (int i = 0; i < k; ++i) {
        add_into(d_s[static_cast<std::size_t>(i)], d_s_intra[static_cast<std::size_t>(i)]);
    }

    // shared semantic block: accumulate over positions 0..K-1 in order
    for (int i = 0; i < k; ++i) {
        const SemanticTrace<T>& trace = acts.semantic_traces[static_cast<std::size_t>(i)];
        Tensor<T> cur = std::move(d_s[static_cast<std::size_t>(i)]);
        for (int l = 13; l >= 1; --l) {
            for (std::size_t pi = trace.pools.size(); pi-- > 0;) {
                if (cfg.pool_positions[pi] == l) {
                    cur = maxpool2_grad(trace.pools[pi], cur);
                }
            }
            cur = conv_layer_backward(trace.layers[static_cast<std::size_t>(l - 1)], cur, grads,
                                      semantic_conv_name(l, false), semantic_conv_name(l, true));
        }
    }
    return grads;
}

#define GWCOSAL_INSTANTIATE_NET(T)                                                             \
    template ParamStore<T> init_params<T>(const NetConfig&, std::uint64_t);                    \
    template Tensor<T> semantic_forward(const Tensor<T>&, const ParamStore<T>&,                \
                                        const NetConfig&);                                     \
    template Tensor<T> intra_forward(const std::vector<Tensor<T>>&, const ParamStore<T>&,      \
                                     const NetConfig&);                                        \
    template Tensor<T> single_forward(const Tensor<T>&, const ParamStore<T>&,                  \
                                      const NetConfig&);                                       \
    template Tensor<T> collaborative_forward(const Tensor<T>&, const Tensor<T>&,               \
                                             const ParamStore<T>&, const NetConfig&);          \
    template GroupActivations<T> forward_group(const std::vector<Tensor<T>>&,                  \
                                               const ParamStore<T>&, const NetConfig&,         \
                                               GroupMode);                                     \
    template GradStore<T> backward_group(const GroupActivations<T>&,                           \
                                         const std::vector<Tensor<T>>&, const ParamStore<T>&,  \
                                         const NetConfig&);

GWCOSAL_INSTANTIATE_NET(float)
GWCOSAL_INSTANTIATE_NET(double)

#undef GWCOSAL_INSTANTIATE_NET

} // namespace gwcosal::net
