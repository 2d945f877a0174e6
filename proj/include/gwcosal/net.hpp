#ifndef GWCOSAL_NET_HPP
#define GWCOSAL_NET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gwcosal/ops.hpp"
#include "gwcosal/tensor.hpp"

namespace gwcosal::net {

// Structural description of the group network. Two stock profiles:
//   "paper": VGG-16 conv widths, pools after convs 2/4/7/10, 16x upsampling.
//   "desk":  same 13-conv topology at 1/8 width, pools after convs 2/4/7,
//            8x upsampling; small enough to train on a CPU.
// The semantic block always has 13 conv layers; every conv in the network is
// 3x3, stride 1, pad 1, with ReLU everywhere except the final 1-channel
// merge conv and the deconv head. The group and single branch widths must be
// equal so the single-image ablation mode can substitute x_i for X.
struct NetConfig {
    int k = 5;
    std::string profile = "desk";
    long input_h = 128;
    long input_w = 256;
    std::vector<long> semantic_widths;
    std::vector<int> pool_positions; // 1-based conv indices followed by a 2x2 pool
    long group_branch_width = 32;
    long single_branch_width = 32;
    long upsample_factor = 8;

    static NetConfig desk(int k = 5, long input_h = 128, long input_w = 256);
    static NetConfig paper(int k = 5, long input_h = 128, long input_w = 256);
    // Tiny widths for finite-difference checking of the full net.
    static NetConfig micro(int k = 3, long input_h = 16, long input_w = 16);

    void validate() const;

    long semantic_channels() const { return semantic_widths.back(); }
    long feature_h() const { return input_h / upsample_factor; }
    long feature_w() const { return input_w / upsample_factor; }

    bool operator==(const NetConfig&) const = default;
};

// Named learnable tensors plus per-tensor momentum buffers. Parameter names
// are namespaced (shared/, intra/, single/, collab/); each namespace exists
// exactly once no matter how many group positions consume it.
template <typename T>
struct ParamStore {
    struct Entry {
        Tensor<T> value;
        Tensor<T> velocity;
    };
    std::map<std::string, Entry> entries;

    void insert(const std::string& name, Tensor<T> value) {
        Tensor<T> vel(value.shape);
        entries[name] = Entry{std::move(value), std::move(vel)};
    }

    bool contains(const std::string& name) const { return entries.count(name) != 0; }

    Tensor<T>& value(const std::string& name) { return entry(name).value; }
    const Tensor<T>& value(const std::string& name) const { return entry(name).value; }

    Entry& entry(const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    std::size_t tensor_count() const { return entries.size(); }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, e] : entries) n += e.value.numel();
        return n;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& [name, e] : entries) out.push_back(name);
        return out;
    }
};

// name -> parameter gradient, aligned with ParamStore keys.
template <typename T>
using GradStore = std::map<std::string, Tensor<T>>;

enum class GroupMode {
    group,           // full network: heads consume concat(x_i, X)
    single_ablation, // intra branch zeroed; heads consume concat(x_i, x_i)
};

template <typename T>
struct ConvReluTrace {
    Conv2dContext<T> conv;
    ReluContext relu;
    bool has_relu = false;
};

template <typename T>
struct SemanticTrace {
    std::vector<ConvReluTrace<T>> layers; // 13
    std::vector<MaxPool2Context> pools;   // one per pool position, in order
};

template <typename T>
struct BranchTrace {
    std::vector<ConvReluTrace<T>> layers; // 3
};

template <typename T>
struct HeadTrace {
    Conv2dContext<T> merge;
    Deconv2dContext<T> deconv;
};

// Everything forward_group produces: the features of Eq. 3-6 plus the
// contexts backward_group consumes.
template <typename T>
struct GroupActivations {
    GroupMode mode = GroupMode::group;
    std::vector<Tensor<T>> s;  // K semantic features
    Tensor<T> big_x;           // group-wise feature X (zero in ablation mode)
    std::vector<Tensor<T>> x;  // K single-image features
    std::vector<Tensor<T>> r;  // K saliency maps

    std::vector<SemanticTrace<T>> semantic_traces;
    BranchTrace<T> intra_trace;
    std::vector<BranchTrace<T>> single_traces;
    std::vector<HeadTrace<T>> head_traces;
};

// Every parameter name the config implies, with its shape. Weight tensors
// are (out, in, 3, 3); biases are stored as (out, 1, 1, 1).
std::map<std::string, Shape4> param_shapes(const NetConfig& cfg);

// Conv weights ~ Normal(0, sqrt(2/fan_in)) from the seeded generator in
// gwcosal/rng.hpp, biases zero, deconv head from make_bilinear_kernel.
// Weight tensors draw from the generator in sorted-name order, so stores are
// bit-identical for identical (cfg, seed).
template <typename T>
ParamStore<T> init_params(const NetConfig& cfg, std::uint64_t seed);

template <typename T>
Tensor<T> semantic_forward(const Tensor<T>& image, const ParamStore<T>& params,
                           const NetConfig& cfg);

template <typename T>
Tensor<T> intra_forward(const std::vector<Tensor<T>>& s, const ParamStore<T>& params,
                        const NetConfig& cfg);

template <typename T>
Tensor<T> single_forward(const Tensor<T>& s_i, const ParamStore<T>& params,
                         const NetConfig& cfg);

template <typename T>
Tensor<T> collaborative_forward(const Tensor<T>& x_i, const Tensor<T>& big_x,
                                const ParamStore<T>& params, const NetConfig& cfg);

template <typename T>
GroupActivations<T> forward_group(const std::vector<Tensor<T>>& images,
                                  const ParamStore<T>& params, const NetConfig& cfg,
                                  GroupMode mode = GroupMode::group);

// Exact gradients for every parameter; shared parameters accumulate over the
// K group positions in fixed order (position 0..K-1) for bit-determinism.
// Only GroupMode::group activations are accepted.
template <typename T>
GradStore<T> backward_group(const GroupActivations<T>& acts, const std::vector<Tensor<T>>& d_r,
                            const ParamStore<T>& params, const NetConfig& cfg);

// Canonical parameter names.
std::string semantic_conv_name(int layer_1based, bool bias);
std::string intra_conv_name(int layer_1based, bool bias);
std::string single_conv_name(int layer_1based, bool bias);
std::string collab_merge_name(bool bias);
std::string collab_deconv_name(bool bias);

} // namespace gwcosal::net

#endif
