#ifndef GWCOSAL_TRAINER_HPP
#define GWCOSAL_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <ostream>
#include <utility>
#include <vector>

#include "gwcosal/net.hpp"
#include "gwcosal/tensor.hpp"

namespace gwcosal::train {

enum class Reduction { sum, mean };

struct TrainConfig {
    double lr = 1e-3;
    double momentum = 0.99;
    double weight_decay = 0.0005;
    long max_iters = 1000;
    std::uint64_t seed = 0;
    Reduction reduction = Reduction::mean;
    long snapshot_every = 0; // 0 disables snapshots

    // Original toolchain values: lr 1e-10 with sum reduction, meant for
    // full-resolution maps on top of pretrained initialization.
    static TrainConfig paper_preset() {
        TrainConfig cfg;
        cfg.lr = 1e-10;
        cfg.reduction = Reduction::sum;
        cfg.max_iters = 60000;
        return cfg;
    }

    void validate() const {
        // lr 0 is a documented no-op step; real runs want lr > 0
        if (!(lr >= 0.0)) throw ConfigError("TrainConfig: lr must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw ConfigError("TrainConfig: momentum must be in [0, 1)");
        }
        if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
        if (max_iters < 0) throw ConfigError("TrainConfig: max_iters must be >= 0");
        if (snapshot_every < 0) throw ConfigError("TrainConfig: snapshot_every must be >= 0");
    }
};

// One training group: K images plus K ground-truth maps in [0, 1].
template <typename T>
struct Sample {
    std::vector<Tensor<T>> images;
    std::vector<Tensor<T>> gt;
};

struct History {
    std::vector<double> losses;          // one entry per iteration run
    std::vector<long> snapshot_iters;    // 1-based iteration numbers
};

// Squared Euclidean loss over the group: sum_i ||GT_i - R_i||_F^2 for sum
// reduction; mean divides by the total pixel count across the K maps.
// Returns the loss and dLoss/dR_i = 2 (R_i - GT_i) (scaled for mean).
template <typename T>
std::pair<double, std::vector<Tensor<T>>> group_loss(const std::vector<Tensor<T>>& r,
                                                     const std::vector<Tensor<T>>& gt,
                                                     Reduction reduction);

// forward_group -> group_loss -> backward_group -> sgd_update on every
// parameter. Returns the pre-update loss. Throws DivergenceError on a
// non-finite loss before touching any parameter.
template <typename T>
double train_step(const Sample<T>& sample, net::ParamStore<T>& params,
                  const net::NetConfig& net_cfg, const TrainConfig& train_cfg);

template <typename T>
using SnapshotFn = std::function<void(long iter, const net::ParamStore<T>& params)>;

// Cycles the samples in seeded-shuffle order (reshuffled each pass) for
// max_iters steps. Writes `iter <n> loss <value>` per iteration to `log`
// when given. Bit-deterministic for fixed (seed, samples, cfgs).
template <typename T>
History fit(const std::vector<Sample<T>>& samples, net::ParamStore<T>& params,
            const net::NetConfig& net_cfg, const TrainConfig& train_cfg,
            std::ostream* log = nullptr, const SnapshotFn<T>& snapshot = {});

} // namespace gwcosal::train

#endif
