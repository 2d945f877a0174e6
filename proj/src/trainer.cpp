#include "gwcosal/trainer.hpp"

#include <cmath>
#include <numeric>

#include "gwcosal/rng.hpp"

namespace gwcosal::train {

template <typename T>
std::pair<double, std::vector<Tensor<T>>> group_loss(const std::vector<Tensor<T>>& r,
                                                     const std::vector<Tensor<T>>& gt,
                                                     Reduction reduction) {
    if (r.size() != gt.size() || r.empty()) {
        throw ShapeError("group_loss: prediction/ground-truth counts differ (" +
                         std::to_string(r.size()) + " vs " + std::to_string(gt.size()) + ")");
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(r[i].shape == gt[i].shape)) {
            throw ShapeError("group_loss: map " + std::to_string(i) + " shape " +
                             r[i].shape.str() + " does not match ground truth " +
                             gt[i].shape.str());
        }
        total += r[i].numel();
    }
    const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(total) : 1.0;

    double loss = 0.0;
    std::vector<Tensor<T>> d_r;
    d_r.reserve(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        Tensor<T> d(r[i].shape);
        for (std::size_t p = 0; p < r[i].data.size(); ++p) {
            const double diff = static_cast<double>(r[i].data[p]) -
                                static_cast<double>(gt[i].data[p]);
            loss += diff * diff;
            d.data[p] = static_cast<T>(2.0 * diff * scale);
        }
        d_r.push_back(std::move(d));
    }
    return {loss * scale, std::move(d_r)};
}

template <typename T>
double train_step(const Sample<T>& sample, net::ParamStore<T>& params,
                  const net::NetConfig& net_cfg, const TrainConfig& train_cfg) {
    train_cfg.validate();
    if (sample.gt.size() != sample.images.size()) {
        throw ShapeError("train_step: sample has " + std::to_string(sample.images.size()) +
                         " images but " + std::to_string(sample.gt.size()) + " ground truths");
    }
    net::GroupActivations<T> acts = net::forward_group(sample.images, params, net_cfg);
    auto [loss, d_r] = group_loss(acts.r, sample.gt, train_cfg.reduction);
    if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss");
    }
    net::GradStore<T> grads = net::backward_group(acts, d_r, params, net_cfg);
    for (auto& [name, entry] : params.entries) {
        sgd_update(entry.value, grads.at(name), entry.velocity, train_cfg.lr,
                   train_cfg.momentum, train_cfg.weight_decay);
    }
    return loss;
}

template <typename T>
History fit(const std::vector<Sample<T>>& samples, net::ParamStore<T>& params,
            const net::NetConfig& net_cfg, const TrainConfig& train_cfg,
            std::ostream* log, const SnapshotFn<T>& snapshot) {
    train_cfg.validate();
    if (samples.empty()) throw ConfigError("fit: sample list is empty");

    History history;
    Rng order_rng(train_cfg.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size(); // forces a shuffle before the first step

    for (long iter = 1; iter <= train_cfg.max_iters; ++iter) {
        if (cursor >= order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        const Sample<T>& sample = samples[order[cursor++]];
        double loss = 0.0;
        try {
            loss = train_step(sample, params, net_cfg, train_cfg);
        } catch (const DivergenceError&) {
            throw DivergenceError("non-finite training loss at iteration " +
                                  std::to_string(iter));
        }
        history.losses.push_back(loss);
        if (log) {
            (*log) << "iter " << iter << " loss " << loss << "\n";
        }
        if (train_cfg.snapshot_every > 0 && snapshot && iter % train_cfg.snapshot_every == 0) {
            snapshot(iter, params);
            history.snapshot_iters.push_back(iter);
        }
    }
    return history;
}

#define GWCOSAL_INSTANTIATE_TRAIN(T)                                                        \
    template std::pair<double, std::vector<Tensor<T>>> group_loss(                          \
        const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, Reduction);           \
    template double train_step(const Sample<T>&, net::ParamStore<T>&, const net::NetConfig&, \
                               const TrainConfig&);                                         \
    template History fit(const std::vector<Sample<T>>&, net::ParamStore<T>&,                \
                         const net::NetConfig&, const TrainConfig&, std::ostream*,          \
                         const SnapshotFn<T>&);

GWCOSAL_INSTANTIATE_TRAIN(float)
GWCOSAL_INSTANTIATE_TRAIN(double)

#undef GWCOSAL_INSTANTIATE_TRAIN

} // namespace gwcosal::train
