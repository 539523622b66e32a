#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "psforge/core/metrics.hpp"
#include "psforge/micronet/adam.hpp"
#include "psforge/micronet/network.hpp"
#include "psforge/pipeline/dataset.hpp"

namespace psforge {

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mae_deg = 0.0;
};

namespace detail {

template <typename T>
Batch<T> to_batch(const std::vector<TrainSample>& set, const std::vector<uint32_t>& idx,
                  size_t lo, size_t hi, int w) {
    Batch<T> x(int(hi - lo), 1, w, w);
    for (size_t i = lo; i < hi; ++i) {
        const ObservationMap& m = set[idx[i]].obsmap;
        T* dst = x.sample(int(i - lo));
        for (size_t j = 0; j < m.cells.size(); ++j) dst[j] = T(m.cells[j]);
    }
    return x;
}

}  // namespace detail

// Mean angular error of single-map predictions over a sample set.
template <typename T>
double evaluate_samples(MicroNet<T>& net, const std::vector<TrainSample>& set, int batch_size) {
    if (set.empty()) throw DataError("evaluate_samples: empty set");
    const int w = net.config().input_w;
    std::vector<uint32_t> idx(set.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = uint32_t(i);
    double sum = 0.0;
    for (size_t lo = 0; lo < set.size(); lo += size_t(batch_size)) {
        const size_t hi = std::min(set.size(), lo + size_t(batch_size));
        Batch<T> x = detail::to_batch<T>(set, idx, lo, hi, w);
        Batch<T> y = net.forward(x, RunMode::Infer);
        for (size_t i = lo; i < hi; ++i) {
            const T* o = y.sample(int(i - lo));
            sum += angular_error(Vec3{double(o[0]), double(o[1]), double(o[2])},
                                 set[i].gt_normal);
        }
    }
    return sum / double(set.size());
}

// Shuffled mini-batch Adam/MSE training for cfg.epochs. Weights are
// initialized from cfg.seed; the returned log has one entry per epoch.
template <typename T>
std::vector<EpochLog> train(MicroNet<T>& net, const std::vector<TrainSample>& train_set,
                            const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                            bool verbose = false) {
    cfg.validate();
    if (train_set.empty()) throw DataError("train: empty training set");
    if (val_set.empty()) throw DataError("train: empty validation set");

    const int w = cfg.net.input_w;
    net.init_weights(hash_combine(cfg.seed, 0x494e4954ULL));
    AdamState<T> adam(net.params());

    std::vector<uint32_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = uint32_t(i);

    std::vector<EpochLog> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(hash_combine(cfg.seed, 0x53485546ULL, uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t lo = 0; lo < order.size(); lo += size_t(cfg.batch_size)) {
            const size_t hi = std::min(order.size(), lo + size_t(cfg.batch_size));
            const int B = int(hi - lo);
            Batch<T> x = detail::to_batch<T>(train_set, order, lo, hi, w);
            const uint64_t drop_seed = hash_combine(cfg.seed, uint64_t(epoch), lo);
            Batch<T> y = net.forward(x, RunMode::Train, drop_seed);

            Batch<T> dy(B, 3, 1, 1);
            double batch_loss = 0.0;
            for (int i = 0; i < B; ++i) {
                const Vec3& gt = train_set[order[lo + i]].gt_normal;
                const T gtv[3] = {T(gt.x), T(gt.y), T(gt.z)};
                T g[3];
                batch_loss += double(mse_loss<T>({y.sample(i), 3}, {gtv, 3}, {g, 3}));
                for (int k = 0; k < 3; ++k) dy.sample(i)[k] = g[k] / T(B);
            }
            batch_loss /= double(B);
            if (!std::isfinite(batch_loss))
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += batch_loss * double(B);
            seen += size_t(B);

            net.zero_grad();
            net.backward(dy);
            adam_step(net.params(), adam);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / double(seen);
        entry.val_mae_deg = evaluate_samples(net, val_set, cfg.batch_size);
        log.push_back(entry);
        if (verbose)
            std::fprintf(stderr, "epoch %d  loss %.6f  val MAE %.3f deg\n", epoch,
                         entry.train_loss, entry.val_mae_deg);
    }
    return log;
}

}  // namespace psforge
