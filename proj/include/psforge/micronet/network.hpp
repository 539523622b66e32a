#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/micronet/layers.hpp"
#include "psforge/micronet/tensor.hpp"
#include "psforge/obsmap/observation_map.hpp"

namespace psforge {

// Architecture knobs. The defaults are the reference configuration; smaller
// variants keep the same topology.
struct NetConfig {
    int input_w = 32;
    int init_filters = 16;       // initial 3x3 convolution
    int growth = 16;             // filters added by each dense-block layer
    int transition_channels = 32;
    int hidden_units = 128;
    double dropout_p = 0.2;
};

inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

// relu -> conv3x3 (same) -> dropout, concatenated onto its input.
template <typename T>
struct DenseBlockLayer {
    DenseBlockLayer() = default;
    DenseBlockLayer(const std::string& name, int in_c, int growth, double drop_p)
        : in_c_(in_c), relu(), conv(name + ".conv", in_c, growth, 3, true), drop(drop_p) {}

    Batch<T> forward(const Batch<T>& x, RunMode mode, uint64_t seed) {
        Batch<T> f = drop.forward(conv.forward(relu.forward(x)), mode, seed);
        return concat_channels(x, f);
    }

    Batch<T> backward(const Batch<T>& dy) {
        auto [dx_direct, df] = split_channels(dy, in_c_);
        Batch<T> dr = relu.backward(conv.backward(drop.backward(std::move(df))));
        for (size_t i = 0; i < dx_direct.data.size(); ++i) dx_direct.data[i] += dr.data[i];
        return dx_direct;
    }

    int in_c_ = 0;
    ReLU<T> relu;
    Conv2D<T> conv;
    Dropout<T> drop;
};

// The observation-map regressor: initial conv, two 2-layer dense blocks
// around one transition (1x1 conv + 2x2 average pool), two dense layers and
// a unit-normalization head. No batch normalization anywhere.
template <typename T>
class MicroNet {
public:
    explicit MicroNet(const NetConfig& cfg = {}) : cfg_(cfg) {
        const int w = cfg.input_w;
        int c = cfg.init_filters;
        conv0_ = Conv2D<T>("conv0", 1, c, 3, true);
        db1a_ = DenseBlockLayer<T>("db1a", c, cfg.growth, cfg.dropout_p);
        c += cfg.growth;
        db1b_ = DenseBlockLayer<T>("db1b", c, cfg.growth, cfg.dropout_p);
        c += cfg.growth;
        transition_ = Conv2D<T>("transition", c, cfg.transition_channels, 1, true);
        c = cfg.transition_channels;
        db2a_ = DenseBlockLayer<T>("db2a", c, cfg.growth, cfg.dropout_p);
        c += cfg.growth;
        db2b_ = DenseBlockLayer<T>("db2b", c, cfg.growth, cfg.dropout_p);
        c += cfg.growth;
        flat_dim_ = c * (w / 2) * (w / 2);
        dense1_ = Dense<T>("dense1", flat_dim_, cfg.hidden_units);
        dense2_ = Dense<T>("dense2", cfg.hidden_units, 3);

        params_.clear();
        conv0_.collect_params(params_);
        db1a_.conv.collect_params(params_);
        db1b_.conv.collect_params(params_);
        transition_.collect_params(params_);
        db2a_.conv.collect_params(params_);
        db2b_.conv.collect_params(params_);
        dense1_.collect_params(params_);
        dense2_.collect_params(params_);
    }

    // params_ holds pointers into the layer members
    MicroNet(const MicroNet&) = delete;
    MicroNet& operator=(const MicroNet&) = delete;

    const NetConfig& config() const { return cfg_; }
    std::vector<ParamRef<T>>& params() { return params_; }

    // Layer chain as data; hashed into the architecture fingerprint.
    std::vector<std::string> layer_specs() const {
        const int w = cfg_.input_w;
        const int f0 = cfg_.init_filters, g = cfg_.growth, tc = cfg_.transition_channels;
        std::vector<std::string> out;
        auto block = [&](int in, int sz) {
            return "relu|conv3x3:" + std::to_string(in) + "->" + std::to_string(g) + "@" +
                   std::to_string(sz) + "|dropout:" + std::to_string(cfg_.dropout_p) + "|concat";
        };
        out.push_back("conv3x3:1->" + std::to_string(f0) + "@" + std::to_string(w));
        out.push_back(block(f0, w));
        out.push_back(block(f0 + g, w));
        out.push_back("transition:conv1x1:" + std::to_string(f0 + 2 * g) + "->" +
                      std::to_string(tc) + "|avgpool2");
        out.push_back(block(tc, w / 2));
        out.push_back(block(tc + g, w / 2));
        out.push_back("dense:" + std::to_string(flat_dim_) + "->" +
                      std::to_string(cfg_.hidden_units));
        out.push_back("relu");
        out.push_back("dense:" + std::to_string(cfg_.hidden_units) + "->3");
        out.push_back("l2norm");
        return out;
    }

    uint64_t fingerprint() const {
        std::string s = "micronet-v1";
        for (const std::string& l : layer_specs()) s += ";" + l;
        return fnv1a64(s);
    }

    // Seeded He-style fan-in uniform initialization; biases start at zero.
    void init_weights(uint64_t seed) {
        for (size_t t = 0; t < params_.size(); ++t) {
            ParamRef<T>& p = params_[t];
            const bool is_bias = p.dims.size() == 1;
            if (is_bias) {
                std::fill(p.value->begin(), p.value->end(), T(0));
                continue;
            }
            size_t fan_in = 1;
            for (size_t d = 1; d < p.dims.size(); ++d) fan_in *= p.dims[d];
            const double limit = std::sqrt(6.0 / double(fan_in));
            for (size_t i = 0; i < p.value->size(); ++i) {
                const double u = double(mix64(hash_combine(seed, t, i)) >> 11) * 0x1.0p-53;
                (*p.value)[i] = T((2.0 * u - 1.0) * limit);
            }
        }
    }

    void zero_grad() {
        for (ParamRef<T>& p : params_) std::fill(p.grad->begin(), p.grad->end(), T(0));
    }

    // Runs the chain on a batch of observation maps; every output row is a
    // unit vector. A feature that collapses below the l2norm guard maps to
    // the fixed fallback (0,0,1) with zero gradient.
    Batch<T> forward(const Batch<T>& x, RunMode mode, uint64_t dropout_seed = 0) {
        if (x.c != 1 || x.h != cfg_.input_w || x.w != cfg_.input_w)
            throw DataError("network_forward: input must be 1x" + std::to_string(cfg_.input_w) +
                            "x" + std::to_string(cfg_.input_w));
        Batch<T> t = conv0_.forward(x);
        t = db1a_.forward(t, mode, hash_combine(dropout_seed, 1));
        t = db1b_.forward(t, mode, hash_combine(dropout_seed, 2));
        t = transition_.forward(std::move(t));
        t = pool_.forward(t);
        t = db2a_.forward(t, mode, hash_combine(dropout_seed, 3));
        t = db2b_.forward(t, mode, hash_combine(dropout_seed, 4));
        t = dense1_.forward(std::move(t));
        t = relu_head_.forward(std::move(t));
        feature_ = dense2_.forward(std::move(t));

        Batch<T> y(feature_.n, 3, 1, 1);
        norms_.assign(feature_.n, T(0));
        fallback_.assign(feature_.n, 0);
        for (int i = 0; i < feature_.n; ++i) {
            const T* f = feature_.sample(i);
            const T nrm = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
            norms_[i] = nrm;
            T* o = y.sample(i);
            if (nrm < T(1e-12)) {
                fallback_[i] = 1;
                o[0] = T(0);
                o[1] = T(0);
                o[2] = T(1);
            } else {
                o[0] = f[0] / nrm;
                o[1] = f[1] / nrm;
                o[2] = f[2] / nrm;
            }
        }
        out_cache_ = y;
        return y;
    }

    // d_units is the gradient w.r.t. the normalized outputs.
    void backward(const Batch<T>& d_units) {
        Batch<T> df(feature_.n, 3, 1, 1);
        for (int i = 0; i < feature_.n; ++i) {
            if (fallback_[i]) continue;  // flat fallback region
            l2_normalize_backward(out_cache_.sample(i), norms_[i], d_units.sample(i),
                                  df.sample(i), 3);
        }
        Batch<T> t = dense2_.backward(df);
        t = relu_head_.backward(t);
        t = dense1_.backward(t);
        t = db2b_.backward(t);
        t = db2a_.backward(t);
        t = pool_.backward(t);
        t = transition_.backward(t);
        t = db1b_.backward(t);
        t = db1a_.backward(t);
        conv0_.backward(t);
    }

    // Single observation map to a unit normal.
    Vec3 predict(const ObservationMap& map, uint64_t = 0) {
        Batch<T> x(1, 1, cfg_.input_w, cfg_.input_w);
        for (size_t i = 0; i < map.cells.size(); ++i) x.data[i] = T(map.cells[i]);
        Batch<T> y = forward(x, RunMode::Infer);
        return {double(y.data[0]), double(y.data[1]), double(y.data[2])};
    }

private:
    NetConfig cfg_;
    int flat_dim_ = 0;
    Conv2D<T> conv0_;
    DenseBlockLayer<T> db1a_, db1b_;
    Conv2D<T> transition_;
    AvgPool2<T> pool_;
    DenseBlockLayer<T> db2a_, db2b_;
    Dense<T> dense1_, dense2_;
    ReLU<T> relu_head_;

    std::vector<ParamRef<T>> params_;
    Batch<T> feature_, out_cache_;
    std::vector<T> norms_;
    std::vector<uint8_t> fallback_;
};

// Mean over the 3 components of the squared difference, applied to the
// normalized output. Returns the loss; optionally writes d(loss)/d(pred).
template <typename T>
T mse_loss(std::span<const T> pred, std::span<const T> gt, std::span<T> grad = {}) {
    T s = 0;
    for (int i = 0; i < 3; ++i) {
        const T d = pred[i] - gt[i];
        s += d * d;
        if (!grad.empty()) grad[i] = T(2.0 / 3.0) * d;
    }
    return s / T(3);
}

}  // namespace psforge
