#pragma once

#include <cmath>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/micronet/layers.hpp"

namespace psforge {

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment accumulators, one pair per parameter tensor.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    long t = 0;
    AdamConfig cfg;

    explicit AdamState(const std::vector<ParamRef<T>>& params, const AdamConfig& c = {}) : cfg(c) {
        for (const ParamRef<T>& p : params) {
            m.emplace_back(p.value->size(), T(0));
            v.emplace_back(p.value->size(), T(0));
        }
    }
};

// Standard bias-corrected Adam update over all parameter tensors.
template <typename T>
void adam_step(std::vector<ParamRef<T>>& params, AdamState<T>& state) {
    if (params.size() != state.m.size()) throw DataError("adam_step: state/parameter mismatch");
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, double(state.t));
    const double corr2 = 1.0 - std::pow(b2, double(state.t));
    for (size_t ti = 0; ti < params.size(); ++ti) {
        std::vector<T>& w = *params[ti].value;
        const std::vector<T>& g = *params[ti].grad;
        std::vector<T>& m = state.m[ti];
        std::vector<T>& v = state.v[ti];
        for (size_t i = 0; i < w.size(); ++i) {
            const double gi = double(g[i]);
            if (!std::isfinite(gi))
                throw NumericalError("adam_step: non-finite gradient in " + params[ti].name);
            m[i] = T(b1 * double(m[i]) + (1.0 - b1) * gi);
            v[i] = T(b2 * double(v[i]) + (1.0 - b2) * gi * gi);
            const double m_hat = double(m[i]) / corr1;
            const double v_hat = double(v[i]) / corr2;
            w[i] = T(double(w[i]) - state.cfg.alpha * m_hat / (std::sqrt(v_hat) + state.cfg.eps));
        }
    }
}

}  // namespace psforge
