#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "psforge/core/rng.hpp"
#include "psforge/micronet/network.hpp"

namespace psforge {

// Central-difference check of an analytic gradient for a scalar field phi.
// phi() must re-evaluate the scalar from the current contents of `values`;
// entries listed in `indices` are perturbed in place, one at a time.
template <typename Phi>
double fd_max_rel_error(std::span<double> values, std::span<const double> grad,
                        std::span<const size_t> indices, double h_rel, Phi&& phi) {
    double worst = 0.0;
    for (size_t idx : indices) {
        const double saved = values[idx];
        const double h = h_rel * std::max(std::abs(saved), 1.0);
        values[idx] = saved + h;
        const double up = phi();
        values[idx] = saved - h;
        const double down = phi();
        values[idx] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = grad[idx];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

struct FdOptions {
    double h_rel = 1e-5;
    int samples_per_tensor = 24;  // random entries checked per tensor
    int corrupt_tensor = -1;      // fault injection: negate this tensor's analytic gradient
    uint64_t seed = 7;
};

struct FdReport {
    struct Row {
        std::string tensor;
        double max_rel_err;
    };
    std::vector<Row> rows;
    double max_rel_err = 0.0;
};

// Finite-difference oracle over the whole network: compares the analytic
// parameter gradients of the batch MSE loss against central differences of
// forward passes only. Runs in inference mode, so dropout is frozen out.
inline FdReport finite_diff_check(MicroNet<double>& net, const Batch<double>& x,
                                  const std::vector<double>& gt, const FdOptions& opt = {}) {
    const int B = x.n;
    auto loss_of = [&]() {
        MicroNet<double>& n = net;  // forward mutates caches only
        Batch<double> y = n.forward(x, RunMode::Infer);
        double total = 0.0;
        for (int i = 0; i < B; ++i)
            total += mse_loss<double>({y.sample(i), 3}, {&gt[size_t(i) * 3], 3});
        return total / double(B);
    };

    net.zero_grad();
    Batch<double> y = net.forward(x, RunMode::Infer);
    Batch<double> dy(B, 3, 1, 1);
    for (int i = 0; i < B; ++i) {
        std::vector<double> g(3);
        mse_loss<double>({y.sample(i), 3}, {&gt[size_t(i) * 3], 3}, g);
        for (int k = 0; k < 3; ++k) dy.sample(i)[k] = g[k] / double(B);
    }
    net.backward(dy);

    FdReport report;
    auto& params = net.params();
    for (size_t t = 0; t < params.size(); ++t) {
        std::vector<double> grad = *params[t].grad;
        if (int(t) == opt.corrupt_tensor)
            for (double& g : grad) g = -g;

        // check the strongest-gradient entry plus a seeded random subset
        const size_t n = grad.size();
        std::vector<size_t> indices;
        size_t argmax = 0;
        for (size_t i = 0; i < n; ++i)
            if (std::abs(grad[i]) > std::abs(grad[argmax])) argmax = i;
        indices.push_back(argmax);
        Rng rng(hash_combine(opt.seed, t));
        for (int k = 1; k < opt.samples_per_tensor && size_t(k) < n; ++k)
            indices.push_back(size_t(rng.index(n)));

        const double err = fd_max_rel_error({params[t].value->data(), n}, grad, indices,
                                            opt.h_rel, loss_of);
        report.rows.push_back({params[t].name, err});
        report.max_rel_err = std::max(report.max_rel_err, err);
    }
    return report;
}

}  // namespace psforge
