#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

#include <memory>
#include <vector>

#include "psforge/core/metrics.hpp"
#include "psforge/core/types.hpp"
#include "psforge/micronet/network.hpp"
#include "psforge/obsmap/observation_map.hpp"

namespace psforge {

struct PredictConfig {
    int rotations = 1;  // K: merge predictions from K regular rotation angles

    void validate() const {
        if (rotations < 1) throw ConfigError("PredictConfig: rotations must be >= 1");
    }
};

namespace detail {

template <typename T>
Vec3 predict_pixel_impl(const PixelObservations& obs, MicroNet<T>& net,
                        const PredictConfig& cfg) {
    const int w = net.config().input_w;
    const int K = cfg.rotations;
    Batch<T> x(K, 1, w, w);
    for (int k = 0; k < K; ++k) {
        const double theta = 2.0 * kPi * double(k) / double(K);
        const ObservationMap map =
            k == 0 ? build_observation_map(obs, w) : rotated_map(obs, theta, w);
        T* dst = x.sample(k);
        for (size_t j = 0; j < map.cells.size(); ++j) dst[j] = T(map.cells[j]);
    }
    Batch<T> y = net.forward(x, RunMode::Infer);
    Vec3 mean{0, 0, 0};
    for (int k = 0; k < K; ++k) {
        const double theta = 2.0 * kPi * double(k) / double(K);
        const T* o = y.sample(k);
        mean += rotate_normal(Vec3{double(o[0]), double(o[1]), double(o[2])}, -theta);
    }
    mean = mean / double(K);
    const double n = mean.norm();
    if (n < 1e-9)
        throw NumericalError("predict_pixel: rotated predictions cancelled to a zero vector");
    return mean / n;
}

}  // namespace detail

// Eq.-9-style prediction: K rotated observation maps, network outputs
// inversely rotated, averaged and renormalized.
template <typename T>
Vec3 predict_pixel(const PixelObservations& obs, MicroNet<T>& net, const PredictConfig& cfg) {
    cfg.validate();
    return detail::predict_pixel_impl(obs, net, cfg);
}

struct PredictMapResult {
    NormalMap normals;
    size_t failed_pixels = 0;  // all-zero or degenerate pixels, left unmasked
};

// predict_pixel over every masked pixel. Threads each run a private network
// clone, so results are identical for any thread count.
template <typename T>
PredictMapResult predict_map(const ImageStack& stack, const LightSet& lights, MicroNet<T>& net,
                             const PredictConfig& cfg, const Mask& mask) {
    cfg.validate();
    stack.validate(lights);
    const int h = stack.height(), w = stack.width();
    if (mask.height() != h || mask.width() != w) throw DataError("predict_map: mask mismatch");

    PredictMapResult out;
    out.normals = NormalMap(h, w);

    std::vector<std::pair<int, int>> px;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask.at(r, c)) px.emplace_back(r, c);

    int nthreads = 1;
#ifdef _OPENMP
    nthreads = omp_get_max_threads();
#endif
    std::vector<std::unique_ptr<MicroNet<T>>> nets;
    nets.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        nets.push_back(std::make_unique<MicroNet<T>>(net.config()));
        auto& src = net.params();
        auto& dst = nets.back()->params();
        for (size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
    }

    std::vector<uint8_t> failed(px.size(), 0);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < (long long)px.size(); ++i) {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        const auto [r, c] = px[i];
        PixelObservations obs;
        obs.values.resize(lights.size());
        for (size_t j = 0; j < lights.size(); ++j) obs.values[j] = stack.images[j].at(r, c);
        obs.lights = &lights;
        try {
            out.normals.at(r, c) = detail::predict_pixel_impl(obs, *nets[tid], cfg);
            out.normals.mask.set(r, c, true);
        } catch (const Error&) {
            failed[i] = 1;
        }
    }
    for (uint8_t f : failed) out.failed_pixels += f;
    return out;
}

}  // namespace psforge
