#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/types.hpp"
#include "psforge/core/vec3.hpp"

namespace psforge {

// Fixed-shape w x w grid of normalized intensities indexed by the projected
// lighting direction. Cells never touched by an observation stay exactly 0;
// every populated cell lies in [0, 1] with the brightest observation at 1.
struct ObservationMap {
    int w = 0;
    std::vector<float> cells;    // w*w, row index from l_x, column from l_y
    std::vector<uint32_t> hits;  // observation count per cell

    ObservationMap() = default;
    explicit ObservationMap(int w_) : w(w_), cells(size_t(w_) * w_, 0.0f), hits(size_t(w_) * w_, 0) {}

    float at(int u, int v) const { return cells[size_t(u) * w + v]; }
    uint32_t hits_at(int u, int v) const { return hits[size_t(u) * w + v]; }
};

// All observations of one pixel, aligned with the light set.
struct PixelObservations {
    std::vector<double> values;  // I_j >= 0
    const LightSet* lights = nullptr;
};

// Grid cell of a front-facing unit light: u from l_x, v from l_y, each
// floor(w*(l+1)/2) clamped to [0, w-1]. The raw index w (reached only at
// l = +1) clamps to w-1 so the mapping is total.
inline std::pair<int, int> project_light(const Vec3& l, int w) {
    if (!l.finite() || std::abs(l.norm() - 1.0) > 1e-6)
        throw DataError("project_light: direction is not unit length");
    if (l.z < 0.0) throw DataError("project_light: back-facing light");
    const int u = std::clamp(int(std::floor(double(w) * (l.x + 1.0) / 2.0)), 0, w - 1);
    const int v = std::clamp(int(std::floor(double(w) * (l.y + 1.0) / 2.0)), 0, w - 1);
    return {u, v};
}

// Rotate the xy components by theta about the view axis; z is untouched.
inline Vec3 rotate_light(const Vec3& l, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * l.x - s * l.y, s * l.x + c * l.y, l.z};
}

inline Vec3 rotate_normal(const Vec3& n, double theta) { return rotate_light(n, theta); }

// Projects every observation s_j = I_j / L_j to its cell, averages
// collisions, and scales so the brightest raw observation maps to exactly 1.
//
// Colliding contributions are summed in sorted order, which makes the map
// bit-identical under any permutation of the observations.
inline ObservationMap build_observation_map(const PixelObservations& obs, int w) {
    const LightSet& lights = *obs.lights;
    if (obs.values.size() != lights.size())
        throw DataError("build_observation_map: value/light count mismatch");
    if (obs.values.empty()) throw DataError("build_observation_map: no observations");

    std::vector<std::vector<double>> bucket(size_t(w) * w);
    double s_max = 0.0;
    for (size_t j = 0; j < obs.values.size(); ++j) {
        if (obs.values[j] < 0.0) throw DataError("build_observation_map: negative value");
        const double s = obs.values[j] / lights.intensities[j];
        auto [u, v] = project_light(lights.directions[j], w);
        bucket[size_t(u) * w + v].push_back(s);
        s_max = std::max(s_max, s);
    }
    if (s_max <= 0.0)
        throw NumericalError("build_observation_map: all observations zero, unnormalizable");

    ObservationMap map(w);
    for (size_t i = 0; i < bucket.size(); ++i) {
        auto& b = bucket[i];
        if (b.empty()) continue;
        std::sort(b.begin(), b.end());
        double sum = 0.0;
        for (double s : b) sum += s;
        map.hits[i] = uint32_t(b.size());
        map.cells[i] = float(std::min(sum / double(b.size()) / s_max, 1.0));
    }
    return map;
}

// Observation map with every lighting direction rotated by theta. Values are
// untouched; only the projection targets move.
inline ObservationMap rotated_map(const PixelObservations& obs, double theta, int w) {
    LightSet rotated;
    rotated.intensities = obs.lights->intensities;
    rotated.directions.reserve(obs.lights->size());
    for (const Vec3& l : obs.lights->directions) rotated.directions.push_back(rotate_light(l, theta));
    PixelObservations turned{obs.values, &rotated};
    return build_observation_map(turned, w);
}

}  // namespace psforge
