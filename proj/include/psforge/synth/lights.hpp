#pragma once

#include <cmath>
#include <cstdint>

#include "psforge/core/error.hpp"
#include "psforge/core/metrics.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/core/types.hpp"

namespace psforge {

// Quasi-uniform directional light rig: a Fibonacci spiral over the spherical
// cap above the elevation floor, each direction perturbed by a small seeded
// angular jitter. Intensities are all 1.
inline LightSet sample_lights(int count, double elevation_min_deg, double jitter_deg,
                              uint64_t seed) {
    if (count < 1) throw ConfigError("sample_lights: count must be >= 1");
    if (elevation_min_deg < 0.0 || elevation_min_deg >= 90.0)
        throw ConfigError("sample_lights: elevation floor must be in [0, 90)");

    const double z_min = std::sin(elevation_min_deg * kDegToRad);
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    const double jitter_rad = jitter_deg * kDegToRad;

    LightSet ls;
    ls.directions.reserve(count);
    ls.intensities.assign(count, 1.0);
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (1.0 - z_min) * (double(i) + 0.5) / double(count);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * double(i);
        Vec3 l{rho * std::cos(phi), rho * std::sin(phi), z};

        if (jitter_rad > 0.0) {
            Rng rng(hash_combine(seed, 0x4c49ULL, uint64_t(i)));
            // random tangent displacement of angle <= jitter_rad
            Vec3 up = std::abs(l.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
            Vec3 t1 = cross(up, l).normalized();
            Vec3 t2 = cross(l, t1);
            const double ang = jitter_rad * rng.uniform();
            const double dir = 2.0 * kPi * rng.uniform();
            l = (l * std::cos(ang) + (t1 * std::cos(dir) + t2 * std::sin(dir)) * std::sin(ang))
                    .normalized();
        }
        if (l.z <= 0.0) l.z = 1e-9;  // jitter cannot push a light below the horizon
        ls.directions.push_back(l.normalized());
    }
    return ls;
}

inline double elevation_deg(const Vec3& l) { return std::asin(std::clamp(l.z, -1.0, 1.0)) * kRadToDeg; }

}  // namespace psforge
