#pragma once

#include <algorithm>
#include <cmath>

#include "psforge/core/error.hpp"
#include "psforge/core/types.hpp"
#include "psforge/core/vec3.hpp"

namespace psforge {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kRadToDeg = 180.0 / kPi;
inline constexpr double kDegToRad = kPi / 180.0;

// Angle between two unit vectors in degrees, in [0, 180]. The dot product is
// clamped so values epsilon past +-1 do not produce NaN.
inline double angular_error(const Vec3& a, const Vec3& b) {
    if (!a.finite() || !b.finite()) throw DataError("angular_error: non-finite input");
    // identical vectors are exactly 0 degrees apart; acos(a.a) would report
    // ~1e-6 degrees whenever the self-dot rounds one ulp under 1
    if (a.x == b.x && a.y == b.y && a.z == b.z) return 0.0;
    const double d = std::clamp(a.dot(b), -1.0, 1.0);
    return std::acos(d) * kRadToDeg;
}

// Arithmetic mean of per-pixel angular error over the intersection of the
// two masks.
inline double mean_angular_error(const NormalMap& est, const NormalMap& gt) {
    if (est.height != gt.height || est.width != gt.width)
        throw DataError("mean_angular_error: dimension mismatch");
    double sum = 0.0;
    size_t n = 0;
    for (int r = 0; r < est.height; ++r) {
        for (int c = 0; c < est.width; ++c) {
            if (!est.mask.at(r, c) || !gt.mask.at(r, c)) continue;
            sum += angular_error(est.at(r, c), gt.at(r, c));
            ++n;
        }
    }
    if (n == 0) throw DataError("mean_angular_error: empty mask intersection");
    return sum / double(n);
}

}  // namespace psforge
