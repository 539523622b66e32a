#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/types.hpp"

namespace psforge {

// 16-bit RGB encoding of a normal map: channel = round((n*0.5 + 0.5)*65535).
// Unmasked pixels are written as zero on all three channels.
inline std::vector<uint16_t> encode_normal_image(const NormalMap& nm) {
    std::vector<uint16_t> out(size_t(nm.height) * nm.width * 3, 0);
    for (int r = 0; r < nm.height; ++r) {
        for (int c = 0; c < nm.width; ++c) {
            if (!nm.mask.at(r, c)) continue;
            const Vec3& n = nm.at(r, c);
            const double comp[3] = {n.x, n.y, n.z};
            for (int k = 0; k < 3; ++k) {
                double v = (comp[k] * 0.5 + 0.5) * 65535.0;
                v = std::clamp(v, 0.0, 65535.0);
                out[(size_t(r) * nm.width + c) * 3 + k] = uint16_t(std::lround(v));
            }
        }
    }
    return out;
}

// Inverse of encode_normal_image; decoded vectors are renormalized. Pixels
// decoding to a near-zero vector are left unmasked.
inline NormalMap decode_normal_image(int height, int width, const std::vector<uint16_t>& samples,
                                     int channels = 3) {
    if (channels != 3) throw DataError("decode_normal_image: image is not 3-channel");
    if (samples.size() != size_t(height) * width * 3)
        throw DataError("decode_normal_image: sample count mismatch");
    NormalMap nm(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const size_t base = (size_t(r) * width + c) * 3;
            // The all-zero triple marks unmasked pixels. No unit vector can
            // encode to it: that would require n = (-1,-1,-1), norm sqrt(3).
            if (samples[base] == 0 && samples[base + 1] == 0 && samples[base + 2] == 0) continue;
            Vec3 v{double(samples[base + 0]) / 65535.0 * 2.0 - 1.0,
                   double(samples[base + 1]) / 65535.0 * 2.0 - 1.0,
                   double(samples[base + 2]) / 65535.0 * 2.0 - 1.0};
            const double n = v.norm();
            if (n < 1e-6) continue;
            nm.at(r, c) = v / n;
            nm.mask.set(r, c, true);
        }
    }
    return nm;
}

}  // namespace psforge
