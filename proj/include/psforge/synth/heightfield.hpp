#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/core/types.hpp"

namespace psforge {

// Single-valued elevation over an image grid, viewed by an orthographic
// camera looking down -z. World x runs along columns, y along rows, with the
// origin at the grid center.
struct HeightfieldScene {
    int height = 0;
    int width = 0;
    std::vector<double> heights;  // row-major, world z per pixel
    double spacing = 1.0;         // world units per pixel
    Mask mask;
    std::string name;

    double h(int r, int c) const { return heights[size_t(r) * width + c]; }
    double& h(int r, int c) { return heights[size_t(r) * width + c]; }

    double world_x(int c) const { return (double(c) - 0.5 * (width - 1)) * spacing; }
    double world_y(int r) const { return (double(r) - 0.5 * (height - 1)) * spacing; }
    Vec3 world_point(int r, int c) const { return {world_x(c), world_y(r), h(r, c)}; }

    void validate() const {
        if (!(spacing > 0.0)) throw DataError("HeightfieldScene: spacing must be positive");
        for (double v : heights)
            if (!std::isfinite(v)) throw DataError("HeightfieldScene: non-finite height");
    }
};

// Per-pixel normals from height gradients: n ~ (-dh/dx, -dh/dy, 1),
// normalized. Central differences where both neighbors are masked, one-sided
// at mask borders.
inline NormalMap heightfield_normals(const HeightfieldScene& scene) {
    if (scene.mask.count() == 0) throw DataError("heightfield_normals: empty mask");
    NormalMap nm(scene.height, scene.width);
    for (int r = 0; r < scene.height; ++r) {
        for (int c = 0; c < scene.width; ++c) {
            if (!scene.mask.at(r, c)) continue;
            const bool left = c > 0 && scene.mask.at(r, c - 1);
            const bool right = c < scene.width - 1 && scene.mask.at(r, c + 1);
            const bool up = r > 0 && scene.mask.at(r - 1, c);
            const bool down = r < scene.height - 1 && scene.mask.at(r + 1, c);
            if (!left && !right && !up && !down)
                throw DataError("heightfield_normals: single-pixel mask region at (" +
                                std::to_string(r) + "," + std::to_string(c) + ")");
            double gx = 0.0, gy = 0.0;
            if (left && right)
                gx = (scene.h(r, c + 1) - scene.h(r, c - 1)) / (2.0 * scene.spacing);
            else if (right)
                gx = (scene.h(r, c + 1) - scene.h(r, c)) / scene.spacing;
            else if (left)
                gx = (scene.h(r, c) - scene.h(r, c - 1)) / scene.spacing;
            if (up && down)
                gy = (scene.h(r + 1, c) - scene.h(r - 1, c)) / (2.0 * scene.spacing);
            else if (down)
                gy = (scene.h(r + 1, c) - scene.h(r, c)) / scene.spacing;
            else if (up)
                gy = (scene.h(r, c) - scene.h(r - 1, c)) / scene.spacing;
            nm.at(r, c) = Vec3{-gx, -gy, 1.0}.normalized();
            nm.mask.set(r, c, true);
        }
    }
    return nm;
}

// Bilinear height lookup at world coordinates. Outside the grid returns the
// clamped border value.
inline double bilinear_height(const HeightfieldScene& s, double wx, double wy) {
    const double fc = wx / s.spacing + 0.5 * (s.width - 1);
    const double fr = wy / s.spacing + 0.5 * (s.height - 1);
    const double cc = std::clamp(fc, 0.0, double(s.width - 1));
    const double cr = std::clamp(fr, 0.0, double(s.height - 1));
    const int c0 = std::min(int(cc), s.width - 2);
    const int r0 = std::min(int(cr), s.height - 2);
    const double tx = cc - c0, ty = cr - r0;
    return s.h(r0, c0) * (1 - tx) * (1 - ty) + s.h(r0, c0 + 1) * tx * (1 - ty) +
           s.h(r0 + 1, c0) * (1 - tx) * ty + s.h(r0 + 1, c0 + 1) * tx * ty;
}

// --- scene generators ------------------------------------------------------

// Convex sphere cap; no cast shadows by construction.
inline HeightfieldScene make_sphere_scene(int size, double radius_frac = 0.9,
                                          double mask_frac = 0.95,
                                          const std::string& name = "sphere") {
    HeightfieldScene s;
    s.height = s.width = size;
    s.spacing = 1.0;
    s.heights.assign(size_t(size) * size, 0.0);
    s.mask = Mask(size, size);
    s.name = name;
    const double radius = radius_frac * 0.5 * (size - 1);
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double x = s.world_x(c), y = s.world_y(r);
            const double rho2 = x * x + y * y;
            if (rho2 < radius * radius) s.h(r, c) = std::sqrt(radius * radius - rho2);
            if (rho2 <= (mask_frac * radius) * (mask_frac * radius)) s.mask.set(r, c, true);
        }
    }
    return s;
}

// Parabolic bowl sunk into a flat ledge; the rim occludes grazing lights, so
// interior pixels receive cast shadows.
inline HeightfieldScene make_bowl_scene(int size, double radius_frac = 0.85,
                                        double depth_frac = 0.6,
                                        const std::string& name = "bowl") {
    HeightfieldScene s;
    s.height = s.width = size;
    s.spacing = 1.0;
    s.heights.assign(size_t(size) * size, 0.0);
    s.mask = Mask(size, size);
    s.name = name;
    const double radius = radius_frac * 0.5 * (size - 1);
    const double depth = depth_frac * radius;
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double x = s.world_x(c), y = s.world_y(r);
            const double rho = std::sqrt(x * x + y * y);
            if (rho < radius) s.h(r, c) = depth * ((rho / radius) * (rho / radius) - 1.0);
            if (rho <= 0.98 * radius) s.mask.set(r, c, true);
        }
    }
    return s;
}

// Random smooth bump field: a seeded sum of Gaussian bumps and dents over
// the full frame. Used for training variety.
inline HeightfieldScene make_bumps_scene(int size, uint64_t seed, int bump_count = 12,
                                         const std::string& name = "bumps") {
    HeightfieldScene s;
    s.height = s.width = size;
    s.spacing = 1.0;
    s.heights.assign(size_t(size) * size, 0.0);
    s.mask = Mask(size, size, true);
    s.name = name;
    Rng rng(hash_combine(seed, 0x42554dULL));
    const double extent = 0.5 * (size - 1);
    struct Bump {
        double cx, cy, amp, sigma;
    };
    std::vector<Bump> bumps(bump_count);
    for (Bump& b : bumps) {
        b.cx = rng.uniform(-0.8, 0.8) * extent;
        b.cy = rng.uniform(-0.8, 0.8) * extent;
        b.amp = rng.uniform(0.15, 0.5) * extent * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        b.sigma = rng.uniform(0.15, 0.35) * extent;
    }
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double x = s.world_x(c), y = s.world_y(r);
            double h = 0.0;
            for (const Bump& b : bumps) {
                const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
                h += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
            }
            s.h(r, c) = h;
        }
    }
    return s;
}

}  // namespace psforge
