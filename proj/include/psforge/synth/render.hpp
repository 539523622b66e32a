#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/core/types.hpp"
#include "psforge/synth/brdf.hpp"
#include "psforge/synth/heightfield.hpp"
#include "psforge/synth/material.hpp"

namespace psforge {

// Images of one scene under one light rig, with the ground truth the images
// were shaded from.
struct RenderedSample {
    HeightfieldScene scene;
    LightSet lights;
    ImageStack stack;
    NormalMap gt_normals;
    std::vector<Mask> shadow_masks;  // cast shadows, one per light
};

struct RenderOptions {
    bool interreflection = false;
    int interreflection_samples = 64;
    uint64_t seed = 0;
};

// Marches x(t) = surface_point + t*l in fixed steps of half a pixel spacing
// until the ray leaves the height-field bounding box; occluded iff the ray
// dips below the bilinear surface at some t past a small offset.
inline bool cast_shadow(const HeightfieldScene& s, int r, int c, const Vec3& l) {
    if (!s.mask.at(r, c)) throw DataError("cast_shadow: pixel outside mask");
    if (!(l.z > 0.0) || std::abs(l.norm() - 1.0) > 1e-6)
        throw DataError("cast_shadow: light must be unit with positive z");

    double h_min = s.heights[0], h_max = s.heights[0];
    for (double h : s.heights) {
        h_min = std::min(h_min, h);
        h_max = std::max(h_max, h);
    }
    const double eps_offset = 1e-4 * std::max(h_max - h_min, 1e-12);
    const double step = 0.5 * s.spacing;
    const double x_lim = 0.5 * (s.width - 1) * s.spacing;
    const double y_lim = 0.5 * (s.height - 1) * s.spacing;

    const Vec3 p0 = s.world_point(r, c);
    for (double t = eps_offset + step;; t += step) {
        const Vec3 p = p0 + t * l;
        if (p.z > h_max) return false;
        if (std::abs(p.x) > x_lim || std::abs(p.y) > y_lim) return false;
        if (p.z < bilinear_height(s, p.x, p.y)) return true;
    }
}

// Direct shading of one point: L * rho * max(n.l, 0), with the attached
// shadow handled here so the BRDF only sees front-facing geometry.
inline double shade_point(const PrincipledParams& p, const Vec3& n, const Vec3& l, const Vec3& v,
                          double light_intensity) {
    const double ndl = n.dot(l);
    if (ndl <= 0.0) return 0.0;
    return light_intensity * eval_brdf(p, n, l, v) * ndl;
}

// Renders one image per light. Per pixel: zero under a cast shadow,
// otherwise the point-wise BRDF term; optionally adds a one-bounce gather
// over a fixed seeded surfel set as an interreflection approximation.
inline RenderedSample render(const HeightfieldScene& scene, const MaterialMap& materials,
                             const LightSet& lights, const RenderOptions& opt = {}) {
    scene.validate();
    lights.validate();
    if (materials.height != scene.height || materials.width != scene.width)
        throw DataError("render: material map does not match scene dimensions");

    RenderedSample out;
    out.scene = scene;
    out.lights = lights;
    out.gt_normals = heightfield_normals(scene);
    out.stack.mask = scene.mask;
    const int m = int(lights.size());
    out.stack.images.assign(m, Image(scene.height, scene.width, 0.0f));
    out.shadow_masks.assign(m, Mask(scene.height, scene.width));
    const Vec3 view{0.0, 0.0, 1.0};

    std::vector<std::pair<int, int>> px;
    for (int r = 0; r < scene.height; ++r)
        for (int c = 0; c < scene.width; ++c)
            if (scene.mask.at(r, c)) px.emplace_back(r, c);

    for (int j = 0; j < m; ++j) {
        const Vec3 l = lights.directions[j];
        const double L = lights.intensities[j];
        Image& img = out.stack.images[j];
        Mask& shadow = out.shadow_masks[j];
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)px.size(); ++i) {
            const auto [r, c] = px[i];
            const Vec3& n = out.gt_normals.at(r, c);
            if (n.dot(l) <= 0.0) continue;  // attached shadow
            if (cast_shadow(scene, r, c, l)) {
                shadow.set(r, c, true);
                continue;
            }
            img.at(r, c) = float(shade_point(materials.at(r, c), n, l, view, L));
        }
    }

    if (opt.interreflection) {
        // Stratified surfel set: one seeded pick per contiguous stratum of
        // the masked pixel list.
        const int S = std::min<int>(opt.interreflection_samples, int(px.size()));
        std::vector<int> surfel(S);
        for (int k = 0; k < S; ++k) {
            const size_t lo = px.size() * size_t(k) / S;
            const size_t hi = px.size() * size_t(k + 1) / S;
            Rng rng(hash_combine(opt.seed, 0x535246ULL, uint64_t(k)));
            surfel[k] = int(lo + rng.index(uint64_t(hi - lo)));
        }
        const double dA = scene.spacing * scene.spacing * double(px.size()) / double(S);

        for (int j = 0; j < m; ++j) {
            Image& img = out.stack.images[j];
            // direct radiosity of each surfel, captured before any gather
            std::vector<double> b(S);
            std::vector<Vec3> q_pos(S), q_n(S);
            for (int k = 0; k < S; ++k) {
                const auto [qr, qc] = px[surfel[k]];
                b[k] = img.at(qr, qc);
                q_pos[k] = scene.world_point(qr, qc);
                q_n[k] = out.gt_normals.at(qr, qc);
            }
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < (long long)px.size(); ++i) {
                const auto [r, c] = px[i];
                const Vec3 p = scene.world_point(r, c);
                const Vec3& n = out.gt_normals.at(r, c);
                const PrincipledParams& mat = materials.at(r, c);
                const double albedo = (1.0 - mat.metallic) * mat.base_color;
                if (albedo <= 0.0) continue;
                double gather = 0.0;
                for (int k = 0; k < S; ++k) {
                    if (b[k] <= 0.0) continue;
                    const Vec3 d = q_pos[k] - p;
                    const double r2 = d.dot(d);
                    if (r2 < 4.0 * scene.spacing * scene.spacing) continue;
                    const double inv_r = 1.0 / std::sqrt(r2);
                    const double cos_p = n.dot(d) * inv_r;
                    const double cos_q = -(q_n[k].dot(d)) * inv_r;
                    if (cos_p <= 0.0 || cos_q <= 0.0) continue;
                    gather += b[k] * cos_p * cos_q / (kPi * r2) * dA;
                }
                img.at(r, c) += float(albedo / kPi * gather);
            }
        }
    }
    return out;
}

}  // namespace psforge
