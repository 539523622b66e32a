#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/synth/heightfield.hpp"

namespace psforge {

// Grayscale subset of the principled BSDF parameters. Subsurface,
// anisotropy, tint and clearcoat terms are out of scope.
struct PrincipledParams {
    double base_color = 0.5;
    double metallic = 0.0;
    double specular = 0.5;
    double roughness = 0.5;
    double sheen = 0.0;
};

enum class MaterialCategory { Diffuse, Specular, Metallic };

inline const char* to_string(MaterialCategory c) {
    switch (c) {
        case MaterialCategory::Diffuse: return "diffuse";
        case MaterialCategory::Specular: return "specular";
        case MaterialCategory::Metallic: return "metallic";
    }
    return "?";
}

inline MaterialCategory material_category_from_string(const std::string& s) {
    if (s == "diffuse") return MaterialCategory::Diffuse;
    if (s == "specular") return MaterialCategory::Specular;
    if (s == "metallic") return MaterialCategory::Metallic;
    throw ConfigError("unknown material category: " + s);
}

// One random parameter tuple from the category's ranges. The ranges keep the
// unrealistic corners (half-metal, rough mirror metal) out of the data.
inline PrincipledParams sample_params(MaterialCategory cat, Rng& rng) {
    PrincipledParams p;
    switch (cat) {
        case MaterialCategory::Diffuse:
            p.metallic = 0.0;
            p.specular = rng.uniform(0.0, 0.1);
            p.roughness = rng.uniform(0.3, 1.0);
            p.sheen = rng.uniform(0.0, 0.5);
            p.base_color = rng.uniform(0.1, 1.0);
            break;
        case MaterialCategory::Specular:
            p.metallic = 0.0;
            p.specular = rng.uniform(0.3, 1.0);
            p.roughness = rng.uniform(0.05, 0.5);
            p.sheen = 0.0;
            p.base_color = rng.uniform(0.1, 1.0);
            break;
        case MaterialCategory::Metallic:
            p.metallic = 1.0;
            p.specular = rng.uniform(0.0, 1.0);
            p.roughness = rng.uniform(0.05, 0.5);
            p.sheen = 0.0;
            p.base_color = rng.uniform(0.3, 1.0);
            break;
    }
    return p;
}

// Spatially varying material: the mask is partitioned into at most P
// superpixels (seeded k-means on pixel coordinates) and every pixel of a
// superpixel shares one parameter tuple.
struct MaterialMap {
    int height = 0;
    int width = 0;
    std::vector<int32_t> superpixel_id;  // -1 outside the mask
    std::vector<PrincipledParams> region_params;
    MaterialCategory category = MaterialCategory::Diffuse;

    const PrincipledParams& at(int r, int c) const {
        const int32_t id = superpixel_id[size_t(r) * width + c];
        return region_params[size_t(id)];
    }
};

inline MaterialMap make_material_map(const HeightfieldScene& scene, int P, MaterialCategory cat,
                                     uint64_t seed) {
    if (P < 1) throw ConfigError("make_material_map: P must be >= 1");
    std::vector<std::pair<int, int>> px;
    for (int r = 0; r < scene.height; ++r)
        for (int c = 0; c < scene.width; ++c)
            if (scene.mask.at(r, c)) px.emplace_back(r, c);
    if (size_t(P) > px.size())
        throw DataError("make_material_map: P exceeds masked pixel count");

    Rng rng(hash_combine(seed, 0x4d4154ULL));
    std::vector<uint32_t> pick = rng.sample_without_replacement(uint32_t(px.size()), uint32_t(P));
    std::vector<double> cx(P), cy(P);
    for (int k = 0; k < P; ++k) {
        cx[k] = px[pick[k]].second;
        cy[k] = px[pick[k]].first;
    }

    std::vector<int32_t> assign(px.size(), 0);
    for (int iter = 0; iter < 5; ++iter) {
        for (size_t i = 0; i < px.size(); ++i) {
            double best = 1e300;
            int32_t best_k = 0;
            for (int k = 0; k < P; ++k) {
                const double dx = px[i].second - cx[k];
                const double dy = px[i].first - cy[k];
                const double d = dx * dx + dy * dy;
                if (d < best) {
                    best = d;
                    best_k = k;
                }
            }
            assign[i] = best_k;
        }
        std::vector<double> sx(P, 0.0), sy(P, 0.0);
        std::vector<int> cnt(P, 0);
        for (size_t i = 0; i < px.size(); ++i) {
            sx[assign[i]] += px[i].second;
            sy[assign[i]] += px[i].first;
            ++cnt[assign[i]];
        }
        for (int k = 0; k < P; ++k) {
            if (cnt[k] == 0) continue;  // empty region keeps its center
            cx[k] = sx[k] / cnt[k];
            cy[k] = sy[k] / cnt[k];
        }
    }

    MaterialMap mm;
    mm.height = scene.height;
    mm.width = scene.width;
    mm.category = cat;
    mm.superpixel_id.assign(size_t(scene.height) * scene.width, -1);
    for (size_t i = 0; i < px.size(); ++i)
        mm.superpixel_id[size_t(px[i].first) * scene.width + px[i].second] = assign[i];
    mm.region_params.resize(P);
    for (int k = 0; k < P; ++k) {
        Rng region_rng(hash_combine(seed, 0x504152ULL, uint64_t(k)));
        mm.region_params[k] = sample_params(cat, region_rng);
    }
    return mm;
}

}  // namespace psforge
