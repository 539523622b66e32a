#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/core/tensor_file.hpp"
#include "psforge/micronet/network.hpp"
#include "psforge/obsmap/observation_map.hpp"
#include "psforge/synth/lights.hpp"
#include "psforge/synth/render.hpp"

namespace psforge {

struct TrainSample {
    ObservationMap obsmap;
    Vec3 gt_normal;
    // provenance
    std::string scene;
    int pixel_r = 0, pixel_c = 0;
    int rotation_index = 0;
    int subset_size = 0;
    double elevation_threshold_deg = 0.0;
};

struct TrainConfig {
    int w = 32;
    int rotations = 10;  // K_train, regular angles over [0, 360)
    int subset_min = 10;
    int subset_max = 100;
    double elevation_min_deg = 20.0;
    double elevation_max_deg = 90.0;
    int epochs = 10;
    int batch_size = 256;
    uint64_t seed = 0;
    int max_pixels_per_scene = 0;  // 0: use every masked pixel
    NetConfig net;

    void validate() const {
        if (subset_min < 1) throw ConfigError("TrainConfig: subset_min must be >= 1");
        if (subset_max < subset_min) throw ConfigError("TrainConfig: subset range is not ordered");
        if (elevation_max_deg < elevation_min_deg)
            throw ConfigError("TrainConfig: elevation range is not ordered");
        if (epochs < 1 || batch_size < 1) throw ConfigError("TrainConfig: bad epochs/batch");
    }
};

struct AssembleStats {
    size_t pixels_used = 0;
    size_t pixels_skipped_threshold = 0;  // too few lights above the elevation draw
    size_t pixels_skipped_dark = 0;       // every observation zero
};

// Builds the training set the CyclesPS way: per masked pixel, draw a subset
// size and an elevation threshold, filter and subsample the lights, build
// the observation map, and emit one rotated copy per training angle (lights
// and ground-truth normal rotated together).
inline std::vector<TrainSample> assemble_training_set(const std::vector<RenderedSample>& scenes,
                                                      const TrainConfig& cfg,
                                                      AssembleStats* stats_out = nullptr) {
    cfg.validate();
    AssembleStats stats;
    std::vector<TrainSample> out;

    for (size_t si = 0; si < scenes.size(); ++si) {
        const RenderedSample& rs = scenes[si];
        if (int(rs.lights.size()) < cfg.subset_min)
            throw DataError("assemble_training_set: scene " + rs.scene.name +
                            " has fewer lights than subset_min");
        std::vector<double> elev(rs.lights.size());
        for (size_t j = 0; j < rs.lights.size(); ++j)
            elev[j] = elevation_deg(rs.lights.directions[j]);

        std::vector<std::pair<int, int>> px;
        for (int r = 0; r < rs.stack.mask.height(); ++r)
            for (int c = 0; c < rs.stack.mask.width(); ++c)
                if (rs.stack.mask.at(r, c) && rs.gt_normals.mask.at(r, c)) px.emplace_back(r, c);

        if (cfg.max_pixels_per_scene > 0 && int(px.size()) > cfg.max_pixels_per_scene) {
            Rng rng(hash_combine(cfg.seed, 0x504958ULL, si));
            std::vector<uint32_t> pick =
                rng.sample_without_replacement(uint32_t(px.size()), uint32_t(cfg.max_pixels_per_scene));
            std::sort(pick.begin(), pick.end());
            std::vector<std::pair<int, int>> sel;
            sel.reserve(pick.size());
            for (uint32_t i : pick) sel.push_back(px[i]);
            px.swap(sel);
        }

        for (const auto& [r, c] : px) {
            const int pixel_index = r * rs.stack.mask.width() + c;
            Rng rng(hash_combine(cfg.seed, si, uint64_t(pixel_index)));
            const int target =
                cfg.subset_min + int(rng.index(uint64_t(cfg.subset_max - cfg.subset_min + 1)));
            const double tau = rng.uniform(cfg.elevation_min_deg, cfg.elevation_max_deg);

            std::vector<uint32_t> eligible;
            for (uint32_t j = 0; j < rs.lights.size(); ++j)
                if (elev[j] > tau) eligible.push_back(j);
            if (int(eligible.size()) < cfg.subset_min) {
                ++stats.pixels_skipped_threshold;
                continue;
            }
            const uint32_t k = uint32_t(std::min<int>(target, int(eligible.size())));
            std::vector<uint32_t> order =
                rng.sample_without_replacement(uint32_t(eligible.size()), k);
            std::sort(order.begin(), order.end());

            PixelObservations obs;
            LightSet subset;
            bool any_lit = false;
            for (uint32_t oi : order) {
                const uint32_t j = eligible[oi];
                const double v = rs.stack.images[j].at(r, c);
                obs.values.push_back(v);
                if (v > 0.0) any_lit = true;
                subset.directions.push_back(rs.lights.directions[j]);
                subset.intensities.push_back(rs.lights.intensities[j]);
            }
            if (!any_lit) {
                ++stats.pixels_skipped_dark;
                continue;
            }
            obs.lights = &subset;

            const Vec3 gt = rs.gt_normals.at(r, c);
            for (int ri = 0; ri < cfg.rotations; ++ri) {
                const double theta = 2.0 * kPi * double(ri) / double(cfg.rotations);
                TrainSample s;
                s.obsmap = ri == 0 ? build_observation_map(obs, cfg.w)
                                   : rotated_map(obs, theta, cfg.w);
                s.gt_normal = rotate_normal(gt, theta);
                s.scene = rs.scene.name;
                s.pixel_r = r;
                s.pixel_c = c;
                s.rotation_index = ri;
                s.subset_size = int(k);
                s.elevation_threshold_deg = tau;
                out.push_back(std::move(s));
            }
            ++stats.pixels_used;
        }
    }
    if (stats_out) *stats_out = stats;
    return out;
}

// --- shard persistence -------------------------------------------------------
// <prefix>_maps.tf [N,w,w], <prefix>_normals.tf [N,3] and a provenance
// sidecar, one line per sample. Hit counts are not persisted; the network
// consumes cell values only.

inline void save_training_shard(const std::string& prefix, const std::vector<TrainSample>& set) {
    if (set.empty()) throw DataError("save_training_shard: empty sample set");
    const int w = set[0].obsmap.w;
    std::vector<float> maps;
    maps.reserve(set.size() * size_t(w) * w);
    std::vector<float> normals;
    normals.reserve(set.size() * 3);
    std::ofstream prov(prefix + "_provenance.txt");
    if (!prov) throw DataError("save_training_shard: cannot open provenance file");
    prov << "# scene pixel_r pixel_c rotation subset_size elevation_threshold_deg\n";
    for (const TrainSample& s : set) {
        if (s.obsmap.w != w) throw DataError("save_training_shard: inconsistent map size");
        maps.insert(maps.end(), s.obsmap.cells.begin(), s.obsmap.cells.end());
        normals.push_back(float(s.gt_normal.x));
        normals.push_back(float(s.gt_normal.y));
        normals.push_back(float(s.gt_normal.z));
        prov << s.scene << ' ' << s.pixel_r << ' ' << s.pixel_c << ' ' << s.rotation_index << ' '
             << s.subset_size << ' ' << s.elevation_threshold_deg << '\n';
    }
    const uint32_t n = uint32_t(set.size());
    write_tensor(prefix + "_maps.tf", std::vector<uint32_t>{n, uint32_t(w), uint32_t(w)}, maps);
    write_tensor(prefix + "_normals.tf", std::vector<uint32_t>{n, 3}, normals);
}

inline std::vector<TrainSample> load_training_shard(const std::string& prefix) {
    Tensor maps = read_tensor(prefix + "_maps.tf");
    Tensor normals = read_tensor(prefix + "_normals.tf");
    if (maps.dims.size() != 3 || normals.dims.size() != 2 || normals.dims[1] != 3 ||
        maps.dims[0] != normals.dims[0])
        throw DataError("load_training_shard: inconsistent shard tensors");
    const int n = int(maps.dims[0]);
    const int w = int(maps.dims[1]);
    if (maps.dims[2] != uint32_t(w)) throw DataError("load_training_shard: non-square maps");
    std::vector<TrainSample> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].obsmap = ObservationMap(w);
        std::copy(maps.data.begin() + size_t(i) * w * w, maps.data.begin() + size_t(i + 1) * w * w,
                  out[i].obsmap.cells.begin());
        out[i].gt_normal = Vec3{normals.data[size_t(i) * 3], normals.data[size_t(i) * 3 + 1],
                                normals.data[size_t(i) * 3 + 2]};
    }
    return out;
}

}  // namespace psforge
