#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "psforge/core/metrics.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/pipeline/dataset.hpp"
#include "psforge/pipeline/predict.hpp"
#include "psforge/pipeline/train.hpp"
#include "psforge/synth/lights.hpp"
#include "psforge/synth/material.hpp"
#include "psforge/synth/render.hpp"

using namespace psforge;
namespace fs = std::filesystem;

namespace {

const NetConfig kTinyNet{32, 4, 4, 8, 16, 0.2};

RenderedSample small_scene(uint64_t seed, bool bowl = false) {
    const int size = 25;
    const HeightfieldScene scene = bowl ? make_bowl_scene(size) : make_sphere_scene(size);
    const MaterialMap mm = make_material_map(scene, 12, MaterialCategory::Specular, seed);
    const LightSet rig = sample_lights(60, 20.0, 1.0, seed + 1);
    return render(scene, mm, rig);
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.rotations = 10;
    cfg.subset_min = 5;
    cfg.subset_max = 30;
    cfg.max_pixels_per_scene = 30;
    cfg.seed = 7;
    cfg.net = kTinyNet;
    return cfg;
}

uint64_t set_fingerprint(const std::vector<TrainSample>& set) {
    uint64_t h = 14695981039346656037ULL;
    for (const TrainSample& s : set) {
        for (float v : s.obsmap.cells) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            h = hash_combine(h, bits);
        }
        h = hash_combine(h, uint64_t(s.pixel_r), uint64_t(s.pixel_c), uint64_t(s.rotation_index));
        h = hash_combine(h, uint64_t(std::llround(s.gt_normal.x * 1e15)),
                         uint64_t(std::llround(s.gt_normal.y * 1e15)));
    }
    return h;
}

}  // namespace

TEST_CASE("assemble emits rotations times the retained pixel count", "[pipeline]") {
    const std::vector<RenderedSample> scenes = {small_scene(3)};
    TrainConfig cfg = small_config();
    AssembleStats stats;
    const std::vector<TrainSample> set = assemble_training_set(scenes, cfg, &stats);
    CHECK(stats.pixels_used > 0);
    CHECK(set.size() == stats.pixels_used * 10);

    // per pixel: one sample per rotation index
    for (size_t i = 0; i + 10 <= set.size(); i += 10)
        for (int r = 0; r < 10; ++r) REQUIRE(set[i + r].rotation_index == r);

    // ground-truth normals rotate with the lights; z stays put
    for (size_t i = 0; i + 10 <= set.size(); i += 10)
        for (int r = 1; r < 10; ++r) {
            REQUIRE(set[i + r].gt_normal.z == set[i].gt_normal.z);
            REQUIRE(set[i + r].gt_normal.norm() == Catch::Approx(1.0).epsilon(1e-9));
        }
}

TEST_CASE("assemble with one unrotated copy keeps the raw ground truth", "[pipeline]") {
    const std::vector<RenderedSample> scenes = {small_scene(4)};
    TrainConfig cfg = small_config();
    cfg.rotations = 1;
    const std::vector<TrainSample> set = assemble_training_set(scenes, cfg);
    REQUIRE(!set.empty());

    const RenderedSample& rs = scenes[0];
    for (const TrainSample& s : set) {
        REQUIRE(s.rotation_index == 0);
        const Vec3 gt = rs.gt_normals.at(s.pixel_r, s.pixel_c);
        REQUIRE(s.gt_normal.x == gt.x);
        REQUIRE(s.gt_normal.y == gt.y);
        REQUIRE(s.gt_normal.z == gt.z);
        REQUIRE(s.obsmap.w == cfg.w);
        REQUIRE(s.subset_size >= cfg.subset_min);
        float max_cell = 0.0f;
        for (float v : s.obsmap.cells) max_cell = std::max(max_cell, v);
        REQUIRE(max_cell == 1.0f);  // the brightest observation normalizes to 1
    }
}

TEST_CASE("assemble is deterministic per seed", "[pipeline]") {
    const std::vector<RenderedSample> scenes = {small_scene(5), small_scene(6, true)};
    TrainConfig cfg = small_config();
    const auto a = assemble_training_set(scenes, cfg);
    const auto b = assemble_training_set(scenes, cfg);
    REQUIRE(a.size() == b.size());
    CHECK(set_fingerprint(a) == set_fingerprint(b));

    cfg.seed += 1;
    const auto c = assemble_training_set(scenes, cfg);
    CHECK(set_fingerprint(a) != set_fingerprint(c));
}

TEST_CASE("assemble skips fully shadowed pixels with a counted warning", "[pipeline]") {
    RenderedSample rs = small_scene(8);
    // black out a few pixels entirely
    int killed = 0;
    for (int r = 10; r < 13; ++r)
        for (int c = 10; c < 13; ++c)
            if (rs.stack.mask.at(r, c)) {
                for (Image& img : rs.stack.images) img.at(r, c) = 0.0f;
                ++killed;
            }
    REQUIRE(killed > 0);
    TrainConfig cfg = small_config();
    cfg.max_pixels_per_scene = 0;   // visit every pixel
    cfg.elevation_min_deg = 0.0;    // keep the elevation draw from pre-empting the dark skip
    cfg.elevation_max_deg = 5.0;
    AssembleStats stats;
    assemble_training_set({rs}, cfg, &stats);
    CHECK(stats.pixels_skipped_dark == size_t(killed));
}

TEST_CASE("training shards round trip", "[pipeline]") {
    const std::vector<RenderedSample> scenes = {small_scene(9)};
    TrainConfig cfg = small_config();
    cfg.rotations = 2;
    const std::vector<TrainSample> set = assemble_training_set(scenes, cfg);
    REQUIRE(!set.empty());

    const std::string prefix = (fs::temp_directory_path() / "psforge_shard").string();
    save_training_shard(prefix, set);
    const std::vector<TrainSample> loaded = load_training_shard(prefix);
    REQUIRE(loaded.size() == set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        REQUIRE(loaded[i].obsmap.cells == set[i].obsmap.cells);
        REQUIRE(loaded[i].gt_normal.x == Catch::Approx(set[i].gt_normal.x).margin(1e-7));
        REQUIRE(loaded[i].gt_normal.z == Catch::Approx(set[i].gt_normal.z).margin(1e-7));
    }
    CHECK_THROWS_AS(save_training_shard(prefix, {}), DataError);
}

TEST_CASE("training reduces the loss and is seed-deterministic", "[pipeline]") {
    const std::vector<RenderedSample> scenes = {small_scene(10), small_scene(11, true)};
    const std::vector<RenderedSample> val_scenes = {small_scene(12)};
    TrainConfig cfg = small_config();
    cfg.rotations = 4;
    cfg.epochs = 3;
    cfg.batch_size = 64;
    const auto train_set = assemble_training_set(scenes, cfg);
    TrainConfig vcfg = cfg;
    vcfg.max_pixels_per_scene = 15;
    const auto val_set = assemble_training_set(val_scenes, vcfg);
    REQUIRE(train_set.size() > 100);

    MicroNet<float> net(cfg.net);
    const auto log = train(net, train_set, val_set, cfg);
    REQUIRE(int(log.size()) == cfg.epochs);
    CHECK(log.back().train_loss < log.front().train_loss);
    for (const EpochLog& e : log) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.val_mae_deg >= 0.0);
        CHECK(e.val_mae_deg <= 180.0);
    }

    MicroNet<float> net2(cfg.net);
    const auto log2 = train(net2, train_set, val_set, cfg);
    CHECK(std::abs(log2.back().train_loss - log.back().train_loss) < 1e-6);
    for (size_t t = 0; t < net.params().size(); ++t)
        REQUIRE(*net.params()[t].value == *net2.params()[t].value);

    CHECK_THROWS_AS(train(net, train_set, {}, cfg), DataError);
    CHECK_THROWS_AS(train(net, {}, val_set, cfg), DataError);
}

TEST_CASE("predict_pixel matches the plain network at K=1", "[pipeline]") {
    MicroNet<float> net(kTinyNet);
    net.init_weights(33);

    const LightSet rig = sample_lights(40, 25.0, 1.0, 13);
    Rng rng(14);
    PixelObservations obs;
    obs.values.resize(rig.size());
    for (double& v : obs.values) v = rng.uniform(0.0, 1.0);
    obs.lights = &rig;

    PredictConfig k1;
    const Vec3 via_pipeline = predict_pixel(obs, net, k1);
    const Vec3 direct = net.predict(build_observation_map(obs, 32));
    // Eq. 9 renormalizes the averaged vector, so K=1 agrees with the raw
    // network output up to one float rounding step
    CHECK(via_pipeline.x == Catch::Approx(direct.x).margin(1e-6));
    CHECK(via_pipeline.y == Catch::Approx(direct.y).margin(1e-6));
    CHECK(via_pipeline.z == Catch::Approx(direct.z).margin(1e-6));
    CHECK(angular_error(via_pipeline, direct) < 1e-5);
    CHECK(via_pipeline.norm() == Catch::Approx(1.0).epsilon(1e-9));

    PredictConfig k10;
    k10.rotations = 10;
    const Vec3 merged = predict_pixel(obs, net, k10);
    CHECK(merged.norm() == Catch::Approx(1.0).epsilon(1e-9));

    // all observations zero: flagged, not silently wrong
    PixelObservations dark;
    dark.values.assign(rig.size(), 0.0);
    dark.lights = &rig;
    CHECK_THROWS_AS(predict_pixel(dark, net, k1), NumericalError);
}

TEST_CASE("K-fold averaging of identical outputs is exact", "[pipeline]") {
    // zero weights: the feature collapses and the head falls back to (0,0,1)
    // for every rotation, so K=1 and K=10 must agree exactly
    MicroNet<float> net(kTinyNet);
    const LightSet rig = sample_lights(30, 25.0, 1.0, 15);
    Rng rng(16);
    PixelObservations obs;
    obs.values.resize(rig.size());
    for (double& v : obs.values) v = rng.uniform(0.1, 1.0);
    obs.lights = &rig;

    PredictConfig k1;
    PredictConfig k10;
    k10.rotations = 10;
    const Vec3 a = predict_pixel(obs, net, k1);
    const Vec3 b = predict_pixel(obs, net, k10);
    CHECK(a.x == 0.0);
    CHECK(a.z == 1.0);
    CHECK(b.x == a.x);
    CHECK(b.y == a.y);
    CHECK(b.z == a.z);
}

TEST_CASE("predict_map places pixels and flags failures", "[pipeline]") {
    MicroNet<float> net(kTinyNet);
    net.init_weights(41);
    const RenderedSample rs = small_scene(17);

    Mask one(rs.stack.height(), rs.stack.width());
    one.set(12, 12, true);
    REQUIRE(rs.stack.mask.at(12, 12));
    PredictConfig cfg;
    const PredictMapResult single = predict_map(rs.stack, rs.lights, net, cfg, one);
    REQUIRE(single.normals.mask.count() == 1);
    REQUIRE(single.normals.mask.at(12, 12));
    CHECK(single.normals.at(12, 12).norm() == Catch::Approx(1.0).epsilon(1e-6));

    // the same pixel through predict_pixel gives the identical answer
    PixelObservations obs;
    obs.values.resize(rs.lights.size());
    for (size_t j = 0; j < rs.lights.size(); ++j) obs.values[j] = rs.stack.images[j].at(12, 12);
    obs.lights = &rs.lights;
    const Vec3 direct = predict_pixel(obs, net, cfg);
    CHECK(direct.x == single.normals.at(12, 12).x);
    CHECK(direct.z == single.normals.at(12, 12).z);

    // fully dark pixel is flagged, not fatal
    RenderedSample dark = rs;
    for (Image& img : dark.stack.images) img.at(12, 12) = 0.0f;
    const PredictMapResult flagged = predict_map(dark.stack, dark.lights, net, cfg, one);
    CHECK(flagged.failed_pixels == 1);
    CHECK(flagged.normals.mask.count() == 0);
}

TEST_CASE("predictions are invariant to image order and global intensity scale", "[pipeline]") {
    MicroNet<float> net(kTinyNet);
    net.init_weights(51);
    const RenderedSample rs = small_scene(18);
    PredictConfig cfg;
    cfg.rotations = 2;

    const PredictMapResult base = predict_map(rs.stack, rs.lights, net, cfg, rs.stack.mask);

    // permute images and lights in lockstep
    RenderedSample perm = rs;
    std::vector<uint32_t> order(rs.lights.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = uint32_t(i);
    Rng rng(19);
    rng.shuffle(order);
    perm.stack.images.clear();
    perm.lights.directions.clear();
    perm.lights.intensities.clear();
    for (uint32_t j : order) {
        perm.stack.images.push_back(rs.stack.images[j]);
        perm.lights.directions.push_back(rs.lights.directions[j]);
        perm.lights.intensities.push_back(rs.lights.intensities[j]);
    }
    const PredictMapResult permuted = predict_map(perm.stack, perm.lights, net, cfg, rs.stack.mask);
    for (int r = 0; r < base.normals.height; ++r)
        for (int c = 0; c < base.normals.width; ++c) {
            REQUIRE(permuted.normals.at(r, c).x == base.normals.at(r, c).x);
            REQUIRE(permuted.normals.at(r, c).y == base.normals.at(r, c).y);
            REQUIRE(permuted.normals.at(r, c).z == base.normals.at(r, c).z);
        }

    // scale all images by 4 (alpha cancels exactly for power-of-two factors)
    RenderedSample scaled = rs;
    for (Image& img : scaled.stack.images)
        for (float& v : img.data()) v *= 4.0f;
    const PredictMapResult rescaled = predict_map(scaled.stack, scaled.lights, net, cfg,
                                                  rs.stack.mask);
    for (int r = 0; r < base.normals.height; ++r)
        for (int c = 0; c < base.normals.width; ++c) {
            REQUIRE(rescaled.normals.at(r, c).x == base.normals.at(r, c).x);
            REQUIRE(rescaled.normals.at(r, c).z == base.normals.at(r, c).z);
        }

    // scale images and intensities together
    RenderedSample both = rs;
    for (double& L : both.lights.intensities) L *= 4.0;
    for (Image& img : both.stack.images)
        for (float& v : img.data()) v *= 4.0f;
    const PredictMapResult rescaled2 = predict_map(both.stack, both.lights, net, cfg,
                                                   rs.stack.mask);
    for (int r = 0; r < base.normals.height; ++r)
        for (int c = 0; c < base.normals.width; ++c)
            REQUIRE(rescaled2.normals.at(r, c).x == base.normals.at(r, c).x);
}
