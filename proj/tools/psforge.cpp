// psforge command line: render synthetic photometric stereo datasets, train
// the observation-map network, predict normal maps, run the classical
// baseline, and evaluate against ground truth.

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "psforge/psforge.hpp"

namespace fs = std::filesystem;
using namespace psforge;

namespace {

uint64_t resolve_seed(const std::string& seed_flag) {
    if (!seed_flag.empty()) return std::stoull(seed_flag);
    if (const char* env = std::getenv("PSFORGE_SEED")) return std::stoull(env);
    return 0;
}

std::vector<int> parse_exclude(const std::string& spec) {
    std::vector<int> out;
    if (spec.empty()) return out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const size_t dash = item.find('-');
        if (dash == std::string::npos) {
            out.push_back(std::stoi(item));
        } else {
            const int lo = std::stoi(item.substr(0, dash));
            const int hi = std::stoi(item.substr(dash + 1));
            if (hi < lo) throw ConfigError("--exclude: bad range " + item);
            for (int i = lo; i <= hi; ++i) out.push_back(i);
        }
    }
    return out;
}

void apply_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

HeightfieldScene scene_from_config(const KeyValueConfig& cfg) {
    const std::string kind = cfg.get_string("scene", "");
    const int size = int(cfg.get_int("size", 64));
    if (size < 8) throw ConfigError("config: size must be >= 8");
    const std::string name = cfg.get_string("name", kind);
    if (kind == "sphere")
        return make_sphere_scene(size, cfg.get_double("sphere_radius_frac", 0.9), 0.95, name);
    if (kind == "bowl")
        return make_bowl_scene(size, cfg.get_double("bowl_radius_frac", 0.85),
                               cfg.get_double("bowl_depth_frac", 0.6), name);
    if (kind == "bumps")
        return make_bumps_scene(size, uint64_t(cfg.get_int("bumps_seed", 1)),
                                int(cfg.get_int("bumps_count", 12)), name);
    throw ConfigError("config: unknown scene kind: '" + kind + "'");
}

int cmd_render(const std::string& config_path, const std::string& out_dir,
               const std::string& seed_flag) {
    const KeyValueConfig cfg = KeyValueConfig::from_file(config_path);
    HeightfieldScene scene = scene_from_config(cfg);
    uint64_t seed = uint64_t(cfg.get_int("seed", 0));
    if (!seed_flag.empty() || std::getenv("PSFORGE_SEED")) seed = resolve_seed(seed_flag);

    const MaterialCategory category =
        material_category_from_string(cfg.get_string("category", "diffuse"));
    const int P = int(cfg.get_int("superpixels", 100));
    const int light_count = int(cfg.get_int("lights", 300));
    const double elevation_min = cfg.get_double("elevation_min", 20.0);
    const double jitter = cfg.get_double("jitter", 1.0);
    RenderOptions opt;
    opt.interreflection = cfg.get_bool("interreflection", false);
    opt.interreflection_samples = int(cfg.get_int("interreflection_samples", 64));
    opt.seed = seed;
    cfg.reject_unknown_keys();

    const LightSet lights = sample_lights(light_count, elevation_min, jitter,
                                          hash_combine(seed, 0x4c4754ULL));
    const MaterialMap materials = make_material_map(scene, P, category, seed);
    const RenderedSample rs = render(scene, materials, lights, opt);
    save_rendered_sample(out_dir, rs);
    std::cout << "rendered " << rs.stack.count() << " images of '" << scene.name << "' ("
              << to_string(category) << ") to " << out_dir << "\n";
    return 0;
}

TrainConfig train_config_from_file(const std::string& path, uint64_t seed) {
    TrainConfig tc;
    tc.seed = seed;
    if (path.empty()) return tc;
    const KeyValueConfig cfg = KeyValueConfig::from_file(path);
    tc.w = int(cfg.get_int("w", tc.w));
    tc.rotations = int(cfg.get_int("rotations", tc.rotations));
    tc.subset_min = int(cfg.get_int("subset_min", tc.subset_min));
    tc.subset_max = int(cfg.get_int("subset_max", tc.subset_max));
    tc.elevation_min_deg = cfg.get_double("elevation_min", tc.elevation_min_deg);
    tc.elevation_max_deg = cfg.get_double("elevation_max", tc.elevation_max_deg);
    tc.epochs = int(cfg.get_int("epochs", tc.epochs));
    tc.batch_size = int(cfg.get_int("batch", tc.batch_size));
    tc.max_pixels_per_scene = int(cfg.get_int("max_pixels_per_scene", tc.max_pixels_per_scene));
    tc.net.input_w = tc.w;
    tc.net.init_filters = int(cfg.get_int("init_filters", tc.net.init_filters));
    tc.net.growth = int(cfg.get_int("growth", tc.net.growth));
    tc.net.transition_channels =
        int(cfg.get_int("transition_channels", tc.net.transition_channels));
    tc.net.hidden_units = int(cfg.get_int("hidden_units", tc.net.hidden_units));
    tc.net.dropout_p = cfg.get_double("dropout", tc.net.dropout_p);
    cfg.reject_unknown_keys();
    return tc;
}

RenderedSample dataset_as_rendered_sample(const std::string& dir) {
    Dataset ds = load_dataset(dir);
    if (!ds.has_gt)
        throw DataError("train: dataset " + dir + " has no ground-truth normals");
    RenderedSample rs;
    rs.scene.name = fs::path(dir).filename().string();
    rs.lights = std::move(ds.lights);
    rs.stack = std::move(ds.stack);
    rs.gt_normals = std::move(ds.gt);
    return rs;
}

int cmd_train(const std::vector<std::string>& train_dirs, const std::vector<std::string>& val_dirs,
              const std::string& config_path, const std::string& out_path,
              const std::string& seed_flag, bool verify_gradients, int val_max_pixels) {
    const uint64_t seed = resolve_seed(seed_flag);
    TrainConfig cfg = train_config_from_file(config_path, seed);

    if (verify_gradients) {
        MicroNet<double> check_net(NetConfig{cfg.net.input_w, 4, 4, 8, 16, cfg.net.dropout_p});
        check_net.init_weights(hash_combine(seed, 0x4744ULL));
        Batch<double> x(2, 1, cfg.net.input_w, cfg.net.input_w);
        Rng rng(hash_combine(seed, 0x474443ULL));
        for (double& v : x.data) v = rng.uniform();
        std::vector<double> gt = {0.0, 0.6, 0.8, 1.0, 0.0, 0.0};
        const FdReport report = finite_diff_check(check_net, x, gt);
        std::cout << "gradient check: max relative error " << report.max_rel_err << "\n";
        if (report.max_rel_err >= 1e-4) {
            std::cerr << "gradient check failed\n";
            return 3;
        }
    }

    std::vector<RenderedSample> train_scenes, val_scenes;
    for (const std::string& d : train_dirs) train_scenes.push_back(dataset_as_rendered_sample(d));
    for (const std::string& d : val_dirs) val_scenes.push_back(dataset_as_rendered_sample(d));

    AssembleStats stats;
    const std::vector<TrainSample> train_set = assemble_training_set(train_scenes, cfg, &stats);
    TrainConfig val_cfg = cfg;
    val_cfg.max_pixels_per_scene = val_max_pixels;
    const std::vector<TrainSample> val_set = assemble_training_set(val_scenes, val_cfg);
    std::cout << "assembled " << train_set.size() << " training samples from "
              << stats.pixels_used << " pixels (" << stats.pixels_skipped_threshold
              << " skipped by elevation draw, " << stats.pixels_skipped_dark
              << " fully shadowed); " << val_set.size() << " validation samples\n";

    MicroNet<float> net(cfg.net);
    const std::vector<EpochLog> log = train(net, train_set, val_set, cfg, true);

    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    save_model(out_path, net);
    std::ofstream metrics(out_path + ".metrics.txt");
    metrics.precision(10);
    for (const EpochLog& e : log) metrics << e.epoch << ' ' << e.train_loss << ' '
                                          << e.val_mae_deg << '\n';
    std::cout << "model written to " << out_path << " (final val MAE "
              << log.back().val_mae_deg << " deg)\n";
    return 0;
}

int cmd_predict(const std::string& data_dir, const std::string& model_path, int rotations,
                const std::string& exclude, const std::string& out_dir) {
    const Dataset ds = load_dataset(data_dir, parse_exclude(exclude));
    MicroNet<float> net(read_model_config(model_path));
    load_model(model_path, net);

    PredictConfig cfg;
    cfg.rotations = rotations;
    const PredictMapResult result = predict_map(ds.stack, ds.lights, net, cfg, ds.stack.mask);

    fs::create_directories(out_dir);
    save_normal_map(out_dir + "/normals_est.tf", out_dir + "/normals_est.png", result.normals);
    std::cout << "predicted " << result.normals.mask.count() << " pixels (K=" << rotations
              << ", " << result.failed_pixels << " flagged) to " << out_dir << "\n";
    if (ds.has_gt)
        std::cout << "mean angular error: " << mean_angular_error(result.normals, ds.gt)
                  << " deg\n";
    return 0;
}

int cmd_baseline(const std::string& data_dir, double tau, const std::string& out_dir) {
    const Dataset ds = load_dataset(data_dir);
    const BaselineResult result = baseline_map(ds.stack, ds.lights, tau, ds.stack.mask);

    fs::create_directories(out_dir);
    save_normal_map(out_dir + "/normals_baseline.tf", out_dir + "/normals_baseline.png",
                    result.normals);
    const uint32_t h = uint32_t(result.albedo.height()), w = uint32_t(result.albedo.width());
    write_tensor(out_dir + "/albedo.tf", std::vector<uint32_t>{h, w}, result.albedo.data());
    write_tensor(out_dir + "/residual.tf", std::vector<uint32_t>{h, w}, result.residual.data());
    std::cout << "baseline solved " << result.normals.mask.count() << " pixels ("
              << result.failed_pixels << " failed) to " << out_dir << "\n";
    if (ds.has_gt)
        std::cout << "mean angular error: " << mean_angular_error(result.normals, ds.gt)
                  << " deg\n";
    return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, const std::string& mask_path,
             const std::string& out_dir) {
    const NormalMap est = load_normal_map(est_path);
    const NormalMap gt = load_normal_map(gt_path);
    if (est.height != gt.height || est.width != gt.width)
        throw DataError("eval: estimate and ground truth differ in shape");

    Mask extra(est.height, est.width, true);
    if (!mask_path.empty()) extra = mask_from_png(read_png(mask_path));
    if (extra.height() != est.height || extra.width() != est.width)
        throw DataError("eval: mask shape mismatch");

    std::vector<double> errors;
    double sum = 0.0, max_err = 0.0;
    std::vector<uint16_t> emap(size_t(est.height) * est.width, 0);
    for (int r = 0; r < est.height; ++r) {
        for (int c = 0; c < est.width; ++c) {
            if (!est.mask.at(r, c) || !gt.mask.at(r, c) || !extra.at(r, c)) continue;
            const double e = angular_error(est.at(r, c), gt.at(r, c));
            errors.push_back(e);
            sum += e;
            max_err = std::max(max_err, e);
            // error map scale: 0 deg -> 0, 90 deg -> 255, clamped
            emap[size_t(r) * est.width + c] =
                uint16_t(std::lround(std::clamp(e / 90.0, 0.0, 1.0) * 255.0));
        }
    }
    if (errors.empty()) throw DataError("eval: empty mask intersection");
    std::sort(errors.begin(), errors.end());
    const double mean = sum / double(errors.size());
    const double median = errors.size() % 2 ? errors[errors.size() / 2]
                                            : 0.5 * (errors[errors.size() / 2 - 1] +
                                                     errors[errors.size() / 2]);

    fs::create_directories(out_dir);
    write_png_gray8(out_dir + "/error_map.png", est.width, est.height, emap);
    std::ofstream report(out_dir + "/report.txt");
    report.precision(10);
    report << "pixels " << errors.size() << "\nmean " << mean << "\nmedian " << median << "\nmax "
           << max_err << "\n";
    std::cout << "mean " << mean << "  median " << median << "  max " << max_err << "  ("
              << errors.size() << " px)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"psforge: CNN photometric stereo toolkit"};
    app.require_subcommand(1);

    std::string seed_flag, config_path, out_path, model_path, exclude, mask_path;
    std::string est_path, gt_path, data_dir;
    std::vector<std::string> train_dirs, val_dirs;
    int rotations = 1, jobs = 0, val_max_pixels = 300;
    double tau = kDefaultShadowThreshold;
    bool verify_gradients = false;

    auto* render = app.add_subcommand("render", "render a synthetic dataset");
    render->add_option("--config", config_path, "scene config file")->required();
    render->add_option("--out", out_path, "output dataset directory")->required();
    render->add_option("--seed", seed_flag, "seed (overrides config and PSFORGE_SEED)");
    render->add_option("--jobs", jobs, "worker threads");

    auto* train = app.add_subcommand("train", "train the network on rendered datasets");
    train->add_option("data", train_dirs, "training dataset directories")->required();
    train->add_option("--val", val_dirs, "validation dataset directories")->required();
    train->add_option("--config", config_path, "training config file");
    train->add_option("--out", out_path, "output model path")->required();
    train->add_option("--seed", seed_flag, "training seed");
    train->add_option("--jobs", jobs, "worker threads");
    train->add_option("--val-max-pixels", val_max_pixels, "validation pixels per scene");
    train->add_flag("--verify-gradients", verify_gradients, "run the gradient oracle first");

    auto* predict = app.add_subcommand("predict", "predict a normal map");
    predict->add_option("data", data_dir, "dataset directory")->required();
    predict->add_option("--model", model_path, "trained model")->required();
    predict->add_option("--rotations", rotations, "rotation count K for merging");
    predict->add_option("--exclude", exclude, "image indices to discard, e.g. 0-19,30");
    predict->add_option("--out", out_path, "output directory")->required();
    predict->add_option("--jobs", jobs, "worker threads");

    auto* baseline = app.add_subcommand("baseline", "classical Lambertian least squares");
    baseline->add_option("data", data_dir, "dataset directory")->required();
    baseline->add_option("--threshold", tau, "shadow threshold in linear units");
    baseline->add_option("--out", out_path, "output directory")->required();
    baseline->add_option("--jobs", jobs, "worker threads");

    auto* eval = app.add_subcommand("eval", "angular error report and error map");
    eval->add_option("--est", est_path, "estimated normal map (.tf or .png)")->required();
    eval->add_option("--gt", gt_path, "ground truth normal map (.tf or .png)")->required();
    eval->add_option("--mask", mask_path, "optional mask PNG");
    eval->add_option("--out", out_path, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        apply_jobs(jobs);
        if (render->parsed()) return cmd_render(config_path, out_path, seed_flag);
        if (train->parsed())
            return cmd_train(train_dirs, val_dirs, config_path, out_path, seed_flag,
                             verify_gradients, val_max_pixels);
        if (predict->parsed())
            return cmd_predict(data_dir, model_path, rotations, exclude, out_path);
        if (baseline->parsed()) return cmd_baseline(data_dir, tau, out_path);
        if (eval->parsed()) return cmd_eval(est_path, gt_path, mask_path, out_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
