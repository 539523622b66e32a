#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "psforge/core/tensor_file.hpp"

using namespace psforge;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

const fs::path kWork = fs::temp_directory_path() / "psforge_cli_tests";

RunResult run_cli(const std::string& args) {
    const char* bin = std::getenv("PSFORGE_BIN");
    REQUIRE(bin != nullptr);
    const std::string log = (kWork / "cmd_output.txt").string();
    const std::string cmd = std::string(bin) + " " + args + " > " + log + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    r.output = ss.str();
    return r;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    return sa.str() == sb.str();
}

std::string sphere_config() {
    return "scene = sphere\nsize = 24\ncategory = specular\nsuperpixels = 10\n"
           "lights = 20\nelevation_min = 25\nseed = 5\n";
}

std::string tiny_train_config() {
    return "epochs = 2\nbatch = 64\nsubset_min = 5\nsubset_max = 15\nrotations = 2\n"
           "max_pixels_per_scene = 40\ninit_filters = 4\ngrowth = 4\n"
           "transition_channels = 8\nhidden_units = 16\n";
}

}  // namespace

TEST_CASE("render command writes a complete deterministic dataset", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "sphere.cfg", sphere_config());

    const auto r1 = run_cli("render --config " + (kWork / "sphere.cfg").string() + " --out " +
                            (kWork / "d1").string() + " --jobs 1");
    INFO(r1.output);
    REQUIRE(r1.code == 0);

    // image count equals light count
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(kWork / "d1"))
        if (e.path().filename().string().rfind("img_", 0) == 0) ++pngs;
    CHECK(pngs == 20);
    const Tensor stack = read_tensor((kWork / "d1/images.tf").string());
    REQUIRE(stack.dims.size() == 3);
    CHECK(stack.dims[0] == 20);
    CHECK(fs::exists(kWork / "d1/lights.txt"));
    CHECK(fs::exists(kWork / "d1/intensities.txt"));
    CHECK(fs::exists(kWork / "d1/mask.png"));
    CHECK(fs::exists(kWork / "d1/normals_gt.tf"));

    // same config and seed: byte-identical tensors
    const auto r2 = run_cli("render --config " + (kWork / "sphere.cfg").string() + " --out " +
                            (kWork / "d2").string() + " --jobs 1");
    REQUIRE(r2.code == 0);
    CHECK(same_bytes(kWork / "d1/images.tf", kWork / "d2/images.tf"));
    CHECK(same_bytes(kWork / "d1/normals_gt.tf", kWork / "d2/normals_gt.tf"));
}

TEST_CASE("render rejects bad configs by name", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "bad_scene.cfg", "scene = warp\nsize = 24\n");
    const auto r = run_cli("render --config " + (kWork / "bad_scene.cfg").string() + " --out " +
                           (kWork / "bad1").string());
    CHECK(r.code == 1);
    CHECK(r.output.find("warp") != std::string::npos);

    write_file(kWork / "bad_key.cfg", sphere_config() + "warpfactor = 9\n");
    const auto r2 = run_cli("render --config " + (kWork / "bad_key.cfg").string() + " --out " +
                            (kWork / "bad2").string());
    CHECK(r2.code == 1);
    CHECK(r2.output.find("warpfactor") != std::string::npos);
}

TEST_CASE("train, predict and eval work end to end at smoke scale", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "sphere.cfg", sphere_config());
    write_file(kWork / "bowl.cfg",
               "scene = bowl\nsize = 24\ncategory = specular\nsuperpixels = 10\n"
               "lights = 20\nelevation_min = 25\nseed = 8\n");
    write_file(kWork / "train.cfg", tiny_train_config());

    REQUIRE(run_cli("render --config " + (kWork / "sphere.cfg").string() + " --out " +
                    (kWork / "ds_a").string()).code == 0);
    REQUIRE(run_cli("render --config " + (kWork / "bowl.cfg").string() + " --out " +
                    (kWork / "ds_b").string()).code == 0);

    const std::string model = (kWork / "model.psm").string();
    const auto t = run_cli("train " + (kWork / "ds_a").string() + " --val " +
                           (kWork / "ds_b").string() + " --config " +
                           (kWork / "train.cfg").string() + " --out " + model +
                           " --seed 3 --jobs 1 --val-max-pixels 20");
    INFO(t.output);
    REQUIRE(t.code == 0);
    REQUIRE(fs::exists(model));

    // metric log has exactly `epochs` lines
    std::ifstream metrics(model + ".metrics.txt");
    int lines = 0;
    std::string line;
    while (std::getline(metrics, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 2);

    const auto p = run_cli("predict " + (kWork / "ds_b").string() + " --model " + model +
                           " --out " + (kWork / "pred").string() + " --jobs 1");
    INFO(p.output);
    REQUIRE(p.code == 0);
    REQUIRE(fs::exists(kWork / "pred/normals_est.tf"));
    REQUIRE(fs::exists(kWork / "pred/normals_est.png"));

    // K = 10 and an exclusion list are accepted
    const auto p10 = run_cli("predict " + (kWork / "ds_b").string() + " --model " + model +
                             " --rotations 10 --exclude 0-2,5 --out " +
                             (kWork / "pred10").string() + " --jobs 1");
    INFO(p10.output);
    REQUIRE(p10.code == 0);

    const auto e = run_cli("eval --est " + (kWork / "pred/normals_est.tf").string() + " --gt " +
                           (kWork / "ds_b/normals_gt.tf").string() + " --out " +
                           (kWork / "evald").string());
    INFO(e.output);
    REQUIRE(e.code == 0);
    CHECK(fs::exists(kWork / "evald/error_map.png"));
    CHECK(e.output.find("mean") != std::string::npos);
}

TEST_CASE("eval of a map against itself reports zero error", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "sphere.cfg", sphere_config());
    REQUIRE(run_cli("render --config " + (kWork / "sphere.cfg").string() + " --out " +
                    (kWork / "ds_self").string()).code == 0);
    const std::string gt = (kWork / "ds_self/normals_gt.tf").string();
    const auto e = run_cli("eval --est " + gt + " --gt " + gt + " --out " +
                           (kWork / "eval_self").string());
    REQUIRE(e.code == 0);
    CHECK(e.output.find("mean 0 ") != std::string::npos);

    std::ifstream report(kWork / "eval_self/report.txt");
    std::string text((std::istreambuf_iterator<char>(report)), std::istreambuf_iterator<char>());
    CHECK(text.find("mean 0\n") != std::string::npos);
    CHECK(text.find("max 0\n") != std::string::npos);
}

TEST_CASE("baseline command reports accuracy on the rendered sphere", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "sphere_lam.cfg",
               "scene = sphere\nsize = 32\ncategory = diffuse\nsuperpixels = 4\n"
               "lights = 60\nelevation_min = 45\nseed = 6\n");
    REQUIRE(run_cli("render --config " + (kWork / "sphere_lam.cfg").string() + " --out " +
                    (kWork / "ds_lam").string()).code == 0);
    const auto b = run_cli("baseline " + (kWork / "ds_lam").string() + " --out " +
                           (kWork / "base").string() + " --jobs 1");
    INFO(b.output);
    REQUIRE(b.code == 0);
    REQUIRE(fs::exists(kWork / "base/normals_baseline.tf"));
    REQUIRE(fs::exists(kWork / "base/albedo.tf"));
    CHECK(b.output.find("mean angular error") != std::string::npos);
}

TEST_CASE("missing inputs fail with data errors", "[cli]") {
    fs::create_directories(kWork);
    const auto r = run_cli("predict " + (kWork / "no_such_dir").string() +
                           " --model nothing.psm --out " + (kWork / "x").string());
    CHECK(r.code == 2);

    write_file(kWork / "train.cfg", tiny_train_config());
    const auto t = run_cli("train " + (kWork / "no_such_dir").string() + " --val " +
                           (kWork / "also_missing").string() + " --out " +
                           (kWork / "m.psm").string());
    CHECK(t.code == 2);

    const auto e = run_cli("eval --est nope.tf --gt nada.tf --out " + (kWork / "y").string());
    CHECK(e.code == 2);
}

TEST_CASE("image and light count mismatches are rejected", "[cli]") {
    fs::create_directories(kWork);
    write_file(kWork / "sphere.cfg", sphere_config());
    REQUIRE(run_cli("render --config " + (kWork / "sphere.cfg").string() + " --out " +
                    (kWork / "ds_mismatch").string()).code == 0);
    // truncate lights.txt (and intensities in lockstep) to break the pairing
    std::ifstream in(kWork / "ds_mismatch/lights.txt");
    std::string first;
    std::getline(in, first);
    in.close();
    write_file(kWork / "ds_mismatch/lights.txt", first + "\n");
    write_file(kWork / "ds_mismatch/intensities.txt", "1\n");
    const auto r = run_cli("predict " + (kWork / "ds_mismatch").string() +
                           " --model whatever.psm --out " + (kWork / "z").string());
    CHECK(r.code == 2);
    CHECK(r.output.find("does not match") != std::string::npos);
}
