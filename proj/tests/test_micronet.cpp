#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "psforge/core/rng.hpp"
#include "psforge/micronet/adam.hpp"
#include "psforge/micronet/gradcheck.hpp"
#include "psforge/micronet/layers.hpp"
#include "psforge/micronet/network.hpp"
#include "psforge/micronet/weights_io.hpp"

using namespace psforge;
namespace fs = std::filesystem;

namespace {

double dot_all(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Batch<double> random_batch(int n, int c, int h, int w, uint64_t seed) {
    Batch<double> x(n, c, h, w);
    Rng rng(seed);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    return x;
}

std::vector<size_t> all_indices(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

const NetConfig kTinyNet{32, 4, 4, 8, 16, 0.2};

}  // namespace

TEST_CASE("conv3x3 forward examples", "[micronet]") {
    // all-ones 3x3 input and kernel, valid padding -> single value 9
    Conv2D<double> conv("c", 1, 1, 3, false);
    std::vector<ParamRef<double>> ps;
    conv.collect_params(ps);
    std::fill(ps[0].value->begin(), ps[0].value->end(), 1.0);
    Batch<double> x(1, 1, 3, 3);
    std::fill(x.data.begin(), x.data.end(), 1.0);
    Batch<double> y = conv.forward(x);
    REQUIRE(y.h == 1);
    REQUIRE(y.w == 1);
    CHECK(y.data[0] == 9.0);

    // identity kernel with same padding reproduces the input
    Conv2D<double> ident("i", 1, 1, 3, true);
    std::vector<ParamRef<double>> pi;
    ident.collect_params(pi);
    (*pi[0].value)[4] = 1.0;  // center tap
    Batch<double> xr = random_batch(2, 1, 6, 6, 3);
    Batch<double> yr = ident.forward(xr);
    REQUIRE(yr.data == xr.data);

    // zero kernels with bias b produce a constant map
    Conv2D<double> biased("b", 1, 2, 3, true);
    std::vector<ParamRef<double>> pb;
    biased.collect_params(pb);
    (*pb[1].value)[0] = 0.25;
    (*pb[1].value)[1] = -2.0;
    Batch<double> yb = biased.forward(xr);
    for (int i = 0; i < yb.n; ++i)
        for (int p = 0; p < 36; ++p) {
            REQUIRE(yb.sample(i)[p] == 0.25);
            REQUIRE(yb.sample(i)[36 + p] == -2.0);
        }
}

TEST_CASE("conv backward analytic properties", "[micronet]") {
    Conv2D<double> conv("c", 2, 3, 3, true);
    std::vector<ParamRef<double>> ps;
    conv.collect_params(ps);
    Rng rng(5);
    for (double& v : *ps[0].value) v = rng.uniform(-0.5, 0.5);
    Batch<double> x = random_batch(2, 2, 5, 5, 6);
    conv.forward(x);

    // zero upstream gradient -> all-zero gradients
    Batch<double> zero(2, 3, 5, 5);
    Batch<double> dx = conv.backward(zero);
    for (double v : dx.data) REQUIRE(v == 0.0);
    for (double v : *ps[0].grad) REQUIRE(v == 0.0);
    for (double v : *ps[1].grad) REQUIRE(v == 0.0);

    // bias gradient equals the per-filter sum of the upstream gradient
    Batch<double> up = random_batch(2, 3, 5, 5, 7);
    conv.forward(x);
    conv.backward(up);
    for (int f = 0; f < 3; ++f) {
        double want = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int p = 0; p < 25; ++p) want += up.sample(i)[size_t(f) * 25 + p];
        CHECK((*ps[1].grad)[f] == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("conv gradients match finite differences", "[micronet]") {
    Conv2D<double> conv("c", 2, 3, 3, true);
    std::vector<ParamRef<double>> ps;
    conv.collect_params(ps);
    Rng rng(8);
    for (double& v : *ps[0].value) v = rng.uniform(-0.5, 0.5);
    for (double& v : *ps[1].value) v = rng.uniform(-0.1, 0.1);
    Batch<double> x = random_batch(2, 2, 5, 5, 9);
    Batch<double> upstream = random_batch(2, 3, 5, 5, 10);

    auto phi = [&]() {
        Batch<double> y = conv.forward(x);
        return dot_all(y.data, upstream.data);
    };
    conv.forward(x);
    Batch<double> dx = conv.backward(upstream);

    CHECK(fd_max_rel_error({ps[0].value->data(), ps[0].value->size()}, *ps[0].grad,
                           all_indices(ps[0].value->size()), 1e-5, phi) < 1e-4);
    CHECK(fd_max_rel_error({ps[1].value->data(), ps[1].value->size()}, *ps[1].grad,
                           all_indices(ps[1].value->size()), 1e-5, phi) < 1e-4);
    CHECK(fd_max_rel_error({x.data.data(), x.data.size()}, dx.data,
                           all_indices(x.data.size()), 1e-5, phi) < 1e-4);
}

TEST_CASE("elementwise layer examples", "[micronet]") {
    ReLU<double> relu;
    Batch<double> x(1, 3, 1, 1);
    x.data = {-1.0, 0.0, 2.0};
    Batch<double> y = relu.forward(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0});
    Batch<double> up(1, 3, 1, 1);
    up.data = {5.0, 5.0, 5.0};
    Batch<double> dx = relu.backward(up);
    CHECK(dx.data == std::vector<double>{0.0, 0.0, 5.0});

    AvgPool2<double> pool;
    Batch<double> p(1, 1, 2, 2);
    p.data = {1.0, 2.0, 3.0, 4.0};
    CHECK(pool.forward(p).data[0] == 2.5);
    Batch<double> pup(1, 1, 1, 1);
    pup.data = {1.0};
    CHECK(pool.backward(pup).data == std::vector<double>(4, 0.25));

    double v[3] = {3.0, 4.0, 0.0};
    double out[3];
    l2_normalize(v, out, 3);
    CHECK(out[0] == Catch::Approx(0.6));
    CHECK(out[1] == Catch::Approx(0.8));
    CHECK(out[2] == 0.0);
    double tiny[3] = {1e-13, 0.0, 0.0};
    CHECK_THROWS_AS(l2_normalize(tiny, out, 3), NumericalError);
}

TEST_CASE("dropout", "[micronet]") {
    Dropout<double> drop(0.2);
    Batch<double> x = random_batch(4, 3, 8, 8, 11);

    // inference is the identity
    Batch<double> y = drop.forward(x, RunMode::Infer, 123);
    REQUIRE(y.data == x.data);

    // train mode: zeroed units and 1/(1-p) survivors, deterministic per seed
    Batch<double> t1 = drop.forward(x, RunMode::Train, 123);
    Dropout<double> drop2(0.2);
    Batch<double> t2 = drop2.forward(x, RunMode::Train, 123);
    REQUIRE(t1.data == t2.data);
    size_t zeros = 0;
    for (size_t i = 0; i < t1.data.size(); ++i) {
        if (t1.data[i] == 0.0)
            ++zeros;
        else
            REQUIRE(t1.data[i] == Catch::Approx(x.data[i] / 0.8));
    }
    const double rate = double(zeros) / double(t1.data.size());
    CHECK(rate > 0.12);
    CHECK(rate < 0.28);

    // frozen-mask gradient is exact
    Batch<double> up = random_batch(4, 3, 8, 8, 12);
    auto phi = [&]() {
        Batch<double> z = drop.forward(x, RunMode::Train, 123);
        return dot_all(z.data, up.data);
    };
    drop.forward(x, RunMode::Train, 123);
    Batch<double> dx = drop.backward(up);
    CHECK(fd_max_rel_error({x.data.data(), x.data.size()}, dx.data, all_indices(x.data.size()),
                           1e-5, phi) < 1e-6);
}

TEST_CASE("concat and split", "[micronet]") {
    Batch<double> a = random_batch(2, 3, 4, 4, 13);
    Batch<double> b = random_batch(2, 2, 4, 4, 14);
    Batch<double> y = concat_channels(a, b);
    REQUIRE(y.c == 5);
    auto [a2, b2] = split_channels(y, 3);
    REQUIRE(a2.data == a.data);
    REQUIRE(b2.data == b.data);
}

TEST_CASE("dense layer gradients are exact for a linear map", "[micronet]") {
    Dense<double> dense("d", 6, 4);
    std::vector<ParamRef<double>> ps;
    dense.collect_params(ps);
    Rng rng(15);
    for (double& v : *ps[0].value) v = rng.uniform(-1.0, 1.0);
    for (double& v : *ps[1].value) v = rng.uniform(-1.0, 1.0);
    Batch<double> x = random_batch(3, 6, 1, 1, 16);
    Batch<double> up = random_batch(3, 4, 1, 1, 17);

    auto phi = [&]() {
        Batch<double> y = dense.forward(x);
        return dot_all(y.data, up.data);
    };
    dense.forward(x);
    Batch<double> dx = dense.backward(up);

    CHECK(fd_max_rel_error({ps[0].value->data(), ps[0].value->size()}, *ps[0].grad,
                           all_indices(ps[0].value->size()), 1e-5, phi) < 1e-7);
    CHECK(fd_max_rel_error({ps[1].value->data(), ps[1].value->size()}, *ps[1].grad,
                           all_indices(ps[1].value->size()), 1e-5, phi) < 1e-7);
    CHECK(fd_max_rel_error({x.data.data(), x.data.size()}, dx.data, all_indices(x.data.size()),
                           1e-5, phi) < 1e-7);
}

TEST_CASE("mse loss", "[micronet]") {
    const std::vector<double> a = {0.0, 0.6, 0.8};
    CHECK(mse_loss<double>(a, a) == 0.0);

    const std::vector<double> p = {1.0, 0.0, 0.0};
    const std::vector<double> g = {0.0, 1.0, 0.0};
    CHECK(mse_loss<double>(p, g) == Catch::Approx(2.0 / 3.0));

    // gradient against finite differences
    std::vector<double> pred = {0.3, -0.2, 0.9};
    std::vector<double> grad(3);
    mse_loss<double>(pred, g, grad);
    auto phi = [&]() { return mse_loss<double>(pred, g); };
    CHECK(fd_max_rel_error(pred, grad, all_indices(3), 1e-5, phi) < 1e-9);
}

TEST_CASE("adam steps", "[micronet]") {
    std::vector<double> w = {1.0, -2.0};
    std::vector<double> g = {0.0, 0.0};
    std::vector<ParamRef<double>> ps = {{"w", {2}, &w, &g}};
    AdamState<double> state(ps);

    adam_step(ps, state);
    CHECK(state.t == 1);
    CHECK(w == std::vector<double>{1.0, -2.0});  // zero gradient moves nothing

    g = {1.0, 1.0};
    adam_step(ps, state);
    CHECK(w[0] < 1.0);

    double prev = w[0];
    for (int i = 0; i < 5; ++i) {
        adam_step(ps, state);
        CHECK(w[0] < prev);  // constant positive gradient keeps moving down
        prev = w[0];
    }

    g = {std::nan(""), 0.0};
    CHECK_THROWS_AS(adam_step(ps, state), NumericalError);
}

TEST_CASE("adam first step from a fresh state", "[micronet]") {
    std::vector<double> w = {0.5};
    std::vector<double> g = {1.0};
    std::vector<ParamRef<double>> ps = {{"w", {1}, &w, &g}};
    AdamState<double> state(ps);
    adam_step(ps, state);
    CHECK(std::abs((w[0] - 0.5) + 0.001) < 1e-6);
}

TEST_CASE("network forward contract", "[micronet]") {
    MicroNet<double> net(kTinyNet);
    net.init_weights(21);

    Batch<double> x = random_batch(3, 1, 32, 32, 22);
    for (double& v : x.data) v = std::abs(v);  // map values live in [0,1]
    Batch<double> y = net.forward(x, RunMode::Infer);
    REQUIRE(y.c == 3);
    for (int i = 0; i < 3; ++i) {
        const double* o = y.sample(i);
        REQUIRE(std::abs(std::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) - 1.0) < 1e-6);
    }

    // all-zero map: finite unit output through the l2norm guard
    Batch<double> zero(1, 1, 32, 32);
    Batch<double> yz = net.forward(zero, RunMode::Infer);
    CHECK(yz.data[0] == 0.0);
    CHECK(yz.data[1] == 0.0);
    CHECK(yz.data[2] == 1.0);

    // repeated inference is bit-identical
    Batch<double> y2 = net.forward(x, RunMode::Infer);
    REQUIRE(y2.data == y.data);

    Batch<double> bad(1, 1, 16, 16);
    CHECK_THROWS_AS(net.forward(bad, RunMode::Infer), DataError);
}

TEST_CASE("batched forward equals single-sample forward", "[micronet]") {
    MicroNet<float> net(kTinyNet);
    net.init_weights(23);
    Batch<float> x(4, 1, 32, 32);
    Rng rng(24);
    for (float& v : x.data) v = float(rng.uniform());
    Batch<float> y = net.forward(x, RunMode::Infer);
    for (int i = 0; i < 4; ++i) {
        Batch<float> xi(1, 1, 32, 32);
        std::copy(x.sample(i), x.sample(i) + x.sample_size(), xi.data.begin());
        Batch<float> yi = net.forward(xi, RunMode::Infer);
        for (int k = 0; k < 3; ++k) REQUIRE(yi.data[k] == y.sample(i)[k]);
    }
}

TEST_CASE("model save/load round trip and fingerprint", "[micronet]") {
    const std::string path =
        (fs::temp_directory_path() / "psforge_model_test.psm").string();
    MicroNet<float> net(kTinyNet);
    net.init_weights(31);
    save_model(path, net);

    MicroNet<float> loaded(read_model_config(path));
    load_model(path, loaded);
    for (size_t t = 0; t < net.params().size(); ++t)
        REQUIRE(*net.params()[t].value == *loaded.params()[t].value);

    Batch<float> x(1, 1, 32, 32);
    Rng rng(32);
    for (float& v : x.data) v = float(rng.uniform());
    REQUIRE(net.forward(x, RunMode::Infer).data == loaded.forward(x, RunMode::Infer).data);

    NetConfig other = kTinyNet;
    other.growth = 8;
    MicroNet<float> mismatched(other);
    CHECK_THROWS_AS(load_model(path, mismatched), DataError);
}

TEST_CASE("finite difference check passes and the negative control fails", "[micronet]") {
    MicroNet<double> net(kTinyNet);
    net.init_weights(41);
    Batch<double> x(2, 1, 32, 32);
    Rng rng(42);
    for (double& v : x.data) v = rng.uniform();
    const std::vector<double> gt = {0.0, 0.6, 0.8, 1.0, 0.0, 0.0};

    FdOptions opt;
    opt.samples_per_tensor = 12;
    const FdReport good = finite_diff_check(net, x, gt, opt);
    INFO("max rel err " << good.max_rel_err);
    CHECK(good.max_rel_err < 1e-4);
    REQUIRE(good.rows.size() == net.params().size());

    // sign-flipped backward must be caught
    opt.corrupt_tensor = int(net.params().size()) - 2;  // dense2 weights
    const FdReport bad = finite_diff_check(net, x, gt, opt);
    CHECK(bad.rows[opt.corrupt_tensor].max_rel_err > 1e-1);
}
