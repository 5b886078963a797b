#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "flatcad/geometry.hpp"
#include "flatcad/net.hpp"
#include "flatcad/shapes.hpp"
#include "helpers.hpp"

using namespace flatcad;
using namespace flatcad::testing;

namespace {

NetworkParams one_unit_net(Real omega0) {
    // one hidden unit: sin(omega0 * x.x), head weight 1, all biases 0
    NetworkParams p;
    p.omega0 = omega0;
    Layer l1{3, 1, {1, 0, 0}, {0}};
    Layer head{1, 1, {1}, {0}};
    p.layers = {l1, head};
    return p;
}

NetworkParams zero_net(int depth, int width, Real omega0, Real final_bias) {
    NetworkParams p = init_siren(depth, width, omega0, 0);
    for (auto& L : p.layers) {
        std::fill(L.w.begin(), L.w.end(), 0.0);
        std::fill(L.b.begin(), L.b.end(), 0.0);
    }
    p.layers.back().b[0] = final_bias;
    return p;
}

}  // namespace

TEST_CASE("init_siren shapes and determinism", "[net]") {
    const NetworkParams p = init_siren(4, 256, 30, 1);
    REQUIRE(p.layers.size() == 5);
    CHECK(p.layers[0].in == 3);
    CHECK(p.layers[0].out == 256);
    for (int l = 1; l < 4; ++l) {
        CHECK(p.layers[static_cast<std::size_t>(l)].in == 256);
        CHECK(p.layers[static_cast<std::size_t>(l)].out == 256);
    }
    CHECK(p.layers[4].in == 256);
    CHECK(p.layers[4].out == 1);
    CHECK_NOTHROW(check_shapes(p));

    const NetworkParams q = init_siren(4, 256, 30, 1);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(p.layers[l].w == q.layers[l].w);
        CHECK(p.layers[l].b == q.layers[l].b);
    }

    const NetworkParams r = init_siren(1, 8, 30, 7);
    for (Real v : r.layers[0].w) {
        CHECK(v >= -1.0 / 3);
        CHECK(v <= 1.0 / 3);
    }
    const Real bound = std::sqrt(6.0 / 8) / 30;
    for (Real v : r.layers[1].w) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
}

TEST_CASE("forward on hand-checkable nets", "[net]") {
    const NetworkParams c = zero_net(2, 4, 30, 0.5);
    CHECK(forward(c, {0.1, -2, 7}) == 0.5);
    CHECK(forward(c, {0, 0, 0}) == 0.5);

    const NetworkParams p = one_unit_net(1.0);
    CHECK(forward(p, {0, 0, 0}) == 0.0);
    CHECK(forward(p, {std::numbers::pi / 2, 0, 0}) == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("forward_with_record consistency", "[net]") {
    const NetworkParams p = init_siren(3, 16, 30, 3);
    const Vec3 x{0.2, -0.4, 0.7};
    const auto [f, rec] = forward_with_record(p, x);
    CHECK(f == forward(p, x));
    CHECK(rec.layer_count() == p.depth() + 1);

    // zero-weight net with omega0 = 1: hidden activations equal sin(bias)
    NetworkParams z = init_siren(2, 4, 1.0, 0);
    for (auto& L : z.layers) std::fill(L.w.begin(), L.w.end(), 0.0);
    z.layers[0].b = {0.3, -0.1, 0.9, 0.0};
    const auto [fz, rz] = forward_with_record(z, {5, 6, 7});
    (void)fz;
    for (int k = 0; k < 4; ++k)
        CHECK(rz.a[1][static_cast<std::size_t>(k)] ==
              Catch::Approx(std::sin(z.layers[0].b[static_cast<std::size_t>(k)])).margin(1e-15));
}

TEST_CASE("input gradient on hand-checkable nets", "[net]") {
    const NetworkParams c = zero_net(2, 4, 30, 0.5);
    const auto [fc, gc] = input_gradient(c, {1, 2, 3});
    CHECK(fc == 0.5);
    CHECK(norm(gc) == 0.0);

    const Real omega0 = 30;
    const NetworkParams p = one_unit_net(omega0);
    const auto [f0, g0] = input_gradient(p, {0, 0, 0});
    CHECK(f0 == 0.0);
    CHECK(g0.x == Catch::Approx(omega0).epsilon(1e-15));
    CHECK(g0.y == 0.0);
    CHECK(g0.z == 0.0);
}

TEST_CASE("input gradient matches central differences", "[net]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const NetworkParams p = init_siren(4, 32, 30, seed);
        Rng rng = make_engine(seed, 3);
        std::uniform_real_distribution<Real> u(-0.8, 0.8);
        const Vec3 x{u(rng), u(rng), u(rng)};
        const auto [f, g] = input_gradient(p, x);
        CHECK(f == forward(p, x));
        const Net net(p);
        const Vec3 gfd = fd_gradient(net, x, 1e-5);
        REQUIRE(norm(g) > 1e-6);
        CHECK(norm(g - gfd) / norm(g) < 1e-6);
    }
}

TEST_CASE("hvp basics", "[net]") {
    // constant net: zero Hessian
    const NetworkParams c = zero_net(2, 4, 30, 0.5);
    CHECK(norm(hvp(c, {0.3, 0.1, -0.7}, {1, 2, 3})) == 0.0);

    // quadratic harness through the same interface: Hv = Av by definition
    QuadraticField q;
    q.A = {2, 1, 0, -1, 0.5, 3};
    const Vec3 v{0.2, -1, 0.4};
    CHECK(norm(q.hvp({9, 9, 9}, v) - q.A.apply(v)) == 0.0);
}

TEST_CASE("hvp matches finite differences of the gradient", "[net]") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const NetworkParams p = init_siren(4, 32, 30, seed);
        Rng rng = make_engine(seed, 4);
        std::uniform_real_distribution<Real> u(-0.8, 0.8);
        const Vec3 x{u(rng), u(rng), u(rng)};
        const Vec3 v = normalize({u(rng) + 0.01, u(rng), u(rng)});
        const Vec3 hv = hvp(p, x, v);
        const Vec3 hv_fd = fd_hvp(p, x, v, 1e-4);
        REQUIRE(norm(hv) > 1e-8);
        CHECK(norm(hv - hv_fd) / norm(hv) < 1e-5);
    }
}

TEST_CASE("hvp linearity and Hessian symmetry", "[net]") {
    const NetworkParams p = init_siren(4, 24, 30, 55);
    Rng rng = make_engine(56);
    std::uniform_real_distribution<Real> u(-0.8, 0.8);
    for (int t = 0; t < 20; ++t) {
        const Vec3 x{u(rng), u(rng), u(rng)};
        const Vec3 a{u(rng), u(rng), u(rng)};
        const Vec3 b{u(rng), u(rng), u(rng)};
        const Real al = u(rng), be = u(rng);
        const Vec3 lhs = hvp(p, x, a * al + b * be);
        const Vec3 rhs = hvp(p, x, a) * al + hvp(p, x, b) * be;
        CHECK(norm(lhs - rhs) < 1e-10 * std::max(Real(1), norm(lhs)));
        const Real uhv = dot(a, hvp(p, x, b));
        const Real vhu = dot(b, hvp(p, x, a));
        CHECK(std::abs(uhv - vhu) < 1e-10 * std::max(Real(1), std::abs(uhv)));
    }
}

TEST_CASE("full hessian consistent with hvp", "[net]") {
    const NetworkParams p = init_siren(4, 24, 30, 77);
    Rng rng = make_engine(78);
    std::uniform_real_distribution<Real> u(-0.8, 0.8);
    for (int t = 0; t < 10; ++t) {
        const Vec3 x{u(rng), u(rng), u(rng)};
        const Mat3Sym h = full_hessian(p, x);
        const Vec3 v{u(rng), u(rng), u(rng)};
        const Vec3 dir1 = h.apply(v);
        const Vec3 dir2 = hvp(p, x, v);
        CHECK(norm(dir1 - dir2) < 1e-10 * std::max(Real(1), norm(dir2)));
    }
    // affine (constant) net: zero matrix; f = xy harness: unit off-diagonal
    const NetworkParams c = zero_net(2, 4, 30, 0.5);
    const Mat3Sym hc = full_hessian(c, {1, 1, 1});
    CHECK(std::abs(hc.xx) + std::abs(hc.xy) + std::abs(hc.xz) + std::abs(hc.yy) +
              std::abs(hc.yz) + std::abs(hc.zz) ==
          0.0);
}

namespace {

BatchSpec make_batch(Route route, std::uint64_t seed, bool squared = false) {
    BatchSpec batch;
    batch.route = route;
    batch.fd_step = 1e-3;
    batch.proxy_squared = squared;
    batch.weights.w_dm = 7000;
    batch.weights.w_dnm = 600;
    batch.weights.w_eik = 50;
    if (route == Route::GaussBaseline) {
        batch.weights.w_proxy = 0;
        batch.weights.w_gauss = 10;
    } else {
        batch.weights.w_proxy = 10;
        batch.weights.w_gauss = 0;
    }
    Rng rng = make_engine(seed, 41);
    std::uniform_real_distribution<Real> u(-0.9, 0.9);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (int i = 0; i < 24; ++i) {
        const Vec3 dir = normalize({gauss(rng), gauss(rng), gauss(rng)});
        batch.manifold.push_back(dir * 0.5);
    }
    for (int i = 0; i < 24; ++i) batch.freespace.push_back({u(rng), u(rng), u(rng)});
    std::uniform_real_distribution<Real> th(0.0, 2 * std::numbers::pi);
    for (int i = 0; i < 16; ++i) {
        const Vec3 dir = normalize({gauss(rng), gauss(rng), gauss(rng)});
        ShellSample sp;
        sp.x = dir * (0.5 + 0.02 * gauss(rng));
        const auto [u0, v0] = base_frame(dir);
        const auto [uu, vv] = rotate_frame(u0, v0, th(rng));
        sp.u = uu;
        sp.v = vv;
        batch.shell.push_back(sp);
    }
    return batch;
}

void directional_check(Route route, bool squared, Real tol) {
    const NetworkParams p = init_siren(4, 16, 30, 2025);
    const BatchSpec batch = make_batch(route, 9, squared);
    const auto [bd, grad] = loss_parameter_gradient(p, batch);
    CHECK(std::isfinite(bd.total));

    const ParamGradient dir = random_direction(p, 31337);
    const Real gd = dot_params(grad, dir);
    const Real eps = 1e-5;
    NetworkParams plus = p, minus = p;
    axpy_params(plus, dir, eps);
    axpy_params(minus, dir, -eps);
    const Real fp = loss_value(plus, batch);
    const Real fm = loss_value(minus, batch);
    const Real fd = (fp - fm) / (2 * eps);
    INFO("route " << route_name(route) << " analytic " << gd << " fd " << fd);
    REQUIRE(std::abs(fd) > 1e-12);
    CHECK(std::abs(gd - fd) / std::max(Real(1e-10), std::abs(fd)) < tol);
}

}  // namespace

TEST_CASE("parameter gradient matches directional differences", "[net][grad]") {
    directional_check(Route::ProxyFD, false, 1e-4);
    directional_check(Route::ProxyAD, false, 1e-4);
    directional_check(Route::ProxyAD, true, 1e-4);
    directional_check(Route::GaussBaseline, false, 1e-4);
    directional_check(Route::None, false, 1e-4);
}

TEST_CASE("loss value agrees with the loss reductions", "[net][grad]") {
    const NetworkParams p = init_siren(3, 16, 30, 11);
    const BatchSpec batch = make_batch(Route::ProxyAD, 10);
    const auto [bd, grad] = loss_parameter_gradient(p, batch);
    (void)grad;

    std::vector<Real> fvals, gnorms, dnmvals, s12vals;
    const Net net(p);
    for (const Vec3& x : batch.manifold) fvals.push_back(net.value(x));
    for (const Vec3& x : batch.freespace) {
        const auto [f, g] = net.value_and_gradient(x);
        dnmvals.push_back(f);
        gnorms.push_back(norm(g));
    }
    for (const ShellSample& sp : batch.shell) {
        const auto [f, g] = net.value_and_gradient(sp.x);
        (void)f;
        s12vals.push_back(dot(sp.u, net.hvp(sp.x, sp.v)) / norm(g));
    }
    CHECK(bd.dm == Catch::Approx(manifold_loss(fvals)).epsilon(1e-12));
    CHECK(bd.dnm == Catch::Approx(nonmanifold_loss(dnmvals, batch.weights.alpha)).epsilon(1e-12));
    CHECK(bd.eik == Catch::Approx(eikonal_loss(gnorms)).epsilon(1e-12));
    CHECK(bd.proxy == Catch::Approx(proxy_loss(s12vals)).epsilon(1e-10));
    const LossBreakdown ref = total_loss(bd.dm, bd.dnm, bd.eik, bd.proxy, 0, batch.weights);
    CHECK(bd.total == Catch::Approx(ref.total).epsilon(1e-12));
}

TEST_CASE("subgradient of |f| at zero is zero", "[net][grad]") {
    NetworkParams p = zero_net(2, 4, 30, 0.0);  // f == 0 everywhere
    BatchSpec batch;
    batch.route = Route::None;
    batch.weights.w_dm = 1;
    batch.weights.w_dnm = 0;
    batch.weights.w_eik = 0;
    batch.weights.w_proxy = 0;
    batch.manifold.push_back({0.1, 0.2, 0.3});
    batch.freespace.push_back({0.5, 0.5, 0.5});
    const auto [bd, grad] = loss_parameter_gradient(p, batch);
    CHECK(bd.total == 0.0);
    for (const auto& L : grad.layers) {
        for (Real v : L.w) CHECK(v == 0.0);
        for (Real v : L.b) CHECK(v == 0.0);
    }
}

TEST_CASE("non-finite loss raises", "[net][grad]") {
    NetworkParams p = zero_net(2, 4, 30, 1e10);
    BatchSpec batch;
    batch.route = Route::None;
    batch.weights.w_dm = 1e308;  // 1e308 * 1e10 overflows
    batch.weights.w_dnm = 0;
    batch.weights.w_eik = 0;
    batch.weights.w_proxy = 0;
    batch.manifold.push_back({0, 0, 0});
    batch.freespace.push_back({0.5, 0.5, 0.5});
    CHECK_THROWS_AS(loss_parameter_gradient(p, batch), NonFiniteLoss);
}

TEST_CASE("checkpoint round trip is bitwise", "[net][io]") {
    const NetworkParams p = init_siren(3, 12, 30, 321);
    const std::string path = (std::filesystem::temp_directory_path() / "flatcad_ckpt_test.bin").string();
    save_checkpoint(p, path);
    const NetworkParams q = load_checkpoint(path);
    CHECK(q.omega0 == p.omega0);
    REQUIRE(q.layers.size() == p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(q.layers[l].w == p.layers[l].w);
        CHECK(q.layers[l].b == p.layers[l].b);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.bin"), IoError);
}
