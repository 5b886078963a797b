#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flatcad/shapes.hpp"
#include "flatcad/training.hpp"
#include "helpers.hpp"

using namespace flatcad;

namespace {

NetworkParams scalar_net(Real value) {
    // single parameterized scalar in a trivially-shaped net: one hidden unit
    NetworkParams p;
    p.omega0 = 1.0;
    p.layers = {Layer{3, 1, {0, 0, 0}, {0}}, Layer{1, 1, {value}, {0}}};
    return p;
}

PointCloud sphere_cloud(Real radius, int n, std::uint64_t seed) {
    const auto set = sample_surface(Sphere(radius), n, seed);
    return normalize_cloud(set.points, set.normals);
}

TrainConfig desk_config(Route route, int iters) {
    TrainConfig cfg;
    cfg.route = route;
    cfg.depth = 4;
    cfg.width = 32;
    cfg.max_iters = iters;
    cfg.plateau_window = iters;  // effectively off for these short runs
    cfg.eval_every = 100;
    cfg.batch_manifold = 800;
    cfg.batch_freespace = 800;
    cfg.shell_count = 800;
    cfg.checkpoint_every = 0;
    if (route == Route::GaussBaseline) {
        cfg.weights.w_proxy = 0;
        cfg.weights.w_gauss = 10;
    }
    return cfg;
}

}  // namespace

TEST_CASE("adam step hand example", "[training]") {
    // scalar parameter, g = 1, fresh state: the bias-corrected first step is
    // -lr / (1 + eps)
    NetworkParams p = scalar_net(0.25);
    AdamState st = make_adam_state(p);
    ParamGradient g = zeros_like(p);
    g.layers[1].w[0] = 1.0;
    adam_step(p, st, g, 5e-5);
    const Real delta = p.layers[1].w[0] - 0.25;
    CHECK(delta == Catch::Approx(-5e-5 / (1 + 1e-8)).epsilon(1e-12));
    CHECK(st.t == 1);

    // zero gradient leaves parameters unchanged
    NetworkParams q = scalar_net(0.25);
    AdamState st2 = make_adam_state(q);
    adam_step(q, st2, zeros_like(q), 5e-5);
    CHECK(q.layers[1].w[0] == 0.25);

    // shape mismatch is rejected
    NetworkParams other = init_siren(2, 8, 30, 0);
    CHECK_THROWS_AS(adam_step(p, st, zeros_like(other), 5e-5), ShapeMismatch);
}

TEST_CASE("adam trajectories are deterministic", "[training]") {
    auto run = [] {
        NetworkParams p = init_siren(2, 8, 30, 3);
        AdamState st = make_adam_state(p);
        Rng rng = make_engine(4);
        std::normal_distribution<Real> gauss(0.0, 1.0);
        for (int i = 0; i < 50; ++i) {
            ParamGradient g = zeros_like(p);
            for (auto& L : g.layers)
                for (auto& v : L.w) v = gauss(rng);
            adam_step(p, st, g, 1e-3);
        }
        return p;
    };
    const NetworkParams a = run();
    const NetworkParams b = run();
    for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(a.layers[l].w == b.layers[l].w);
}

TEST_CASE("cd proxy estimate", "[training]") {
    // exact sphere SDF through the field interface: samples are fixed points
    const Sphere sphere(0.5);
    const auto set = sample_surface(sphere, 500, 21);
    CHECK(cd_proxy_estimate(sphere, set.points, set.points) < 1e-10);

    // rigid shift of the references shows up as the shift magnitude
    std::vector<Vec3> shifted;
    for (const Vec3& p : set.points) shifted.push_back(p + Vec3{0.001, 0, 0});
    const Real cd = cd_proxy_estimate(sphere, set.points, shifted);
    CHECK(cd == Catch::Approx(0.001).epsilon(0.25));

    CHECK_THROWS_AS(cd_proxy_estimate(sphere, {}, set.points), EmptySet);
}

TEST_CASE("train with zero iterations returns the initial params", "[training]") {
    const PointCloud cloud = sphere_cloud(0.5, 300, 2);
    TrainConfig cfg = desk_config(Route::None, 0);
    const auto [params, history] = train(cfg, cloud);
    CHECK(history.iterations.empty());
    const NetworkParams init = init_siren(cfg.depth, cfg.width, cfg.omega0, cfg.seeds.init);
    for (std::size_t l = 0; l < params.layers.size(); ++l) CHECK(params.layers[l].w == init.layers[l].w);
}

TEST_CASE("training runs are bitwise reproducible", "[training]") {
    const PointCloud cloud = sphere_cloud(0.5, 400, 6);
    TrainConfig cfg = desk_config(Route::ProxyFD, 30);
    cfg.eval_every = 10;
    const auto [p1, h1] = train(cfg, cloud);
    const auto [p2, h2] = train(cfg, cloud);
    REQUIRE(h1.iterations.size() == h2.iterations.size());
    for (std::size_t l = 0; l < p1.layers.size(); ++l) {
        CHECK(p1.layers[l].w == p2.layers[l].w);
        CHECK(p1.layers[l].b == p2.layers[l].b);
    }
    for (std::size_t i = 0; i < h1.iterations.size(); ++i)
        CHECK(h1.iterations[i].loss.total == h2.iterations[i].loss.total);
    CHECK(h1.best_cd == h2.best_cd);
}

TEST_CASE("smoothed loss decreases on a clean sphere cloud", "[training][slow]") {
    const PointCloud cloud = sphere_cloud(0.5, 1200, 8);
    TrainConfig cfg = desk_config(Route::None, 1000);
    cfg.eval_every = 250;
    const auto [params, history] = train(cfg, cloud);
    (void)params;
    REQUIRE(history.iterations.size() == 1000);
    // disjoint 250-iteration window means, non-increasing
    std::vector<Real> windows;
    for (std::size_t start = 0; start + 250 <= history.iterations.size(); start += 250) {
        Real sum = 0;
        for (std::size_t i = start; i < start + 250; ++i) sum += history.iterations[i].loss.total;
        windows.push_back(sum / 250);
    }
    for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1]);
    // best iteration bookkeeping
    CHECK(history.best_iteration >= 0);
    CHECK(history.best_iteration < 1000);
    CHECK(std::isfinite(history.best_cd));
}

TEST_CASE("returned params reproduce the recorded best cd", "[training]") {
    const PointCloud cloud = sphere_cloud(0.5, 400, 9);
    TrainConfig cfg = desk_config(Route::ProxyAD, 60);
    cfg.eval_every = 20;
    const auto [params, history] = train(cfg, cloud);
    REQUIRE(history.best_iteration >= 0);
    const Net net(params);
    const Real cd = cd_proxy_estimate(net, cloud.points, cloud.points);
    CHECK(cd == Catch::Approx(history.best_cd).margin(1e-12));
}

TEST_CASE("early stopping triggers on a plateau", "[training]") {
    const PointCloud cloud = sphere_cloud(0.5, 300, 10);
    TrainConfig cfg = desk_config(Route::None, 400);
    cfg.plateau_window = 60;
    cfg.eval_every = 20;
    cfg.lr = 1e-12;  // effectively frozen: the signal cannot improve
    const auto [params, history] = train(cfg, cloud);
    (void)params;
    CHECK(history.iterations.size() < 400);
    CHECK(history.iterations.size() >= 60);
}

TEST_CASE("non-finite loss reports the iteration", "[training]") {
    const PointCloud cloud = sphere_cloud(0.5, 200, 11);
    TrainConfig cfg = desk_config(Route::None, 50);
    cfg.lr = 1e150;  // Adam caps the step at lr, so this overflows quickly
    try {
        train(cfg, cloud);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
}
