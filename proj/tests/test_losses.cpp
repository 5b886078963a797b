#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "flatcad/geometry.hpp"
#include "flatcad/losses.hpp"
#include "flatcad/shapes.hpp"

using namespace flatcad;

TEST_CASE("manifold loss", "[losses]") {
    CHECK(manifold_loss(std::vector<Real>{0, 0, 0}) == 0.0);
    CHECK(manifold_loss(std::vector<Real>{0.1, -0.3}) == Catch::Approx(0.2));
    CHECK(manifold_loss(std::vector<Real>{-0.5}) == 0.5);
    CHECK_THROWS_AS(manifold_loss({}), EmptyBatch);
}

TEST_CASE("nonmanifold loss", "[losses]") {
    CHECK(nonmanifold_loss(std::vector<Real>{0}, 100) == 1.0);
    CHECK(nonmanifold_loss(std::vector<Real>{0.01}, 100) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(nonmanifold_loss(std::vector<Real>{10}, 100) < 1e-300);
    CHECK_THROWS_AS(nonmanifold_loss({}, 100), EmptyBatch);
    // strictly decreasing in |value|
    Real prev = 2;
    for (Real v : {0.0, 0.001, 0.01, 0.1, 1.0}) {
        const Real cur = nonmanifold_loss(std::vector<Real>{v}, 100);
        CHECK(cur < prev);
        CHECK(cur == nonmanifold_loss(std::vector<Real>{-v}, 100));
        prev = cur;
    }
}

TEST_CASE("eikonal loss", "[losses]") {
    CHECK(eikonal_loss(std::vector<Real>{1, 1, 1}) == 0.0);
    CHECK(eikonal_loss(std::vector<Real>{0}) == 1.0);
    CHECK(eikonal_loss(std::vector<Real>{0.9, 1.1}) == Catch::Approx(0.01));
    CHECK_THROWS_AS(eikonal_loss({}), EmptyBatch);
}

TEST_CASE("proxy loss", "[losses]") {
    CHECK(proxy_loss(std::vector<Real>{0, 0}) == 0.0);
    CHECK(proxy_loss(std::vector<Real>{0.25, -0.25}) == 0.25);
    CHECK_THROWS_AS(proxy_loss({}), EmptyBatch);
    // sign-flip invariance
    const std::vector<Real> vals{0.1, -0.2, 0.05, -0.4};
    std::vector<Real> flipped;
    for (Real v : vals) flipped.push_back(-v);
    CHECK(proxy_loss(vals) == proxy_loss(flipped));
    CHECK(proxy_loss_squared(vals) == proxy_loss_squared(flipped));

    // sphere shell samples are umbilic: the proxy vanishes
    const Sphere sphere(0.7);
    Rng rng = make_engine(17);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    std::uniform_real_distribution<Real> th(0.0, 2 * std::numbers::pi);
    std::vector<Real> s12;
    for (int i = 0; i < 200; ++i) {
        const Vec3 dir = normalize({gauss(rng), gauss(rng), gauss(rng)});
        s12.push_back(s12_autodiff(sphere, dir * (0.7 + 0.05 * gauss(rng)), th(rng)));
    }
    CHECK(proxy_loss(s12) < 1e-6);
}

TEST_CASE("gauss loss", "[losses]") {
    CHECK(gauss_loss(std::vector<Real>{1, -1}) == 1.0);
    CHECK_THROWS_AS(gauss_loss({}), EmptyBatch);

    const CylinderZ cyl(0.5);
    Rng rng = make_engine(18);
    std::uniform_real_distribution<Real> ang(0.0, 2 * std::numbers::pi);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    std::vector<Real> ks;
    for (int i = 0; i < 200; ++i) {
        const Real phi = ang(rng);
        const Real rho = 0.5 + 0.03 * gauss(rng);
        ks.push_back(gaussian_curvature(cyl, {rho * std::cos(phi), rho * std::sin(phi), gauss(rng)}));
    }
    CHECK(gauss_loss(ks) < 1e-10);

    const Sphere unit(1.0);
    ks.clear();
    for (int i = 0; i < 200; ++i) {
        const Vec3 dir = normalize({gauss(rng), gauss(rng), gauss(rng)});
        ks.push_back(gaussian_curvature(unit, dir));
    }
    CHECK(gauss_loss(ks) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("total loss assembly", "[losses]") {
    LossWeights w;  // defaults: 7000/600/50/10, gauss off
    const LossBreakdown b = total_loss(1, 1, 1, 1, 0, w);
    CHECK(b.total == Catch::Approx(7660.0));

    const LossBreakdown z = total_loss(0, 0, 0, 0, 0, w);
    CHECK(z.total == 0.0);

    LossWeights wg;
    wg.w_proxy = 0;
    wg.w_gauss = 10;
    const LossBreakdown g = total_loss(0, 0, 0, 0, 1, wg);
    CHECK(g.total == 10.0);

    LossWeights bad;
    bad.w_proxy = 1;
    bad.w_gauss = 1;
    CHECK_THROWS_AS(total_loss(0, 0, 0, 0, 0, bad), ConfigError);

    // non-negativity for random non-negative components
    Rng rng = make_engine(19);
    std::uniform_real_distribution<Real> u(0.0, 2.0);
    for (int t = 0; t < 50; ++t) {
        const LossBreakdown r = total_loss(u(rng), u(rng), u(rng), u(rng), 0, w);
        CHECK(r.total >= 0);
    }
}

TEST_CASE("mean proxy over theta approaches the absolute-gap law", "[losses]") {
    // cylinder: E[|S12|] = |k2 - k1| / pi
    const CylinderZ cyl(2.0);
    Rng rng = make_engine(20);
    std::uniform_real_distribution<Real> th(0.0, 2 * std::numbers::pi);
    std::vector<Real> s12;
    for (int i = 0; i < 40000; ++i) s12.push_back(s12_autodiff(cyl, {2, 0, 0}, th(rng)));
    CHECK(proxy_loss(s12) == Catch::Approx(0.5 / std::numbers::pi).epsilon(0.02));
}
