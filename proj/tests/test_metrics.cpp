#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flatcad/metrics.hpp"
#include "flatcad/shapes.hpp"

using namespace flatcad;

namespace {

std::vector<Vec3> random_points(int n, std::uint64_t seed, Real span = 1.0) {
    Rng rng = make_engine(seed, 61);
    std::uniform_real_distribution<Real> u(-span, span);
    std::vector<Vec3> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
}

Real brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    Real sab = 0, sba = 0;
    for (const Vec3& p : a) {
        Real best = std::numeric_limits<Real>::max();
        for (const Vec3& q : b) best = std::min(best, norm(p - q));
        sab += best;
    }
    for (const Vec3& q : b) {
        Real best = std::numeric_limits<Real>::max();
        for (const Vec3& p : a) best = std::min(best, norm(p - q));
        sba += best;
    }
    return 0.5 * (sab / static_cast<Real>(a.size()) + sba / static_cast<Real>(b.size()));
}

}  // namespace

TEST_CASE("chamfer basics", "[metrics]") {
    const auto a = random_points(200, 1);
    CHECK(chamfer_l1(a, a) == 0.0);
    CHECK(chamfer_l1(std::vector<Vec3>{{0, 0, 0}}, std::vector<Vec3>{{0.001, 0, 0}}) ==
          Catch::Approx(0.001));
    CHECK_THROWS_AS(chamfer_l1({}, a), EmptySet);
}

TEST_CASE("chamfer matches brute force and is symmetric", "[metrics]") {
    const auto a = random_points(500, 2);
    const auto b = random_points(500, 3);
    const Real cd = chamfer_l1(a, b);
    CHECK(cd == brute_chamfer(a, b));
    CHECK(cd == chamfer_l1(b, a));
}

TEST_CASE("f1 score", "[metrics]") {
    const auto gt = random_points(300, 4);
    CHECK(f1_score(gt, gt, 5e-3) == 1.0);

    std::vector<Vec3> far;
    for (const Vec3& p : gt) far.push_back(p + Vec3{10, 0, 0});
    CHECK(f1_score(far, gt, 5e-3) == 0.0);

    // half of pred within tau, all gt covered: P = 0.5, R = 1, F1 = 2/3
    std::vector<Vec3> pred = gt;
    for (std::size_t i = 0; i < gt.size(); ++i) pred.push_back(gt[i] + Vec3{10, 0, 0});
    CHECK(f1_score(pred, gt, 5e-3) == Catch::Approx(2.0 / 3.0));

    // non-increasing as tau decreases
    const auto noisy = random_points(300, 5);
    Real prev = 1.1;
    for (Real tau : {0.5, 0.2, 0.1, 0.05, 0.01}) {
        const Real f1 = f1_score(noisy, gt, tau);
        CHECK(f1 <= prev);
        prev = f1;
    }
}

TEST_CASE("f1 matches brute force", "[metrics]") {
    const auto pred = random_points(400, 6, 0.5);
    const auto gt = random_points(500, 7, 0.5);
    const Real tau = 0.1;
    std::size_t hp = 0, hg = 0;
    for (const Vec3& p : pred) {
        Real best = std::numeric_limits<Real>::max();
        for (const Vec3& q : gt) best = std::min(best, norm(p - q));
        if (best <= tau) ++hp;
    }
    for (const Vec3& q : gt) {
        Real best = std::numeric_limits<Real>::max();
        for (const Vec3& p : pred) best = std::min(best, norm(p - q));
        if (best <= tau) ++hg;
    }
    const Real precision = static_cast<Real>(hp) / 400;
    const Real recall = static_cast<Real>(hg) / 500;
    const Real expected = precision + recall == 0 ? 0 : 2 * precision * recall / (precision + recall);
    CHECK(f1_score(pred, gt, tau) == expected);
}

TEST_CASE("normal consistency", "[metrics]") {
    const auto set = sample_surface(Sphere(0.5), 400, 8);
    CHECK(normal_consistency(set.points, set.normals, set.points, set.normals) ==
          Catch::Approx(1.0));

    // flipped normals on one side: unsigned cosine ignores orientation
    std::vector<Vec3> flipped;
    for (const Vec3& n : set.normals) flipped.push_back(-n);
    CHECK(normal_consistency(set.points, set.normals, set.points, flipped) == Catch::Approx(1.0));

    // perpendicular normals everywhere
    std::vector<Vec3> a_pts{{0, 0, 0}, {1, 0, 0}};
    std::vector<Vec3> a_nrm{{0, 0, 1}, {0, 0, 1}};
    std::vector<Vec3> b_nrm{{1, 0, 0}, {0, 1, 0}};
    CHECK(normal_consistency(a_pts, a_nrm, a_pts, b_nrm) == 0.0);

    CHECK_THROWS_AS(normal_consistency(a_pts, {}, a_pts, b_nrm), MissingNormals);
}

TEST_CASE("hausdorff map", "[metrics]") {
    const Sphere sphere(0.5);
    TriangleMesh mesh = marching_cubes(sphere, 32);
    REQUIRE(!mesh.empty());

    // dense reference from the mesh itself: all distances below the sampling radius
    const MeshSamples dense = sample_mesh_surface(mesh, 60000, 9);
    const Real mx = hausdorff_map(mesh, dense.points);
    REQUIRE(mesh.scalar.size() == mesh.vertices.size());
    CHECK(mx < 0.02);

    // single reference point: scalar is the plain distance per vertex
    const Vec3 ref{2, 0, 0};
    const Real mx1 = hausdorff_map(mesh, std::vector<Vec3>{ref});
    Real expect_max = 0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK(mesh.scalar[i] == norm(mesh.vertices[i] - ref));
        expect_max = std::max(expect_max, mesh.scalar[i]);
    }
    CHECK(mx1 == expect_max);
}
