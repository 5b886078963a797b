#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <utility>

#include "flatcad/meshing.hpp"
#include "flatcad/shapes.hpp"

using namespace flatcad;

namespace {

long euler_characteristic(const TriangleMesh& m) {
    std::set<std::pair<int, int>> edges;
    for (const auto& t : m.triangles) {
        for (int e = 0; e < 3; ++e) {
            int a = t[static_cast<std::size_t>(e)];
            int b = t[static_cast<std::size_t>((e + 1) % 3)];
            if (a > b) std::swap(a, b);
            edges.insert({a, b});
        }
    }
    return static_cast<long>(m.vertices.size()) - static_cast<long>(edges.size()) +
           static_cast<long>(m.triangles.size());
}

struct ConstantField {
    Real c;
    Real value(const Vec3&) const { return c; }
};

}  // namespace

TEST_CASE("constant field yields an empty mesh", "[meshing]") {
    const TriangleMesh m = marching_cubes(ConstantField{1.0}, 16);
    CHECK(m.empty());
    CHECK(m.vertices.empty());
}

TEST_CASE("resolution validation", "[meshing]") {
    CHECK_THROWS_AS(marching_cubes(ConstantField{1.0}, 4), ConfigError);
}

TEST_CASE("sphere mesh: closed, oriented, on the level set", "[meshing]") {
    const Sphere sphere(0.5);
    const TriangleMesh m = marching_cubes(sphere, 64);
    REQUIRE(!m.empty());
    CHECK(euler_characteristic(m) == 2);

    const Real cell_diag = std::sqrt(3.0) * 2.0 / 64;
    for (const Vec3& v : m.vertices) CHECK(std::abs(sphere.value(v)) <= cell_diag);

    // no degenerate triangles, consistent outward orientation
    long oriented = 0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tri = m.triangles[t];
        CHECK(tri[0] != tri[1]);
        CHECK(tri[1] != tri[2]);
        CHECK(tri[0] != tri[2]);
        const Vec3 centroid = (m.vertices[static_cast<std::size_t>(tri[0])] +
                               m.vertices[static_cast<std::size_t>(tri[1])] +
                               m.vertices[static_cast<std::size_t>(tri[2])]) /
                              3.0;
        const auto [f, g] = sphere.value_and_gradient(centroid);
        (void)f;
        if (dot(triangle_normal(m, t), g) > 0) ++oriented;
    }
    CHECK(static_cast<Real>(oriented) > 0.9 * static_cast<Real>(m.triangles.size()));
}

TEST_CASE("doubling resolution tightens the level-set residual", "[meshing]") {
    const Sphere sphere(0.5);
    auto max_residual = [&](int res) {
        const TriangleMesh m = marching_cubes(sphere, res);
        Real mx = 0;
        for (const Vec3& v : m.vertices) mx = std::max(mx, std::abs(sphere.value(v)));
        return mx;
    };
    const Real r64 = max_residual(64);
    const Real r128 = max_residual(128);
    CHECK(r128 * 1.5 <= r64);
}

TEST_CASE("torus topology", "[meshing]") {
    const Torus torus(0.6, 0.2);
    const TriangleMesh m = marching_cubes(torus, 96);
    REQUIRE(!m.empty());
    CHECK(euler_characteristic(m) == 0);
}

TEST_CASE("obj round trip", "[meshing][io]") {
    namespace fs = std::filesystem;
    TriangleMesh tetra;
    tetra.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    tetra.triangles = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    const std::string path = (fs::temp_directory_path() / "flatcad_tetra.obj").string();
    export_mesh(tetra, path, MeshFormat::OBJ);
    const TriangleMesh back = read_mesh_file(path);
    REQUIRE(back.vertices.size() == 4);
    REQUIRE(back.triangles.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(norm(back.vertices[i] - tetra.vertices[i]) == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(back.triangles[i] == tetra.triangles[i]);
    std::remove(path.c_str());
}

TEST_CASE("empty mesh exports are valid files", "[meshing][io]") {
    namespace fs = std::filesystem;
    TriangleMesh empty;
    const std::string obj = (fs::temp_directory_path() / "flatcad_empty.obj").string();
    const std::string ply = (fs::temp_directory_path() / "flatcad_empty.ply").string();
    export_mesh(empty, obj, MeshFormat::OBJ);
    export_mesh(empty, ply, MeshFormat::PLY);
    CHECK(read_mesh_file(obj).vertices.empty());
    CHECK(read_mesh_file(ply).vertices.empty());
    std::remove(obj.c_str());
    std::remove(ply.c_str());
}

TEST_CASE("ply round trips with the quality channel, ascii and binary", "[meshing][io]") {
    namespace fs = std::filesystem;
    const Sphere sphere(0.4);
    TriangleMesh m = marching_cubes(sphere, 16);
    m.scalar.resize(m.vertices.size());
    for (std::size_t i = 0; i < m.scalar.size(); ++i) m.scalar[i] = static_cast<Real>(i) * 0.5;

    for (MeshFormat fmt : {MeshFormat::PLY, MeshFormat::PLYBinary}) {
        const std::string path = (fs::temp_directory_path() / "flatcad_quality.ply").string();
        export_mesh(m, path, fmt);
        const TriangleMesh back = read_mesh_file(path);
        REQUIRE(back.vertices.size() == m.vertices.size());
        REQUIRE(back.scalar.size() == m.vertices.size());
        REQUIRE(back.triangles.size() == m.triangles.size());
        for (std::size_t i = 0; i < m.vertices.size(); ++i) {
            CHECK(norm(back.vertices[i] - m.vertices[i]) == 0.0);
            CHECK(back.scalar[i] == m.scalar[i]);
        }
        std::remove(path.c_str());
    }
}

TEST_CASE("export applies the inverse transform", "[meshing][io]") {
    namespace fs = std::filesystem;
    TriangleMesh m;
    m.vertices = {{0.9, 0, 0}, {0, 0.9, 0}, {0, 0, 0.9}};
    m.triangles = {{0, 1, 2}};
    const std::string path = (fs::temp_directory_path() / "flatcad_denorm.obj").string();
    const Vec3 center{1, 2, 3};
    const Real scale = 0.45;
    export_mesh(m, path, MeshFormat::OBJ, center, scale);
    const TriangleMesh back = read_mesh_file(path);
    CHECK(norm(back.vertices[0] - Vec3{3, 2, 3}) < 1e-12);  // 0.9/0.45 + 1
    std::remove(path.c_str());
}

TEST_CASE("mesh sampling is area uniform and on the faces", "[meshing]") {
    // two triangles with a 9:1 area ratio
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
    m.triangles = {{0, 1, 2}, {3, 4, 5}};
    const MeshSamples s = sample_mesh_surface(m, 20000, 1);
    long near_big = 0;
    for (const Vec3& p : s.points)
        if (p.x < 5) ++near_big;
    CHECK(static_cast<Real>(near_big) / 20000 == Catch::Approx(0.9).margin(0.02));
    for (const Vec3& n : s.normals) CHECK(std::abs(n.z) == Catch::Approx(1.0));
}
