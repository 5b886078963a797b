#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"
#include "flatcad/mc_tables.hpp"
#include "flatcad/parallel.hpp"
#include "flatcad/rng.hpp"

namespace flatcad {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Real> scalar;  // optional per-vertex channel (heat maps)

    bool empty() const { return triangles.empty(); }
};

struct Box {
    Vec3 lo{-1, -1, -1};
    Vec3 hi{1, 1, 1};
};

enum class MeshFormat { OBJ, PLY, PLYBinary };

namespace detail {

template <typename F>
Real field_value(const F& f, const Vec3& x) {
    if constexpr (requires { f.value(x); }) return f.value(x);
    else return f(x);
}

}  // namespace detail

// Marching cubes over a (resolution+1)^3 lattice. Vertices are welded by
// grid-edge identity (each lattice edge interpolates exactly once), so shared
// vertices are exact, not tolerance-matched. A point with f = 0 counts as
// outside; interpolation parameters are clamped away from the lattice corners
// so no two welded vertices coincide. Ambiguous cases use the standard table
// as-is, which can rarely produce small topological artifacts.
//
// Returns an empty mesh when the field has no sign change on the grid.
template <typename F>
TriangleMesh marching_cubes(const F& field, int resolution, const Box& bounds = {}) {
    if (resolution < 8) throw ConfigError("marching_cubes: resolution must be at least 8");
    const int n = resolution + 1;
    const Vec3 ext = bounds.hi - bounds.lo;
    const Vec3 cell{ext.x / resolution, ext.y / resolution, ext.z / resolution};

    std::vector<Real> values(static_cast<std::size_t>(n) * n * n);
    auto at = [n](int i, int j, int k) {
        return (static_cast<std::size_t>(k) * n + j) * n + i;
    };
    // Grid evaluation parallel by z-slab; triangle assembly below is serial
    // and therefore deterministic.
    parallel_chunks(static_cast<std::size_t>(n), kReduceChunks, [&](int, std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < n; ++i) {
                    const Vec3 p{bounds.lo.x + cell.x * static_cast<Real>(i),
                                 bounds.lo.y + cell.y * static_cast<Real>(j),
                                 bounds.lo.z + cell.z * static_cast<Real>(k)};
                    values[at(i, j, static_cast<int>(k))] = detail::field_value(field, p);
                }
            }
        }
    });

    static constexpr int corner_off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                             {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, int> edge_vertex;
    edge_vertex.reserve(1 << 16);

    auto lattice_id = [n](int i, int j, int k) {
        return (static_cast<std::uint64_t>(k) * n + static_cast<std::uint64_t>(j)) * n +
               static_cast<std::uint64_t>(i);
    };

    auto edge_point = [&](int ci, int cj, int ck, int edge) -> int {
        const int* a = corner_off[mc::kEdgeCorners[edge][0]];
        const int* b = corner_off[mc::kEdgeCorners[edge][1]];
        int ai = ci + a[0], aj = cj + a[1], ak = ck + a[2];
        int bi = ci + b[0], bj = cj + b[1], bk = ck + b[2];
        // Canonical direction: lower lattice corner first, so both adjacent
        // cells interpolate identically.
        if (std::tie(bk, bj, bi) < std::tie(ak, aj, ai)) {
            std::swap(ai, bi);
            std::swap(aj, bj);
            std::swap(ak, bk);
        }
        int axis = 0;
        if (bj != aj) axis = 1;
        if (bk != ak) axis = 2;
        const std::uint64_t key = lattice_id(ai, aj, ak) * 3 + static_cast<std::uint64_t>(axis);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        const Real fa = values[at(ai, aj, ak)];
        const Real fb = values[at(bi, bj, bk)];
        Real t = fa / (fa - fb);
        t = std::min(std::max(t, Real(1e-6)), Real(1 - 1e-6));
        const Vec3 pa{bounds.lo.x + cell.x * ai, bounds.lo.y + cell.y * aj, bounds.lo.z + cell.z * ak};
        const Vec3 pb{bounds.lo.x + cell.x * bi, bounds.lo.y + cell.y * bj, bounds.lo.z + cell.z * bk};
        const int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pa + (pb - pa) * t);
        edge_vertex.emplace(key, idx);
        return idx;
    };

    for (int k = 0; k < resolution; ++k) {
        for (int j = 0; j < resolution; ++j) {
            for (int i = 0; i < resolution; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const Real v = values[at(i + corner_off[c][0], j + corner_off[c][1],
                                             k + corner_off[c][2])];
                    if (v < 0) cube |= 1 << c;
                }
                if (mc::kEdgeTable[cube] == 0) continue;
                const int* tri = mc::kTriTable[cube];
                for (; *tri != -1; tri += 3) {
                    const int v0 = edge_point(i, j, k, tri[0]);
                    const int v1 = edge_point(i, j, k, tri[1]);
                    const int v2 = edge_point(i, j, k, tri[2]);
                    mesh.triangles.push_back({v0, v2, v1});
                }
            }
        }
    }
    return mesh;
}

inline Vec3 triangle_normal(const TriangleMesh& m, std::size_t t) {
    const auto& tri = m.triangles[t];
    const Vec3 a = m.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3 b = m.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3 c = m.vertices[static_cast<std::size_t>(tri[2])];
    return cross(b - a, c - a);
}

inline Real triangle_area(const TriangleMesh& m, std::size_t t) {
    return 0.5 * norm(triangle_normal(m, t));
}

// ---------------------------------------------------------------------------
// Export / import. `center` and `scale` give the normalized -> raw inverse
// transform; identity by default.

inline void export_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format,
                        const Vec3& center = {0, 0, 0}, Real scale = 1) {
    auto raw = [&](const Vec3& p) { return p / scale + center; };
    if (format == MeshFormat::OBJ) {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open for writing: " + path);
        out.precision(17);
        for (const Vec3& v : mesh.vertices) {
            const Vec3 p = raw(v);
            out << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
        }
        for (const auto& t : mesh.triangles)
            out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
        if (!out) throw IoError("write failed: " + path);
        return;
    }
    const bool binary = format == MeshFormat::PLYBinary;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const bool with_quality = mesh.scalar.size() == mesh.vertices.size() && !mesh.vertices.empty();
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (with_quality) out << "property double quality\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    if (binary) {
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3 p = raw(mesh.vertices[i]);
            const Real row[4] = {p.x, p.y, p.z, with_quality ? mesh.scalar[i] : 0};
            out.write(reinterpret_cast<const char*>(row), with_quality ? 32 : 24);
        }
        for (const auto& t : mesh.triangles) {
            const unsigned char cnt = 3;
            out.write(reinterpret_cast<const char*>(&cnt), 1);
            const std::int32_t idx[3] = {t[0], t[1], t[2]};
            out.write(reinterpret_cast<const char*>(idx), 12);
        }
    } else {
        out.precision(17);
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const Vec3 p = raw(mesh.vertices[i]);
            out << p.x << ' ' << p.y << ' ' << p.z;
            if (with_quality) out << ' ' << mesh.scalar[i];
            out << '\n';
        }
        for (const auto& t : mesh.triangles)
            out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

inline MeshFormat mesh_format_for_path(const std::string& path, bool binary_ply = true) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".obj") return MeshFormat::OBJ;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
        return binary_ply ? MeshFormat::PLYBinary : MeshFormat::PLY;
    throw ConfigError("mesh path must end in .obj or .ply: " + path);
}

inline TriangleMesh read_obj_mesh(std::istream& in, const std::string& name) {
    TriangleMesh mesh;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok == "v") {
            Real x, y, z;
            if (!(ls >> x >> y >> z)) throw IoError(name + ":" + std::to_string(line_no) + ": bad vertex");
            mesh.vertices.push_back({x, y, z});
        } else if (tok == "f") {
            std::vector<int> ids;
            std::string fld;
            while (ls >> fld) {
                // "i", "i/t", "i/t/n" forms; only the vertex index matters here
                const std::size_t slash = fld.find('/');
                const int id = std::stoi(slash == std::string::npos ? fld : fld.substr(0, slash));
                ids.push_back(id > 0 ? id - 1 : static_cast<int>(mesh.vertices.size()) + id);
            }
            if (ids.size() < 3) throw IoError(name + ":" + std::to_string(line_no) + ": bad face");
            for (std::size_t i = 2; i < ids.size(); ++i)
                mesh.triangles.push_back({ids[0], ids[i - 1], ids[i]});
        }
    }
    return mesh;
}

inline TriangleMesh read_ply_mesh(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw IoError(name + ": not a PLY file");
    bool binary = false;
    long n_vertex = -1, n_face = -1;
    struct Prop {
        std::string name;
        int bytes = 0;
        bool is_float = false;
    };
    std::vector<Prop> vprops;
    int list_count_bytes = 1, list_index_bytes = 4;
    bool in_vertex = false, in_face = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment") continue;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw IoError(name + ": unsupported PLY format");
        } else if (tok == "element") {
            std::string kind;
            long cnt;
            ls >> kind >> cnt;
            in_vertex = kind == "vertex";
            in_face = kind == "face";
            if (in_vertex) n_vertex = cnt;
            if (in_face) n_face = cnt;
        } else if (tok == "property") {
            std::string type;
            ls >> type;
            auto size_of = [&](const std::string& t) -> std::pair<int, bool> {
                if (t == "float" || t == "float32") return {4, true};
                if (t == "double" || t == "float64") return {8, true};
                if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return {1, false};
                if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return {2, false};
                if (t == "int" || t == "uint" || t == "int32" || t == "uint32") return {4, false};
                throw IoError(name + ": unsupported property type " + t);
            };
            if (type == "list") {
                std::string ct, it, pname;
                ls >> ct >> it >> pname;
                list_count_bytes = size_of(ct).first;
                list_index_bytes = size_of(it).first;
            } else if (in_vertex) {
                std::string pname;
                ls >> pname;
                Prop p;
                p.name = pname;
                std::tie(p.bytes, p.is_float) = size_of(type);
                vprops.push_back(p);
            }
        } else if (tok == "end_header") {
            break;
        }
    }
    if (n_vertex < 0) throw IoError(name + ": no vertex element");
    TriangleMesh mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(n_vertex));
    int ix = -1, iy = -1, iz = -1, iq = -1;
    for (std::size_t i = 0; i < vprops.size(); ++i) {
        if (vprops[i].name == "x") ix = static_cast<int>(i);
        else if (vprops[i].name == "y") iy = static_cast<int>(i);
        else if (vprops[i].name == "z") iz = static_cast<int>(i);
        else if (vprops[i].name == "quality") iq = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw IoError(name + ": PLY vertex lacks x/y/z");
    std::vector<Real> row(vprops.size());
    auto read_scalar = [&](int bytes, bool is_float) -> Real {
        unsigned char buf[8];
        in.read(reinterpret_cast<char*>(buf), bytes);
        if (!in) throw IoError(name + ": truncated");
        if (is_float && bytes == 4) {
            float f;
            std::memcpy(&f, buf, 4);
            return f;
        }
        if (is_float) {
            double d;
            std::memcpy(&d, buf, 8);
            return d;
        }
        long v = 0;
        std::memcpy(&v, buf, static_cast<std::size_t>(bytes));
        return static_cast<Real>(v);
    };
    for (long v = 0; v < n_vertex; ++v) {
        if (binary) {
            for (std::size_t i = 0; i < vprops.size(); ++i)
                row[i] = read_scalar(vprops[i].bytes, vprops[i].is_float);
        } else {
            for (std::size_t i = 0; i < vprops.size(); ++i)
                if (!(in >> row[i])) throw IoError(name + ": truncated vertex");
        }
        mesh.vertices.push_back({row[static_cast<std::size_t>(ix)], row[static_cast<std::size_t>(iy)],
                                 row[static_cast<std::size_t>(iz)]});
        if (iq >= 0) mesh.scalar.push_back(row[static_cast<std::size_t>(iq)]);
    }
    for (long f = 0; f < std::max<long>(n_face, 0); ++f) {
        long cnt;
        std::vector<int> ids;
        if (binary) {
            cnt = static_cast<long>(read_scalar(list_count_bytes, false));
            for (long i = 0; i < cnt; ++i)
                ids.push_back(static_cast<int>(read_scalar(list_index_bytes, false)));
        } else {
            if (!(in >> cnt)) throw IoError(name + ": truncated face");
            ids.resize(static_cast<std::size_t>(cnt));
            for (long i = 0; i < cnt; ++i)
                if (!(in >> ids[static_cast<std::size_t>(i)])) throw IoError(name + ": truncated face");
        }
        for (std::size_t i = 2; i < ids.size(); ++i)
            mesh.triangles.push_back({ids[0], ids[i - 1], ids[i]});
    }
    return mesh;
}

inline TriangleMesh read_mesh_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return read_ply_mesh(in, path);
    return read_obj_mesh(in, path);
}

// ---------------------------------------------------------------------------

// Area-uniform random samples from a mesh with per-face normals.
struct MeshSamples {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

inline MeshSamples sample_mesh_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.triangles.empty()) throw EmptySet("sample_mesh_surface: empty mesh");
    std::vector<Real> cum(mesh.triangles.size());
    Real total = 0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        total += triangle_area(mesh, t);
        cum[t] = total;
    }
    if (!(total > 0)) throw EmptySet("sample_mesh_surface: zero total area");
    Rng rng = make_engine(seed, 23);
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    MeshSamples out;
    out.points.reserve(n);
    out.normals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Real pick = unit(rng) * total;
        const std::size_t t = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
        const auto& tri = mesh.triangles[std::min(t, mesh.triangles.size() - 1)];
        const Vec3 a = mesh.vertices[static_cast<std::size_t>(tri[0])];
        const Vec3 b = mesh.vertices[static_cast<std::size_t>(tri[1])];
        const Vec3 c = mesh.vertices[static_cast<std::size_t>(tri[2])];
        Real r1 = unit(rng), r2 = unit(rng);
        if (r1 + r2 > 1) {
            r1 = 1 - r1;
            r2 = 1 - r2;
        }
        out.points.push_back(a + (b - a) * r1 + (c - a) * r2);
        const Vec3 nrm = cross(b - a, c - a);
        const Real nn = norm(nrm);
        out.normals.push_back(nn > eps_norm ? nrm / nn : Vec3{0, 0, 1});
    }
    return out;
}

}  // namespace flatcad
