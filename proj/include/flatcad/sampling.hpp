#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/kdtree.hpp"
#include "flatcad/linalg.hpp"
#include "flatcad/rng.hpp"

namespace flatcad {

// Point cloud plus the raw -> normalized transform:
// normalized = (raw - center) * scale.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty or same size as points, unit length
    Vec3 center{0, 0, 0};
    Real scale = 1;

    bool has_normals() const { return !normals.empty(); }
    Vec3 to_raw(const Vec3& p) const { return p / scale + center; }
    Vec3 to_normalized(const Vec3& p) const { return (p - center) * scale; }
};

// Static near-surface shell: one Gaussian offset per selected input point.
struct ShellSet {
    std::vector<Vec3> points;
    std::vector<int> source_indices;
};

// Center the bounding box at the origin and scale the largest half-extent to
// 0.9. A single point maps to the origin with scale 1.
inline PointCloud normalize_cloud(const std::vector<Vec3>& raw,
                                  const std::vector<Vec3>& raw_normals = {}) {
    if (raw.empty()) throw EmptyCloud("normalize_cloud");
    Vec3 mn = raw[0], mx = raw[0];
    for (const Vec3& p : raw) {
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], p[a]);
            mx[a] = std::max(mx[a], p[a]);
        }
    }
    PointCloud cloud;
    cloud.center = (mn + mx) * 0.5;
    const Real half = 0.5 * std::max({mx.x - mn.x, mx.y - mn.y, mx.z - mn.z});
    cloud.scale = half > 0 ? 0.9 / half : 1.0;
    cloud.points.reserve(raw.size());
    for (const Vec3& p : raw) cloud.points.push_back((p - cloud.center) * cloud.scale);
    cloud.normals = raw_normals;  // directions are scale-invariant
    return cloud;
}

// Per-point distance to the min(k, N-1)-th nearest neighbor, self excluded.
// Exact; the tree only accelerates the search.
inline std::vector<Real> knn_sigma(const PointCloud& cloud, int k) {
    const std::size_t n = cloud.points.size();
    if (n == 0) throw EmptyCloud("knn_sigma");
    if (n == 1) return {0.01};  // no neighbors to measure; small fixed fallback
    const int kk = std::min<int>(k, static_cast<int>(n) - 1);
    KdTree tree(cloud.points);
    std::vector<Real> sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto hits = tree.knn(cloud.points[i], kk, static_cast<int>(i));
        sigma[i] = hits.back().dist;
    }
    return sigma;
}

// Select `count` source points without replacement, then displace each by an
// isotropic Gaussian with that point's sigma. The shell is immutable after
// construction.
inline ShellSet build_shell(const PointCloud& cloud, const std::vector<Real>& sigmas,
                            std::size_t count, std::uint64_t seed) {
    const std::size_t n = cloud.points.size();
    if (n == 0) throw EmptyCloud("build_shell");
    if (sigmas.size() != n) throw ShapeMismatch("sigma count does not match cloud");
    count = std::min(count, n);
    Rng rng = make_engine(seed, /*stream=*/11);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `count` entries are the selection.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::normal_distribution<Real> gauss(0.0, 1.0);
    ShellSet shell;
    shell.points.reserve(count);
    shell.source_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        const int src = shell.source_indices[i];
        const Vec3 offset{gauss(rng), gauss(rng), gauss(rng)};
        shell.points.push_back(cloud.points[static_cast<std::size_t>(src)] +
                               offset * sigmas[static_cast<std::size_t>(src)]);
    }
    return shell;
}

inline std::vector<Vec3> sample_uniform_box(std::size_t count, std::uint64_t seed,
                                            std::uint64_t iteration = 0) {
    Rng rng = make_engine(seed, /*stream=*/13, iteration);
    std::uniform_real_distribution<Real> u(-1.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Real x = u(rng), y = u(rng), z = u(rng);
        out.push_back({x, y, z});
    }
    return out;
}

// m distinct indices from [0, n), uniform without replacement, seeded per
// (seed, iteration) so reshuffling one iteration never disturbs another.
inline std::vector<int> minibatch(std::size_t n_total, std::size_t m, std::uint64_t seed,
                                  std::uint64_t iteration) {
    if (m > n_total) throw BatchTooLarge();
    Rng rng = make_engine(seed, /*stream=*/17, iteration);
    std::vector<int> order(n_total);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_total - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(m);
    return order;
}

// ---------------------------------------------------------------------------
// Cloud file formats: whitespace-separated text ("x y z" or
// "x y z nx ny nz", one point per line) and PLY (ascii or binary
// little-endian) with x/y/z and optional nx/ny/nz properties.

struct RawCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

namespace detail {

inline bool is_blank(const std::string& line) {
    for (char ch : line)
        if (!std::isspace(static_cast<unsigned char>(ch))) return false;
    return true;
}

}  // namespace detail

inline RawCloud read_xyz_text(std::istream& in, const std::string& name) {
    RawCloud cloud;
    std::string line;
    long line_no = 0;
    bool expect_normals = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line) || line[0] == '#') continue;
        std::istringstream ls(line);
        Real x, y, z;
        if (!(ls >> x >> y >> z))
            throw IoError(name + ":" + std::to_string(line_no) + ": expected x y z");
        Real nx, ny, nz;
        if (ls >> nx) {
            if (!(ls >> ny >> nz))
                throw IoError(name + ":" + std::to_string(line_no) + ": expected nx ny nz");
            if (!cloud.points.empty() && !expect_normals)
                throw IoError(name + ":" + std::to_string(line_no) + ": inconsistent normal columns");
            expect_normals = true;
            const Vec3 nv{nx, ny, nz};
            const Real nn = norm(nv);
            if (!(nn > eps_norm))
                throw IoError(name + ":" + std::to_string(line_no) + ": zero normal");
            cloud.normals.push_back(nv / nn);
        } else if (expect_normals) {
            throw IoError(name + ":" + std::to_string(line_no) + ": inconsistent normal columns");
        }
        std::string extra;
        if (ls.clear(), ls >> extra)
            throw IoError(name + ":" + std::to_string(line_no) + ": trailing fields");
        cloud.points.push_back({x, y, z});
    }
    if (cloud.points.empty()) throw EmptyCloud(name + ": no points");
    return cloud;
}

inline RawCloud read_ply_cloud(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") throw IoError(name + ": not a PLY file");
    bool binary = false;
    long vertex_count = -1;
    struct Prop {
        std::string name;
        int bytes = 0;
        bool is_float = false;
    };
    std::vector<Prop> props;
    bool in_vertex_element = false;
    long skip_elements_after = 0;
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
            else throw IoError(name + ": unsupported PLY format " + fmt);
        } else if (tok == "element") {
            std::string kind;
            long count;
            ls >> kind >> count;
            if (kind == "vertex") {
                vertex_count = count;
                in_vertex_element = true;
            } else {
                in_vertex_element = false;
                if (vertex_count >= 0) skip_elements_after += count;  // faces etc. ignored
            }
        } else if (tok == "property") {
            if (!in_vertex_element) continue;
            std::string type, pname;
            ls >> type;
            if (type == "list") throw IoError(name + ": list property in vertex element");
            ls >> pname;
            Prop p;
            p.name = pname;
            if (type == "float" || type == "float32") { p.bytes = 4; p.is_float = true; }
            else if (type == "double" || type == "float64") { p.bytes = 8; p.is_float = true; }
            else if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") p.bytes = 1;
            else if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") p.bytes = 2;
            else if (type == "int" || type == "uint" || type == "int32" || type == "uint32") p.bytes = 4;
            else throw IoError(name + ": unsupported property type " + type);
            props.push_back(p);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (vertex_count < 0) throw IoError(name + ": no vertex element");
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
    for (std::size_t i = 0; i < props.size(); ++i) {
        const std::string& pn = props[i].name;
        if (pn == "x") ix = static_cast<int>(i);
        else if (pn == "y") iy = static_cast<int>(i);
        else if (pn == "z") iz = static_cast<int>(i);
        else if (pn == "nx") inx = static_cast<int>(i);
        else if (pn == "ny") iny = static_cast<int>(i);
        else if (pn == "nz") inz = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw IoError(name + ": PLY vertex lacks x/y/z");
    const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;

    RawCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    std::vector<Real> row(props.size());
    for (long v = 0; v < vertex_count; ++v) {
        if (binary) {
            for (std::size_t i = 0; i < props.size(); ++i) {
                unsigned char buf[8];
                in.read(reinterpret_cast<char*>(buf), props[i].bytes);
                if (!in) throw IoError(name + ": truncated vertex " + std::to_string(v));
                if (props[i].is_float && props[i].bytes == 4) {
                    float f;
                    std::memcpy(&f, buf, 4);
                    row[i] = f;
                } else if (props[i].is_float) {
                    double d;
                    std::memcpy(&d, buf, 8);
                    row[i] = d;
                } else {
                    long val = 0;
                    std::memcpy(&val, buf, static_cast<std::size_t>(props[i].bytes));
                    row[i] = static_cast<Real>(val);
                }
            }
        } else {
            for (std::size_t i = 0; i < props.size(); ++i) {
                if (!(in >> row[i])) throw IoError(name + ": truncated vertex " + std::to_string(v));
            }
        }
        cloud.points.push_back({row[static_cast<std::size_t>(ix)], row[static_cast<std::size_t>(iy)],
                                row[static_cast<std::size_t>(iz)]});
        if (with_normals) {
            const Vec3 nv{row[static_cast<std::size_t>(inx)], row[static_cast<std::size_t>(iny)],
                          row[static_cast<std::size_t>(inz)]};
            const Real nn = norm(nv);
            if (!(nn > eps_norm)) throw IoError(name + ": zero normal at vertex " + std::to_string(v));
            cloud.normals.push_back(nv / nn);
        }
    }
    if (cloud.points.empty()) throw EmptyCloud(name + ": no points");
    return cloud;
}

inline RawCloud read_cloud_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return read_ply_cloud(in, path);
    return read_xyz_text(in, path);
}

inline void write_xyz_text(const std::string& path, const std::vector<Vec3>& points,
                           const std::vector<Vec3>& normals = {}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.precision(17);
    for (std::size_t i = 0; i < points.size(); ++i) {
        out << points[i].x << ' ' << points[i].y << ' ' << points[i].z;
        if (!normals.empty())
            out << ' ' << normals[i].x << ' ' << normals[i].y << ' ' << normals[i].z;
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace flatcad
