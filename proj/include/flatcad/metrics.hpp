#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/kdtree.hpp"
#include "flatcad/linalg.hpp"
#include "flatcad/meshing.hpp"

namespace flatcad {

// Quantitative evaluation between point sets, in raw (de-normalized) units.
// Report scalings (CD x1e3, F1 and NC x1e2) are applied at the CLI boundary.

// Symmetric mean nearest-neighbor Euclidean distance.
inline Real chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw EmptySet("chamfer_l1");
    KdTree ta(std::vector<Vec3>(a.begin(), a.end()));
    KdTree tb(std::vector<Vec3>(b.begin(), b.end()));
    Real sum_ab = 0, sum_ba = 0;
    for (const Vec3& p : a) sum_ab += tb.nearest(p).dist;
    for (const Vec3& q : b) sum_ba += ta.nearest(q).dist;
    return 0.5 * (sum_ab / static_cast<Real>(a.size()) + sum_ba / static_cast<Real>(b.size()));
}

// Precision/recall at distance threshold tau; 0 when both vanish.
inline Real f1_score(std::span<const Vec3> pred, std::span<const Vec3> gt, Real tau) {
    if (pred.empty() || gt.empty()) throw EmptySet("f1_score");
    if (!(tau > 0)) throw ConfigError("f1_score: tau must be positive");
    KdTree tp(std::vector<Vec3>(pred.begin(), pred.end()));
    KdTree tg(std::vector<Vec3>(gt.begin(), gt.end()));
    std::size_t hit_p = 0, hit_g = 0;
    for (const Vec3& p : pred)
        if (tg.nearest(p).dist <= tau) ++hit_p;
    for (const Vec3& q : gt)
        if (tp.nearest(q).dist <= tau) ++hit_g;
    const Real precision = static_cast<Real>(hit_p) / static_cast<Real>(pred.size());
    const Real recall = static_cast<Real>(hit_g) / static_cast<Real>(gt.size());
    if (precision + recall == 0) return 0;
    return 2 * precision * recall / (precision + recall);
}

// Mean |cos| between each point's normal and the normal of its nearest
// neighbor in the other set, symmetrized. Unsigned because the input clouds
// are unoriented.
inline Real normal_consistency(std::span<const Vec3> a_pts, std::span<const Vec3> a_nrm,
                               std::span<const Vec3> b_pts, std::span<const Vec3> b_nrm) {
    if (a_pts.empty() || b_pts.empty()) throw EmptySet("normal_consistency");
    if (a_nrm.size() != a_pts.size() || b_nrm.size() != b_pts.size()) throw MissingNormals();
    KdTree ta(std::vector<Vec3>(a_pts.begin(), a_pts.end()));
    KdTree tb(std::vector<Vec3>(b_pts.begin(), b_pts.end()));
    Real sum_ab = 0, sum_ba = 0;
    for (std::size_t i = 0; i < a_pts.size(); ++i) {
        const int j = tb.nearest(a_pts[i]).index;
        sum_ab += std::abs(dot(a_nrm[i], b_nrm[static_cast<std::size_t>(j)]));
    }
    for (std::size_t i = 0; i < b_pts.size(); ++i) {
        const int j = ta.nearest(b_pts[i]).index;
        sum_ba += std::abs(dot(b_nrm[i], a_nrm[static_cast<std::size_t>(j)]));
    }
    return 0.5 * (sum_ab / static_cast<Real>(a_pts.size()) + sum_ba / static_cast<Real>(b_pts.size()));
}

// Writes per-vertex distance to the nearest ground-truth point into the mesh
// scalar channel and returns the maximum (the one-sided Hausdorff value).
inline Real hausdorff_map(TriangleMesh& mesh, std::span<const Vec3> gt) {
    if (mesh.vertices.empty()) throw EmptySet("hausdorff_map: empty mesh");
    if (gt.empty()) throw EmptySet("hausdorff_map: empty reference");
    KdTree tree(std::vector<Vec3>(gt.begin(), gt.end()));
    mesh.scalar.resize(mesh.vertices.size());
    Real mx = 0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Real d = tree.nearest(mesh.vertices[i]).dist;
        mesh.scalar[i] = d;
        mx = std::max(mx, d);
    }
    return mx;
}

struct MetricRecord {
    Real nc_x100 = 0;
    Real cd_x1000 = 0;
    Real f1_x100 = 0;
    Real hausdorff_raw = 0;
    bool has_nc = false;
};

}  // namespace flatcad
