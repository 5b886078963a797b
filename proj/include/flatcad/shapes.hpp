#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"
#include "flatcad/rng.hpp"

namespace flatcad {

// Closed-form signed-distance fields with exact gradients and Hessians.
// These are the ground truth for every differential-geometry test: each one
// satisfies |grad| = 1 away from its medial locus, and the curvatures are
// known analytically. Sign convention: f < 0 inside, so a unit sphere has
// principal curvatures +1.
//
// Every shape models the same field interface as the network:
//   value(x), value_and_gradient(x), hvp(x, v), and additionally hessian(x).

inline constexpr Real kSingularGuard = 1e-6;

struct Plane {
    Vec3 n{0, 0, 1};  // unit normal
    Real c = 0;       // offset: f = n.x - c

    Plane() = default;
    Plane(const Vec3& normal, Real offset) : n(normalize(normal)), c(offset) {}

    Real value(const Vec3& x) const { return dot(n, x) - c; }
    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const { return {value(x), n}; }
    Mat3Sym hessian(const Vec3&) const { return {}; }
    Vec3 hvp(const Vec3&, const Vec3&) const { return {}; }
};

struct Sphere {
    Real r = 1;

    explicit Sphere(Real radius = 1) : r(radius) {}

    // The value is defined everywhere; only the derivatives carry the
    // singular-locus guard.
    Real value(const Vec3& x) const { return norm(x) - r; }

    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        const Real rho = guard(norm(x));
        return {rho - r, x / rho};
    }

    Mat3Sym hessian(const Vec3& x) const {
        const Real rho = guard(norm(x));
        const Vec3 u = x / rho;
        const Real s = 1 / rho;
        return {s * (1 - u.x * u.x), s * (-u.x * u.y), s * (-u.x * u.z),
                s * (1 - u.y * u.y), s * (-u.y * u.z), s * (1 - u.z * u.z)};
    }

    Vec3 hvp(const Vec3& x, const Vec3& v) const { return hessian(x).apply(v); }

private:
    static Real guard(Real rho) {
        if (rho < kSingularGuard) throw SingularPoint();
        return rho;
    }
};

struct CylinderZ {
    Real r = 1;

    explicit CylinderZ(Real radius = 1) : r(radius) {}

    Real value(const Vec3& x) const { return std::hypot(x.x, x.y) - r; }

    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        const Real rho = guard(std::hypot(x.x, x.y));
        return {rho - r, Vec3{x.x / rho, x.y / rho, 0}};
    }

    Mat3Sym hessian(const Vec3& x) const {
        const Real rho = guard(std::hypot(x.x, x.y));
        const Real s = 1 / (rho * rho * rho);
        return {s * x.y * x.y, -s * x.x * x.y, 0, s * x.x * x.x, 0, 0};
    }

    Vec3 hvp(const Vec3& x, const Vec3& v) const { return hessian(x).apply(v); }

private:
    static Real guard(Real rho) {
        if (rho < kSingularGuard) throw SingularPoint();
        return rho;
    }
};

struct Torus {
    Real R = 2;  // center-circle radius
    Real r = 0.5;  // tube radius

    Torus(Real big, Real small) : R(big), r(small) {}

    Real value(const Vec3& x) const {
        const Real rho = std::hypot(x.x, x.y);
        return std::hypot(rho - R, x.z) - r;
    }

    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        Real rho, d;
        radii(x, rho, d);
        const Real a = (rho - R) / d;
        return {d - r, Vec3{a * x.x / rho, a * x.y / rho, x.z / d}};
    }

    Mat3Sym hessian(const Vec3& x) const {
        Real rho, d;
        radii(x, rho, d);
        // f = g(rho, z) with g = sqrt((rho-R)^2 + z^2) - r
        const Real grho = (rho - R) / d;
        const Real grr = x.z * x.z / (d * d * d);
        const Real gzz = (rho - R) * (rho - R) / (d * d * d);
        const Real grz = -(rho - R) * x.z / (d * d * d);
        const Real cx = x.x / rho, cy = x.y / rho;
        Mat3Sym h;
        h.xx = grr * cx * cx + grho * (1 / rho - x.x * x.x / (rho * rho * rho));
        h.yy = grr * cy * cy + grho * (1 / rho - x.y * x.y / (rho * rho * rho));
        h.xy = grr * cx * cy - grho * x.x * x.y / (rho * rho * rho);
        h.xz = grz * cx;
        h.yz = grz * cy;
        h.zz = gzz;
        return h;
    }

    Vec3 hvp(const Vec3& x, const Vec3& v) const { return hessian(x).apply(v); }

private:
    void radii(const Vec3& x, Real& rho, Real& d) const {
        rho = std::hypot(x.x, x.y);
        if (rho < kSingularGuard) throw SingularPoint("torus axis");
        d = std::hypot(rho - R, x.z);
        if (d < kSingularGuard) throw SingularPoint("torus core circle");
    }
};

// Box with half-extents h, edges and corners rounded by `rounding`. The
// surface sits at distance `rounding` from the core box, so the overall
// half-extent is h + rounding. Exact SDF outside the core box; the interior
// uses the usual max-of-components form, which is only a lower bound there.
struct RoundedBox {
    Vec3 h{0.5, 0.5, 0.5};
    Real rounding = 0.1;

    RoundedBox(const Vec3& half_extents, Real round) : h(half_extents), rounding(round) {}

    Real value(const Vec3& x) const {
        const Vec3 q{std::abs(x.x) - h.x, std::abs(x.y) - h.y, std::abs(x.z) - h.z};
        const Vec3 qp{std::max(q.x, Real(0)), std::max(q.y, Real(0)), std::max(q.z, Real(0))};
        const Real inner = std::min(std::max(q.x, std::max(q.y, q.z)), Real(0));
        return norm(qp) + inner - rounding;
    }

    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        return {value(x), gradient(x)};
    }

    Vec3 gradient(const Vec3& x) const {
        const Vec3 q{std::abs(x.x) - h.x, std::abs(x.y) - h.y, std::abs(x.z) - h.z};
        const Vec3 qp{std::max(q.x, Real(0)), std::max(q.y, Real(0)), std::max(q.z, Real(0))};
        const Real m = norm(qp);
        if (m > kSingularGuard) {
            return {sgn(x.x) * qp.x / m, sgn(x.y) * qp.y / m, sgn(x.z) * qp.z / m};
        }
        // Inside the core box: gradient of max(q) is the axis of the largest component.
        int axis = 0;
        if (q.y > q[axis]) axis = 1;
        if (q.z > q[axis]) axis = 2;
        Vec3 g{0, 0, 0};
        g[axis] = sgn(x[axis]);
        return g;
    }

    Mat3Sym hessian(const Vec3& x) const {
        const Vec3 q{std::abs(x.x) - h.x, std::abs(x.y) - h.y, std::abs(x.z) - h.z};
        const Vec3 qp{std::max(q.x, Real(0)), std::max(q.y, Real(0)), std::max(q.z, Real(0))};
        const Real m = norm(qp);
        if (m <= kSingularGuard) return {};  // flat faces and interior
        const Real s[3] = {sgn(x.x), sgn(x.y), sgn(x.z)};
        const Real qv[3] = {qp.x, qp.y, qp.z};
        const bool active[3] = {q.x > 0, q.y > 0, q.z > 0};
        Mat3Sym hss;
        Real* entries[3][3] = {{&hss.xx, &hss.xy, &hss.xz},
                               {&hss.xy, &hss.yy, &hss.yz},
                               {&hss.xz, &hss.yz, &hss.zz}};
        for (int i = 0; i < 3; ++i) {
            for (int j = i; j < 3; ++j) {
                if (!active[i] || !active[j]) continue;
                const Real delta = (i == j) ? 1.0 : 0.0;
                *entries[i][j] = s[i] * s[j] * (delta * m * m - qv[i] * qv[j]) / (m * m * m);
            }
        }
        return hss;
    }

    Vec3 hvp(const Vec3& x, const Vec3& v) const { return hessian(x).apply(v); }

private:
    static Real sgn(Real t) { return t < 0 ? -1.0 : 1.0; }
};

// ---------------------------------------------------------------------------

struct OracleEval {
    Real f = 0;
    Vec3 grad;
    Mat3Sym hessian;
};

template <typename Shape>
OracleEval oracle_eval(const Shape& shape, const Vec3& x) {
    auto [f, g] = shape.value_and_gradient(x);
    return {f, g, shape.hessian(x)};
}

// Type-erased shape for the CLI catalog.
using AnalyticShape = std::variant<Plane, Sphere, CylinderZ, Torus, RoundedBox>;

inline OracleEval oracle_eval(const AnalyticShape& shape, const Vec3& x) {
    return std::visit([&](const auto& s) { return oracle_eval(s, x); }, shape);
}

// ---------------------------------------------------------------------------
// Area-uniform surface samplers. Points satisfy f = 0 to machine precision
// and carry exact outward normals.

struct SurfaceSampleSet {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

namespace detail {

inline Vec3 sample_unit_vector(Rng& rng) {
    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (;;) {
        const Vec3 v{gauss(rng), gauss(rng), gauss(rng)};
        const Real n = norm(v);
        if (n > 1e-6) return v / n;
    }
}

}  // namespace detail

inline SurfaceSampleSet sample_surface(const Plane& s, int n, std::uint64_t seed) {
    Rng rng = make_engine(seed, /*stream=*/101);
    std::uniform_real_distribution<Real> span(-0.9, 0.9);
    // In-plane frame.
    Vec3 a = std::abs(s.n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = normalize(a - s.n * dot(a, s.n));
    const Vec3 v = cross(s.n, u);
    SurfaceSampleSet out;
    for (int i = 0; i < n; ++i) {
        out.points.push_back(s.n * s.c + u * span(rng) + v * span(rng));
        out.normals.push_back(s.n);
    }
    return out;
}

inline SurfaceSampleSet sample_surface(const Sphere& s, int n, std::uint64_t seed) {
    Rng rng = make_engine(seed, 102);
    SurfaceSampleSet out;
    for (int i = 0; i < n; ++i) {
        const Vec3 d = detail::sample_unit_vector(rng);
        out.points.push_back(d * s.r);
        out.normals.push_back(d);
    }
    return out;
}

// Cylinder is infinite; samples are restricted to z in [-1, 1].
inline SurfaceSampleSet sample_surface(const CylinderZ& s, int n, std::uint64_t seed) {
    Rng rng = make_engine(seed, 103);
    std::uniform_real_distribution<Real> angle(0.0, 2 * std::numbers::pi);
    std::uniform_real_distribution<Real> height(-1.0, 1.0);
    SurfaceSampleSet out;
    for (int i = 0; i < n; ++i) {
        const Real phi = angle(rng);
        const Vec3 nrm{std::cos(phi), std::sin(phi), 0};
        out.points.push_back(Vec3{nrm.x * s.r, nrm.y * s.r, height(rng)});
        out.normals.push_back(nrm);
    }
    return out;
}

inline SurfaceSampleSet sample_surface(const Torus& s, int n, std::uint64_t seed) {
    Rng rng = make_engine(seed, 104);
    std::uniform_real_distribution<Real> angle(0.0, 2 * std::numbers::pi);
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    SurfaceSampleSet out;
    while (static_cast<int>(out.points.size()) < n) {
        const Real psi = angle(rng);  // around the main axis
        const Real phi = angle(rng);  // around the tube
        // Area element is proportional to R + r cos(phi); thin the dense side.
        if (unit(rng) * (s.R + s.r) > s.R + s.r * std::cos(phi)) continue;
        const Real rho = s.R + s.r * std::cos(phi);
        out.points.push_back(Vec3{rho * std::cos(psi), rho * std::sin(psi), s.r * std::sin(phi)});
        out.normals.push_back(
            Vec3{std::cos(phi) * std::cos(psi), std::cos(phi) * std::sin(psi), std::sin(phi)});
    }
    return out;
}

// Stratified over the offset surface: 6 rectangular faces, 12 quarter-cylinder
// edges, 8 spherical corner octants, picked by exact area.
inline SurfaceSampleSet sample_surface(const RoundedBox& s, int n, std::uint64_t seed) {
    Rng rng = make_engine(seed, 105);
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    std::uniform_real_distribution<Real> quarter(0.0, std::numbers::pi / 2);
    const Real rho = s.rounding;
    const Real pi = std::numbers::pi;
    const Real faces = 8 * (s.h.x * s.h.y + s.h.y * s.h.z + s.h.z * s.h.x);
    const Real edges = 4 * pi * rho * (s.h.x + s.h.y + s.h.z);
    const Real corners = 4 * pi * rho * rho;
    SurfaceSampleSet out;
    auto signed_unit = [&](Rng& r) { return unit(r) < 0.5 ? -1.0 : 1.0; };
    for (int i = 0; i < n; ++i) {
        Real pick = unit(rng) * (faces + edges + corners);
        Vec3 p, nrm;
        if (pick < faces) {
            // Face: choose axis by area, then a point on the rectangle.
            const Real axy = 8 * s.h.x * s.h.y, ayz = 8 * s.h.y * s.h.z;
            int axis;  // normal axis
            if (pick < axy) axis = 2;
            else if (pick < axy + ayz) axis = 0;
            else axis = 1;
            const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
            p[axis] = signed_unit(rng) * (s.h[axis] + rho);
            p[a1] = (2 * unit(rng) - 1) * s.h[a1];
            p[a2] = (2 * unit(rng) - 1) * s.h[a2];
            nrm = Vec3{0, 0, 0};
            nrm[axis] = p[axis] > 0 ? 1.0 : -1.0;
        } else if (pick < faces + edges) {
            // Edge: quarter cylinder along one axis.
            const Real w = (pick - faces) / (4 * pi * rho);
            int axis = w < s.h.x ? 0 : (w < s.h.x + s.h.y ? 1 : 2);
            const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
            const Real s1 = signed_unit(rng), s2 = signed_unit(rng);
            const Real t = quarter(rng);
            p[axis] = (2 * unit(rng) - 1) * s.h[axis];
            nrm = Vec3{0, 0, 0};
            nrm[a1] = s1 * std::cos(t);
            nrm[a2] = s2 * std::sin(t);
            p[a1] = s1 * s.h[a1] + rho * nrm[a1];
            p[a2] = s2 * s.h[a2] + rho * nrm[a2];
        } else {
            // Corner: sphere octant.
            const Vec3 corner{signed_unit(rng) * s.h.x, signed_unit(rng) * s.h.y,
                              signed_unit(rng) * s.h.z};
            Vec3 d = detail::sample_unit_vector(rng);
            d = Vec3{std::abs(d.x) * (corner.x > 0 ? 1 : -1), std::abs(d.y) * (corner.y > 0 ? 1 : -1),
                     std::abs(d.z) * (corner.z > 0 ? 1 : -1)};
            p = corner + d * rho;
            nrm = d;
        }
        out.points.push_back(p);
        out.normals.push_back(nrm);
    }
    return out;
}

inline SurfaceSampleSet sample_surface(const AnalyticShape& shape, int n, std::uint64_t seed) {
    return std::visit([&](const auto& s) { return sample_surface(s, n, seed); }, shape);
}

// CLI catalog. Parameters chosen so every shape fits the normalized box.
inline AnalyticShape shape_by_name(const std::string& name) {
    if (name == "plane") return Plane(Vec3{0, 0, 1}, 0.0);
    if (name == "sphere") return Sphere(0.5);
    if (name == "cylinder") return CylinderZ(0.5);
    if (name == "torus") return Torus(0.6, 0.2);
    if (name == "roundedbox") return RoundedBox(Vec3{0.5, 0.35, 0.25}, 0.1);
    throw ConfigError("unknown shape: " + name);
}

}  // namespace flatcad
