#pragma once

#include <cmath>
#include <concepts>
#include <utility>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"

namespace flatcad {

// Anything that evaluates like a scalar field: the network, the analytic
// shapes, and the quadratic harnesses in the tests all satisfy this.
template <typename F>
concept ScalarField = requires(const F f, const Vec3& x, const Vec3& v) {
    { f.value(x) } -> std::convertible_to<Real>;
    { f.value_and_gradient(x) } -> std::convertible_to<std::pair<Real, Vec3>>;
    { f.hvp(x, v) } -> std::convertible_to<Vec3>;
};

// Orthonormal tangent frame at a surface point: (u, v, n) right-handed,
// with theta the rotation applied to the deterministic base frame.
struct TangentFrame {
    Vec3 n, u, v;
    Real theta = 0;
};

struct CurvaturePair {
    Real kappa1 = 0;  // smaller
    Real kappa2 = 0;  // larger
};

// Deterministic tangent basis perpendicular to a unit normal. The pivot axis
// is the standard axis with the smallest |component| of n (lowest index on
// ties), which keeps the projection well conditioned.
inline std::pair<Vec3, Vec3> base_frame(const Vec3& n) {
    int pivot = 0;
    Real best = std::abs(n.x);
    if (std::abs(n.y) < best) { pivot = 1; best = std::abs(n.y); }
    if (std::abs(n.z) < best) { pivot = 2; }
    Vec3 a{0, 0, 0};
    a[pivot] = 1;
    const Vec3 u0 = normalize(a - n * dot(a, n));
    const Vec3 v0 = cross(n, u0);
    return {u0, v0};
}

inline std::pair<Vec3, Vec3> rotate_frame(const Vec3& u0, const Vec3& v0, Real theta) {
    const Real c = std::cos(theta), s = std::sin(theta);
    return {u0 * c + v0 * s, u0 * -s + v0 * c};
}

template <ScalarField F>
TangentFrame tangent_frame(const F& field, const Vec3& x, Real theta) {
    const auto [f, g] = field.value_and_gradient(x);
    (void)f;
    const Vec3 n = normalize(g);
    const auto [u0, v0] = base_frame(n);
    const auto [u, v] = rotate_frame(u0, v0, theta);
    return {n, u, v, theta};
}

// Mixed Weingarten entry u^T H v / |grad| in the frame rotated by theta.
// Exactly one Hessian-vector product.
template <ScalarField F>
Real s12_autodiff(const F& field, const Vec3& x, Real theta) {
    const auto [f, g] = field.value_and_gradient(x);
    (void)f;
    const Real gn = norm(g);
    if (!(gn > eps_norm)) throw DegenerateGradient();
    const auto [u0, v0] = base_frame(g / gn);
    const auto [u, v] = rotate_frame(u0, v0, theta);
    return dot(u, field.hvp(x, v)) / gn;
}

// The raw mixed central stencil D+_uv = (f(x+hu+hv) - f(x+hu) - f(x+hv) + f(x)) / h^2.
// Exact for quadratics; O(h) truncation in general.
template <ScalarField F>
Real mixed_second_difference(const F& field, const Vec3& x, const Vec3& u, const Vec3& v, Real h) {
    const Real f00 = field.value(x);
    const Real fu = field.value(x + u * h);
    const Real fv = field.value(x + v * h);
    const Real fuv = field.value(x + (u + v) * h);
    return (fuv - fu - fv + f00) / (h * h);
}

// First-order proxy: four forward evaluations plus one gradient, no
// second-order passes.
template <ScalarField F>
Real s12_finite_difference(const F& field, const Vec3& x, Real theta, Real h) {
    if (!(h > 0)) throw Error("stencil step must be positive");
    const auto [f, g] = field.value_and_gradient(x);
    (void)f;
    const Real gn = norm(g);
    if (!(gn > eps_norm)) throw DegenerateGradient();
    const auto [u0, v0] = base_frame(g / gn);
    const auto [u, v] = rotate_frame(u0, v0, theta);
    return mixed_second_difference(field, x, u, v, h) / gn;
}

// Shape operator in the theta = 0 base frame, from two HVP calls.
// The off-diagonal pair is symmetrized; u^T(Hv) and v^T(Hu) differ only by
// rounding.
template <ScalarField F>
Mat2Sym shape_operator(const F& field, const Vec3& x) {
    const auto [f, g] = field.value_and_gradient(x);
    (void)f;
    const Real gn = norm(g);
    if (!(gn > eps_norm)) throw DegenerateGradient();
    const auto [u, v] = base_frame(g / gn);
    const Vec3 hu = field.hvp(x, u);
    const Vec3 hv = field.hvp(x, v);
    Mat2Sym s;
    s.a11 = dot(u, hu) / gn;
    s.a22 = dot(v, hv) / gn;
    s.a12 = 0.5 * (dot(u, hv) + dot(v, hu)) / gn;
    return s;
}

// Closed-form symmetric 2x2 eigenvalues, ascending.
inline CurvaturePair principal_curvatures(const Mat2Sym& s) {
    const Real mean = 0.5 * (s.a11 + s.a22);
    const Real diff = 0.5 * (s.a11 - s.a22);
    const Real disc = std::sqrt(diff * diff + s.a12 * s.a12);
    return {mean - disc, mean + disc};
}

template <ScalarField F>
Real gaussian_curvature(const F& field, const Vec3& x) {
    return shape_operator(field, x).det();
}

}  // namespace flatcad
