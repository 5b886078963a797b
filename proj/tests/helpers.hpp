#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "flatcad/linalg.hpp"
#include "flatcad/net.hpp"

namespace flatcad::testing {

// Quadratic field f = 0.5 x^T A x + b . x + c with A symmetric: the simplest
// field with a constant, known Hessian. Exercises the same interface as the
// network and the analytic shapes.
struct QuadraticField {
    Mat3Sym A;
    Vec3 b{0, 0, 0};
    Real c = 0;

    Real value(const Vec3& x) const { return 0.5 * dot(x, A.apply(x)) + dot(b, x) + c; }
    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        return {value(x), A.apply(x) + b};
    }
    Vec3 hvp(const Vec3&, const Vec3& v) const { return A.apply(v); }
    Mat3Sym hessian(const Vec3&) const { return A; }
};

// f = xy: the textbook mixed-derivative case.
inline QuadraticField xy_field() {
    QuadraticField q;
    q.A.xy = 1;
    return q;
}

// Central-difference gradient of any field-like object, step h.
template <typename F>
Vec3 fd_gradient(const F& f, const Vec3& x, Real h) {
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
        Vec3 dx{0, 0, 0};
        dx[a] = h;
        g[a] = (f.value(x + dx) - f.value(x - dx)) / (2 * h);
    }
    return g;
}

// Central difference of the analytic gradient along v: oracle for H v.
inline Vec3 fd_hvp(const NetworkParams& p, const Vec3& x, const Vec3& v, Real h) {
    const auto [f1, g1] = input_gradient(p, x + v * h);
    const auto [f0, g0] = input_gradient(p, x - v * h);
    (void)f1;
    (void)f0;
    return (g1 - g0) / (2 * h);
}

inline Real dot_params(const ParamGradient& a, const ParamGradient& b) {
    Real s = 0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].w.size(); ++i) s += a.layers[l].w[i] * b.layers[l].w[i];
        for (std::size_t i = 0; i < a.layers[l].b.size(); ++i) s += a.layers[l].b[i] * b.layers[l].b[i];
    }
    return s;
}

inline void axpy_params(NetworkParams& p, const ParamGradient& d, Real t) {
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (std::size_t i = 0; i < p.layers[l].w.size(); ++i) p.layers[l].w[i] += t * d.layers[l].w[i];
        for (std::size_t i = 0; i < p.layers[l].b.size(); ++i) p.layers[l].b[i] += t * d.layers[l].b[i];
    }
}

// Random direction in parameter space with the layer shapes of p.
inline ParamGradient random_direction(const NetworkParams& p, std::uint64_t seed) {
    ParamGradient d = zeros_like(p);
    Rng rng = make_engine(seed, 31);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (auto& L : d.layers) {
        for (auto& v : L.w) v = gauss(rng);
        for (auto& v : L.b) v = gauss(rng);
    }
    return d;
}

// Total loss value only, via the gradient entry point (drops the gradient).
inline Real loss_value(const NetworkParams& p, const BatchSpec& batch) {
    return loss_parameter_gradient(p, batch).first.total;
}

}  // namespace flatcad::testing
