#pragma once

#include <cmath>
#include <ostream>

#include "flatcad/errors.hpp"

namespace flatcad {

using Real = double;

// Gradient norms below this are treated as degenerate; the Eikonal term keeps
// |grad| near 1, so anything this small is a pathological point, not signal.
inline constexpr Real eps_norm = 1e-9;

struct Vec3 {
    Real x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(Real x_, Real y_, Real z_) : x(x_), y(y_), z(z_) {}

    Real& operator[](int i) { return (&x)[i]; }
    Real operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(Real s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(Real s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(Real s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(Real s, const Vec3& v) { return v * s; }

inline Real dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline Real norm_squared(const Vec3& v) { return dot(v, v); }
inline Real norm(const Vec3& v) { return std::sqrt(norm_squared(v)); }

inline Vec3 normalize(const Vec3& v) {
    const Real n = norm(v);
    if (!(n > eps_norm)) throw DegenerateGradient();
    return v / n;
}

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << v.x << ' ' << v.y << ' ' << v.z;
}

// Symmetric 2x2 matrix; only the upper triangle is stored.
struct Mat2Sym {
    Real a11 = 0, a12 = 0, a22 = 0;

    Real det() const { return a11 * a22 - a12 * a12; }
    Real trace() const { return a11 + a22; }
};

// Symmetric 3x3 matrix; upper-triangle storage.
struct Mat3Sym {
    Real xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;

    Vec3 apply(const Vec3& v) const {
        return {xx * v.x + xy * v.y + xz * v.z,
                xy * v.x + yy * v.y + yz * v.z,
                xz * v.x + yz * v.y + zz * v.z};
    }

    Mat3Sym operator+(const Mat3Sym& o) const {
        return {xx + o.xx, xy + o.xy, xz + o.xz, yy + o.yy, yz + o.yz, zz + o.zz};
    }
    Mat3Sym operator*(Real s) const { return {xx * s, xy * s, xz * s, yy * s, yz * s, zz * s}; }
};

inline Real quadratic_form(const Vec3& u, const Mat3Sym& m, const Vec3& v) {
    return dot(u, m.apply(v));
}

}  // namespace flatcad
