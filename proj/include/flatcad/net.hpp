#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"
#include "flatcad/losses.hpp"
#include "flatcad/parallel.hpp"
#include "flatcad/rng.hpp"

namespace flatcad {

// Sinusoidal MLP f: R^3 -> R with explicit forward, input-gradient,
// Hessian-vector-product, and parameter-gradient passes. No external
// differentiation machinery: every derivative below is a hand-written sweep
// over the cached evaluation record.
//
// Convention: hidden layers compute sin(omega0 * (W x + b)); the final layer
// is affine with no activation.

struct Layer {
    int in = 0, out = 0;
    std::vector<Real> w;  // row-major [out x in]
    std::vector<Real> b;  // [out]
};

struct NetworkParams {
    Real omega0 = 30.0;
    std::vector<Layer> layers;  // depth hidden layers followed by the affine head

    int depth() const { return static_cast<int>(layers.size()) - 1; }
    int width() const { return layers.empty() ? 0 : layers.front().out; }
};

// Gradient of a scalar loss with respect to every parameter; mirrors the
// layer shapes of NetworkParams.
struct ParamGradient {
    std::vector<Layer> layers;
};

inline void check_shapes(const NetworkParams& p) {
    if (p.layers.empty()) throw ShapeMismatch("network has no layers");
    int prev = 3;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const Layer& L = p.layers[l];
        if (L.in != prev) throw ShapeMismatch("layer input does not chain");
        if (L.w.size() != static_cast<std::size_t>(L.in) * L.out ||
            L.b.size() != static_cast<std::size_t>(L.out))
            throw ShapeMismatch("layer storage does not match its shape");
        prev = L.out;
    }
    if (p.layers.back().out != 1) throw ShapeMismatch("head must have one output");
}

inline ParamGradient zeros_like(const NetworkParams& p) {
    ParamGradient g;
    g.layers.reserve(p.layers.size());
    for (const Layer& L : p.layers) {
        Layer z;
        z.in = L.in;
        z.out = L.out;
        z.w.assign(L.w.size(), 0.0);
        z.b.assign(L.b.size(), 0.0);
        g.layers.push_back(std::move(z));
    }
    return g;
}

inline void fill_zero(ParamGradient& g) {
    for (Layer& L : g.layers) {
        std::fill(L.w.begin(), L.w.end(), 0.0);
        std::fill(L.b.begin(), L.b.end(), 0.0);
    }
}

inline void accumulate(ParamGradient& dst, const ParamGradient& src) {
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        Layer& d = dst.layers[l];
        const Layer& s = src.layers[l];
        for (std::size_t i = 0; i < d.w.size(); ++i) d.w[i] += s.w[i];
        for (std::size_t i = 0; i < d.b.size(); ++i) d.b[i] += s.b[i];
    }
}

// Standard sinusoidal initialization: first layer uniform on [-1/3, 1/3]
// (input dimension 3), later layers uniform on [-sqrt(6/fan_in)/omega0,
// sqrt(6/fan_in)/omega0]. Biases use the same bound as their layer's weights.
inline NetworkParams init_siren(int depth, int width, Real omega0, std::uint64_t seed) {
    if (depth < 1 || width < 1) throw ShapeMismatch("depth and width must be at least 1");
    NetworkParams p;
    p.omega0 = omega0;
    Rng rng = make_engine(seed, /*stream=*/7);
    auto push_layer = [&](int in, int out, Real bound) {
        Layer L;
        L.in = in;
        L.out = out;
        L.w.resize(static_cast<std::size_t>(in) * out);
        L.b.resize(static_cast<std::size_t>(out));
        std::uniform_real_distribution<Real> u(-bound, bound);
        for (Real& v : L.w) v = u(rng);
        for (Real& v : L.b) v = u(rng);
        p.layers.push_back(std::move(L));
    };
    push_layer(3, width, 1.0 / 3.0);
    for (int l = 1; l < depth; ++l) push_layer(width, width, std::sqrt(6.0 / width) / omega0);
    push_layer(width, 1, std::sqrt(6.0 / width) / omega0);
    return p;
}

namespace netk {

// Dot product with four fixed accumulators: vectorizes without relaxing the
// summation order, so results stay bitwise reproducible.
inline Real dot_n(const Real* a, const Real* b, int n) {
    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline void affine(const Layer& L, const Real* x, Real* y) {
    for (int r = 0; r < L.out; ++r) y[r] = dot_n(&L.w[static_cast<std::size_t>(r) * L.in], x, L.in) + L.b[r];
}

inline void linear(const Layer& L, const Real* x, Real* y) {
    for (int r = 0; r < L.out; ++r) y[r] = dot_n(&L.w[static_cast<std::size_t>(r) * L.in], x, L.in);
}

// y = W^T d
inline void linear_t(const Layer& L, const Real* d, Real* y) {
    for (int k = 0; k < L.in; ++k) y[k] = 0;
    for (int r = 0; r < L.out; ++r) {
        const Real dr = d[r];
        if (dr == 0) continue;
        const Real* row = &L.w[static_cast<std::size_t>(r) * L.in];
        for (int k = 0; k < L.in; ++k) y[k] += dr * row[k];
    }
}

// grad_W += d x^T, grad_b += d
inline void outer_acc(Layer& g, const Real* d, const Real* x) {
    for (int r = 0; r < g.out; ++r) {
        const Real dr = d[r];
        g.b[r] += dr;
        if (dr == 0) continue;
        Real* row = &g.w[static_cast<std::size_t>(r) * g.in];
        for (int k = 0; k < g.in; ++k) row[k] += dr * x[k];
    }
}

}  // namespace netk

// Cached forward pass: inputs to every linear layer plus the sine/cosine of
// each hidden pre-activation. Everything the adjoint sweeps need.
struct EvalRecord {
    std::vector<std::vector<Real>> a;  // a[l] = input to linear layer l; a[0] is x
    std::vector<std::vector<Real>> s;  // sin(omega0 z) per hidden layer
    std::vector<std::vector<Real>> c;  // cos(omega0 z) per hidden layer
    Real value = 0;

    int layer_count() const { return static_cast<int>(s.size()) + 1; }

    void ensure_shapes(const NetworkParams& p) {
        const std::size_t d = p.layers.size() - 1;
        a.resize(d + 1);
        s.resize(d);
        c.resize(d);
        a[0].resize(3);
        for (std::size_t l = 0; l < d; ++l) {
            const std::size_t w = static_cast<std::size_t>(p.layers[l].out);
            a[l + 1].resize(w);
            s[l].resize(w);
            c[l].resize(w);
        }
    }
};

inline Real forward_record(const NetworkParams& p, const Vec3& x, EvalRecord& rec) {
    rec.ensure_shapes(p);
    const int depth = p.depth();
    rec.a[0][0] = x.x;
    rec.a[0][1] = x.y;
    rec.a[0][2] = x.z;
    std::vector<Real>* in = &rec.a[0];
    for (int l = 0; l < depth; ++l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        std::vector<Real>& out = rec.a[static_cast<std::size_t>(l) + 1];
        netk::affine(L, in->data(), out.data());
        std::vector<Real>& sl = rec.s[static_cast<std::size_t>(l)];
        std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k) {
            const Real zk = p.omega0 * out[static_cast<std::size_t>(k)];
            sl[static_cast<std::size_t>(k)] = std::sin(zk);
            cl[static_cast<std::size_t>(k)] = std::cos(zk);
            out[static_cast<std::size_t>(k)] = sl[static_cast<std::size_t>(k)];
        }
        in = &out;
    }
    const Layer& head = p.layers.back();
    Real f;
    netk::affine(head, in->data(), &f);
    rec.value = f;
    return f;
}

inline Real forward(const NetworkParams& p, const Vec3& x) {
    thread_local EvalRecord rec;
    return forward_record(p, x, rec);
}

inline std::pair<Real, EvalRecord> forward_with_record(const NetworkParams& p, const Vec3& x) {
    EvalRecord rec;
    const Real f = forward_record(p, x, rec);
    return {f, std::move(rec)};
}

namespace detail {

struct AdjointScratch {
    std::vector<Real> cur, nxt;
    void ensure(int width) {
        cur.resize(static_cast<std::size_t>(width));
        nxt.resize(static_cast<std::size_t>(width));
    }
};

}  // namespace detail

// Gradient of f with respect to x by one adjoint sweep over the record.
inline Vec3 gradient_from_record(const NetworkParams& p, const EvalRecord& rec) {
    thread_local detail::AdjointScratch sc;
    sc.ensure(p.width());
    const int depth = p.depth();
    const Layer& head = p.layers.back();
    // delta on the head input
    for (int k = 0; k < head.in; ++k) sc.cur[static_cast<std::size_t>(k)] = head.w[static_cast<std::size_t>(k)];
    for (int l = depth - 1; l >= 0; --l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        const std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k)
            sc.cur[static_cast<std::size_t>(k)] *= p.omega0 * cl[static_cast<std::size_t>(k)];
        if (l == 0) {
            Real g[3];
            netk::linear_t(L, sc.cur.data(), g);
            return {g[0], g[1], g[2]};
        }
        netk::linear_t(L, sc.cur.data(), sc.nxt.data());
        std::swap(sc.cur, sc.nxt);
    }
    // depth == 0 cannot happen (init requires depth >= 1), but keep the head-only case sane
    return {head.w[0], head.w[1], head.w[2]};
}

inline std::pair<Real, Vec3> input_gradient(const NetworkParams& p, const Vec3& x) {
    thread_local EvalRecord rec;
    const Real f = forward_record(p, x, rec);
    return {f, gradient_from_record(p, rec)};
}

// First-order tangent stream pushed through a cached forward pass:
// directional derivative of every activation along `dir`. Costs matrix-vector
// products only; the trigonometric values are reused from the record.
struct TangentRecord {
    std::vector<std::vector<Real>> z;     // pre-activation tangents per hidden layer
    std::vector<std::vector<Real>> post;  // post[l] = tangent of the input to layer l
    Real out = 0;                         // tangent of f

    void ensure_shapes(const NetworkParams& p) {
        const std::size_t d = p.layers.size() - 1;
        z.resize(d);
        post.resize(d + 1);
        post[0].resize(3);
        for (std::size_t l = 0; l < d; ++l) {
            const std::size_t w = static_cast<std::size_t>(p.layers[l].out);
            z[l].resize(w);
            post[l + 1].resize(w);
        }
    }
};

inline void tangent_forward(const NetworkParams& p, const EvalRecord& rec, const Vec3& dir,
                            TangentRecord& t) {
    t.ensure_shapes(p);
    const int depth = p.depth();
    t.post[0][0] = dir.x;
    t.post[0][1] = dir.y;
    t.post[0][2] = dir.z;
    for (int l = 0; l < depth; ++l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        std::vector<Real>& zl = t.z[static_cast<std::size_t>(l)];
        std::vector<Real>& pl = t.post[static_cast<std::size_t>(l) + 1];
        netk::linear(L, t.post[static_cast<std::size_t>(l)].data(), zl.data());
        const std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k)
            pl[static_cast<std::size_t>(k)] =
                p.omega0 * cl[static_cast<std::size_t>(k)] * zl[static_cast<std::size_t>(k)];
    }
    const Layer& head = p.layers.back();
    netk::linear(head, t.post[static_cast<std::size_t>(depth)].data(), &t.out);
}

// Mixed second-order stream for the pair (tp, tq): tracks the cross
// derivative d^2/de dn of every activation at x + e*u + n*v. The head output
// equals u^T H v exactly.
inline void mixed_forward(const NetworkParams& p, const EvalRecord& rec, const TangentRecord& tp,
                          const TangentRecord& tq, TangentRecord& tm) {
    tm.ensure_shapes(p);
    const int depth = p.depth();
    std::fill(tm.post[0].begin(), tm.post[0].end(), 0.0);
    const Real w0 = p.omega0;
    for (int l = 0; l < depth; ++l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        std::vector<Real>& zm = tm.z[static_cast<std::size_t>(l)];
        std::vector<Real>& pm = tm.post[static_cast<std::size_t>(l) + 1];
        netk::linear(L, tm.post[static_cast<std::size_t>(l)].data(), zm.data());
        const std::vector<Real>& sl = rec.s[static_cast<std::size_t>(l)];
        const std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        const std::vector<Real>& zp = tp.z[static_cast<std::size_t>(l)];
        const std::vector<Real>& zq = tq.z[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            pm[kk] = w0 * cl[kk] * zm[kk] - w0 * w0 * sl[kk] * zp[kk] * zq[kk];
        }
    }
    const Layer& head = p.layers.back();
    netk::linear(head, tm.post[static_cast<std::size_t>(depth)].data(), &tm.out);
}

// H v by differentiating the adjoint sweep along v (forward-over-adjoint).
// Never materializes the 3x3 Hessian; linear in v.
inline Vec3 hvp(const NetworkParams& p, const Vec3& x, const Vec3& v) {
    thread_local EvalRecord rec;
    thread_local TangentRecord tan;
    thread_local std::vector<Real> delta, ddelta, t0, t1;
    forward_record(p, x, rec);
    tangent_forward(p, rec, v, tan);

    const int depth = p.depth();
    const int width = p.width();
    delta.resize(static_cast<std::size_t>(width));
    ddelta.resize(static_cast<std::size_t>(width));
    t0.resize(static_cast<std::size_t>(width));
    t1.resize(static_cast<std::size_t>(width));

    const Layer& head = p.layers.back();
    for (int k = 0; k < head.in; ++k) {
        delta[static_cast<std::size_t>(k)] = head.w[static_cast<std::size_t>(k)];
        ddelta[static_cast<std::size_t>(k)] = 0;
    }
    const Real w0 = p.omega0;
    for (int l = depth - 1; l >= 0; --l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        const std::vector<Real>& sl = rec.s[static_cast<std::size_t>(l)];
        const std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        const std::vector<Real>& zp = tan.z[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const Real dh = delta[kk] * w0 * cl[kk];
            const Real dhd = ddelta[kk] * w0 * cl[kk] - delta[kk] * w0 * w0 * sl[kk] * zp[kk];
            delta[kk] = dh;
            ddelta[kk] = dhd;
        }
        if (l == 0) {
            Real hv[3];
            netk::linear_t(L, ddelta.data(), hv);
            return {hv[0], hv[1], hv[2]};
        }
        netk::linear_t(L, delta.data(), t0.data());
        netk::linear_t(L, ddelta.data(), t1.data());
        std::swap(delta, t0);
        std::swap(ddelta, t1);
    }
    return {0, 0, 0};
}

// Full Hessian from three HVP calls with the coordinate directions,
// symmetrized by averaging the transposed entries.
inline Mat3Sym full_hessian(const NetworkParams& p, const Vec3& x) {
    const Vec3 h1 = hvp(p, x, {1, 0, 0});
    const Vec3 h2 = hvp(p, x, {0, 1, 0});
    const Vec3 h3 = hvp(p, x, {0, 0, 1});
    Mat3Sym h;
    h.xx = h1.x;
    h.yy = h2.y;
    h.zz = h3.z;
    h.xy = 0.5 * (h1.y + h2.x);
    h.xz = 0.5 * (h1.z + h3.x);
    h.yz = 0.5 * (h2.z + h3.y);
    return h;
}

// Reverse sweep over a forward pass augmented with up to two tangent streams
// and their mixed stream. Accumulates the parameter gradient of
//   cf * f + cp * (grad f . dp) + cq * (grad f . dq) + cm * (dp^T H dq)
// into `grad`. Absent streams take null records and zero seeds.
struct ReverseScratch {
    std::vector<Real> ra, rp, rq, rm;  // cotangents on post-activation streams
    std::vector<Real> za, zp, zq, zm;  // cotangents on pre-activation streams
    void ensure(int width) {
        for (auto* v : {&ra, &rp, &rq, &rm, &za, &zp, &zq, &zm})
            v->resize(static_cast<std::size_t>(width));
    }
};

inline void reverse_accumulate(const NetworkParams& p, const EvalRecord& rec,
                               const TangentRecord* tp, const TangentRecord* tq,
                               const TangentRecord* tm, Real cf, Real cp, Real cq, Real cm,
                               ParamGradient& grad, ReverseScratch& rs) {
    const int depth = p.depth();
    const int width = p.width();
    const Real w0 = p.omega0;
    rs.ensure(width);
    const bool has_p = tp != nullptr;
    const bool has_q = tq != nullptr;
    const bool has_m = tm != nullptr;

    // Head layer: f = W a + b (and the tangent outputs share W).
    const Layer& head = p.layers.back();
    Layer& ghead = grad.layers.back();
    {
        const std::size_t l = static_cast<std::size_t>(depth);
        const Real* a = rec.a[l].data();
        Real* gw = ghead.w.data();
        for (int k = 0; k < head.in; ++k) {
            Real acc = cf * a[k];
            if (has_p) acc += cp * tp->post[l][static_cast<std::size_t>(k)];
            if (has_q) acc += cq * tq->post[l][static_cast<std::size_t>(k)];
            if (has_m) acc += cm * tm->post[l][static_cast<std::size_t>(k)];
            gw[k] += acc;
        }
        ghead.b[0] += cf;
        for (int k = 0; k < head.in; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const Real wk = head.w[kk];
            rs.ra[kk] = cf * wk;
            if (has_p) rs.rp[kk] = cp * wk;
            if (has_q) rs.rq[kk] = cq * wk;
            if (has_m) rs.rm[kk] = cm * wk;
        }
    }

    for (int l = depth - 1; l >= 0; --l) {
        const std::size_t ll = static_cast<std::size_t>(l);
        const Layer& L = p.layers[ll];
        Layer& G = grad.layers[ll];
        const std::vector<Real>& sl = rec.s[ll];
        const std::vector<Real>& cl = rec.c[ll];
        for (int k = 0; k < L.out; ++k) {
            const std::size_t kk = static_cast<std::size_t>(k);
            const Real w0c = w0 * cl[kk];
            const Real w0w0s = w0 * w0 * sl[kk];
            Real za = rs.ra[kk] * w0c;
            if (has_p) {
                const Real zpk = tp->z[ll][kk];
                za -= rs.rp[kk] * w0w0s * zpk;
                rs.zp[kk] = rs.rp[kk] * w0c;
                if (has_m) rs.zp[kk] -= rs.rm[kk] * w0w0s * tq->z[ll][kk];
            }
            if (has_q) {
                const Real zqk = tq->z[ll][kk];
                za -= rs.rq[kk] * w0w0s * zqk;
                rs.zq[kk] = rs.rq[kk] * w0c;
                if (has_m) rs.zq[kk] -= rs.rm[kk] * w0w0s * tp->z[ll][kk];
            }
            if (has_m) {
                const Real zpk = tp->z[ll][kk];
                const Real zqk = tq->z[ll][kk];
                za -= rs.rm[kk] * (w0w0s * tm->z[ll][kk] + w0 * w0 * w0 * cl[kk] * zpk * zqk);
                rs.zm[kk] = rs.rm[kk] * w0c;
            }
            rs.za[kk] = za;
        }
        netk::outer_acc(G, rs.za.data(), rec.a[ll].data());
        if (has_p) {
            // weight gradient from the tangent stream; biases receive nothing
            for (int r = 0; r < L.out; ++r) {
                const Real dr = rs.zp[static_cast<std::size_t>(r)];
                if (dr == 0) continue;
                Real* row = &G.w[static_cast<std::size_t>(r) * L.in];
                const Real* x = tp->post[ll].data();
                for (int k = 0; k < L.in; ++k) row[k] += dr * x[k];
            }
        }
        if (has_q) {
            for (int r = 0; r < L.out; ++r) {
                const Real dr = rs.zq[static_cast<std::size_t>(r)];
                if (dr == 0) continue;
                Real* row = &G.w[static_cast<std::size_t>(r) * L.in];
                const Real* x = tq->post[ll].data();
                for (int k = 0; k < L.in; ++k) row[k] += dr * x[k];
            }
        }
        if (has_m) {
            for (int r = 0; r < L.out; ++r) {
                const Real dr = rs.zm[static_cast<std::size_t>(r)];
                if (dr == 0) continue;
                Real* row = &G.w[static_cast<std::size_t>(r) * L.in];
                const Real* x = tm->post[ll].data();
                for (int k = 0; k < L.in; ++k) row[k] += dr * x[k];
            }
        }
        if (l > 0) {
            netk::linear_t(L, rs.za.data(), rs.ra.data());
            if (has_p) netk::linear_t(L, rs.zp.data(), rs.rp.data());
            if (has_q) netk::linear_t(L, rs.zq.data(), rs.rq.data());
            if (has_m) netk::linear_t(L, rs.zm.data(), rs.rm.data());
        }
    }
}

// Adapter binding parameters to the generic field interface used by the
// geometry templates.
struct Net {
    const NetworkParams* params = nullptr;

    explicit Net(const NetworkParams& p) : params(&p) {}

    Real value(const Vec3& x) const { return forward(*params, x); }
    std::pair<Real, Vec3> value_and_gradient(const Vec3& x) const {
        return input_gradient(*params, x);
    }
    Vec3 hvp(const Vec3& x, const Vec3& v) const { return flatcad::hvp(*params, x, v); }
};

// ---------------------------------------------------------------------------
// Batch objective and its parameter gradient.

enum class Route { None, ProxyFD, ProxyAD, GaussBaseline };

inline const char* route_name(Route r) {
    switch (r) {
        case Route::None: return "none";
        case Route::ProxyFD: return "proxy_fd";
        case Route::ProxyAD: return "proxy_ad";
        case Route::GaussBaseline: return "gauss";
    }
    return "?";
}

// A shell point with its tangent frame. Frames are sampled geometry, frozen
// when the batch is assembled: the loss differentiates through the field
// values and gradients but not through the frame construction.
struct ShellSample {
    Vec3 x;
    Vec3 u, v;
};

struct BatchSpec {
    std::vector<Vec3> manifold;
    std::vector<Vec3> freespace;
    std::vector<ShellSample> shell;
    LossWeights weights;
    Route route = Route::None;
    Real fd_step = 1e-3;
    bool proxy_squared = false;
};

namespace detail {

struct ChunkState {
    ParamGradient grad;
    EvalRecord rec;
    EvalRecord rec_off[3];  // stencil offsets
    TangentRecord tp, tq, tm;
    TangentRecord axis_rec[3];   // coordinate tangents for the gauss route
    TangentRecord mixed_rec[6];  // one per Hessian entry pair
    ReverseScratch rs;
    std::vector<Real> aux;  // adjoint scratch
    Real sum_dm = 0, sum_dnm = 0, sum_eik = 0, sum_curv = 0;
    long skipped = 0;

    void reset(const NetworkParams& p) {
        if (grad.layers.empty()) grad = zeros_like(p);
        else fill_zero(grad);
        sum_dm = sum_dnm = sum_eik = sum_curv = 0;
        skipped = 0;
    }
};

inline Vec3 gradient_with_scratch(const NetworkParams& p, const EvalRecord& rec,
                                  std::vector<Real>& aux) {
    const int width = p.width();
    aux.resize(2 * static_cast<std::size_t>(width));
    Real* cur = aux.data();
    Real* nxt = aux.data() + width;
    const int depth = p.depth();
    const Layer& head = p.layers.back();
    for (int k = 0; k < head.in; ++k) cur[k] = head.w[static_cast<std::size_t>(k)];
    for (int l = depth - 1; l >= 0; --l) {
        const Layer& L = p.layers[static_cast<std::size_t>(l)];
        const std::vector<Real>& cl = rec.c[static_cast<std::size_t>(l)];
        for (int k = 0; k < L.out; ++k) cur[k] *= p.omega0 * cl[static_cast<std::size_t>(k)];
        if (l == 0) {
            Real g[3];
            netk::linear_t(L, cur, g);
            return {g[0], g[1], g[2]};
        }
        netk::linear_t(L, cur, nxt);
        std::swap(cur, nxt);
    }
    return {};
}

}  // namespace detail

// Reusable per-call state: one chunk slot per reduction lane so the parallel
// sweep never allocates and the chunk-ordered reduction stays deterministic.
struct GradWork {
    std::vector<detail::ChunkState> chunks{static_cast<std::size_t>(kReduceChunks)};
};

// Exact parameter gradient of the assembled total loss on one batch.
// Components of the returned breakdown are plain means, so they agree with
// the reductions in losses.hpp on the same values.
inline std::pair<LossBreakdown, ParamGradient> loss_parameter_gradient(const NetworkParams& params,
                                                                       const BatchSpec& batch,
                                                                       GradWork& work) {
    check_shapes(params);
    batch.weights.validate();
    const LossWeights& w = batch.weights;
    const Real n_man = static_cast<Real>(batch.manifold.size());
    const Real n_free = static_cast<Real>(batch.freespace.size());
    const Real n_shell = static_cast<Real>(batch.shell.size());

    for (auto& c : work.chunks) c.reset(params);

    // Surface term: pulls f to zero on the data points.
    if (!batch.manifold.empty() && w.w_dm > 0) {
        parallel_chunks(batch.manifold.size(), kReduceChunks, [&](int ci, std::size_t b, std::size_t e) {
            detail::ChunkState& st = work.chunks[static_cast<std::size_t>(ci)];
            for (std::size_t i = b; i < e; ++i) {
                const Real f = forward_record(params, batch.manifold[i], st.rec);
                st.sum_dm += std::abs(f);
                const Real sign = f > 0 ? 1.0 : (f < 0 ? -1.0 : 0.0);
                const Real cf = w.w_dm * sign / n_man;
                if (cf != 0)
                    reverse_accumulate(params, st.rec, nullptr, nullptr, nullptr, cf, 0, 0, 0,
                                       st.grad, st.rs);
            }
        });
    }

    // Free-space terms: sign-agnostic repulsion plus the Eikonal penalty,
    // both on the same fresh uniform batch. The Eikonal part differentiates
    // through the input gradient (second-order in the parameters).
    if (!batch.freespace.empty() && (w.w_dnm > 0 || w.w_eik > 0)) {
        parallel_chunks(batch.freespace.size(), kReduceChunks, [&](int ci, std::size_t b, std::size_t e) {
            detail::ChunkState& st = work.chunks[static_cast<std::size_t>(ci)];
            for (std::size_t i = b; i < e; ++i) {
                const Real f = forward_record(params, batch.freespace[i], st.rec);
                const Vec3 g = detail::gradient_with_scratch(params, st.rec, st.aux);
                const Real gn = norm(g);
                const Real expv = std::exp(-w.alpha * std::abs(f));
                st.sum_dnm += expv;
                st.sum_eik += (gn - 1) * (gn - 1);
                const Real sign = f > 0 ? 1.0 : (f < 0 ? -1.0 : 0.0);
                const Real cf = w.w_dnm * (-w.alpha) * sign * expv / n_free;
                Real cp = 0;
                Vec3 dir{0, 0, 0};
                if (w.w_eik > 0 && gn > eps_norm) {
                    // cotangent on grad f: 2 (|g| - 1) g / |g|
                    dir = g * (2 * (gn - 1) / gn);
                    cp = w.w_eik / n_free;
                }
                if (cp != 0) {
                    tangent_forward(params, st.rec, dir, st.tp);
                    reverse_accumulate(params, st.rec, &st.tp, nullptr, nullptr, cf, cp, 0, 0,
                                       st.grad, st.rs);
                } else if (cf != 0) {
                    reverse_accumulate(params, st.rec, nullptr, nullptr, nullptr, cf, 0, 0, 0,
                                       st.grad, st.rs);
                }
            }
        });
    }

    // Curvature term on the static shell.
    const bool want_proxy = (batch.route == Route::ProxyFD || batch.route == Route::ProxyAD) && w.w_proxy > 0;
    const bool want_gauss = batch.route == Route::GaussBaseline && w.w_gauss > 0;
    if (!batch.shell.empty() && (want_proxy || want_gauss)) {
        const Real h = batch.fd_step;
        parallel_chunks(batch.shell.size(), kReduceChunks, [&](int ci, std::size_t b, std::size_t e) {
            detail::ChunkState& st = work.chunks[static_cast<std::size_t>(ci)];
            for (std::size_t i = b; i < e; ++i) {
                const ShellSample& sp = batch.shell[i];
                forward_record(params, sp.x, st.rec);
                const Real f00 = st.rec.value;
                const Vec3 g = detail::gradient_with_scratch(params, st.rec, st.aux);
                const Real gn = norm(g);
                if (!(gn > eps_norm)) {
                    ++st.skipped;
                    continue;
                }
                if (batch.route == Route::ProxyFD) {
                    const Real fu = forward_record(params, sp.x + sp.u * h, st.rec_off[0]);
                    const Real fv = forward_record(params, sp.x + sp.v * h, st.rec_off[1]);
                    const Real fuv = forward_record(params, sp.x + (sp.u + sp.v) * h, st.rec_off[2]);
                    const Real d = (fuv - fu - fv + f00) / (h * h);
                    const Real s12 = d / gn;
                    const Real term = batch.proxy_squared ? s12 * s12 : std::abs(s12);
                    st.sum_curv += term;
                    const Real dt = batch.proxy_squared ? 2 * s12 : (s12 > 0 ? 1.0 : (s12 < 0 ? -1.0 : 0.0));
                    const Real scale = w.w_proxy / n_shell;
                    const Real cd = scale * dt / (gn * h * h);
                    // offsets carry plain value cotangents
                    reverse_accumulate(params, st.rec_off[2], nullptr, nullptr, nullptr, cd, 0, 0, 0,
                                       st.grad, st.rs);
                    reverse_accumulate(params, st.rec_off[0], nullptr, nullptr, nullptr, -cd, 0, 0, 0,
                                       st.grad, st.rs);
                    reverse_accumulate(params, st.rec_off[1], nullptr, nullptr, nullptr, -cd, 0, 0, 0,
                                       st.grad, st.rs);
                    // center point: value cotangent plus the gradient-norm path
                    const Vec3 dir = g * (scale * dt * (-s12 / gn) / gn);
                    tangent_forward(params, st.rec, dir, st.tp);
                    reverse_accumulate(params, st.rec, &st.tp, nullptr, nullptr, cd, 1.0, 0, 0,
                                       st.grad, st.rs);
                } else if (batch.route == Route::ProxyAD) {
                    tangent_forward(params, st.rec, sp.u, st.tp);
                    tangent_forward(params, st.rec, sp.v, st.tq);
                    mixed_forward(params, st.rec, st.tp, st.tq, st.tm);
                    const Real uhv = st.tm.out;
                    const Real s12 = uhv / gn;
                    const Real term = batch.proxy_squared ? s12 * s12 : std::abs(s12);
                    st.sum_curv += term;
                    const Real dt = batch.proxy_squared ? 2 * s12 : (s12 > 0 ? 1.0 : (s12 < 0 ? -1.0 : 0.0));
                    const Real scale = w.w_proxy / n_shell;
                    reverse_accumulate(params, st.rec, &st.tp, &st.tq, &st.tm, 0, 0, 0,
                                       scale * dt / gn, st.grad, st.rs);
                    if (dt != 0) {
                        // gradient-norm path: cotangent -dt*s12/gn on |g|
                        const Vec3 dir = g * (scale * dt * (-s12 / gn) / gn);
                        tangent_forward(params, st.rec, dir, st.tp);
                        reverse_accumulate(params, st.rec, &st.tp, nullptr, nullptr, 0, 1.0, 0, 0,
                                           st.grad, st.rs);
                    }
                } else {  // GaussBaseline: all nine Hessian entries, six mixed pairs
                    static const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
                    static const int pairs[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
                    Real hess[6];
                    for (int a = 0; a < 3; ++a) tangent_forward(params, st.rec, axes[a], st.axis_rec[a]);
                    for (int pi = 0; pi < 6; ++pi) {
                        mixed_forward(params, st.rec, st.axis_rec[pairs[pi][0]],
                                      st.axis_rec[pairs[pi][1]], st.mixed_rec[pi]);
                        hess[pi] = st.mixed_rec[pi].out;
                    }
                    const Real hxx = hess[0], hxy = hess[1], hxz = hess[2];
                    const Real hyy = hess[3], hyz = hess[4], hzz = hess[5];
                    // Gaussian curvature of the implicit surface via the adjugate:
                    // K = g^T adj(H) g / |g|^4
                    const Real adj_xx = hyy * hzz - hyz * hyz;
                    const Real adj_yy = hxx * hzz - hxz * hxz;
                    const Real adj_zz = hxx * hyy - hxy * hxy;
                    const Real adj_xy = hxz * hyz - hxy * hzz;
                    const Real adj_xz = hxy * hyz - hxz * hyy;
                    const Real adj_yz = hxz * hxy - hxx * hyz;
                    const Real num = g.x * g.x * adj_xx + g.y * g.y * adj_yy + g.z * g.z * adj_zz +
                                     2 * g.x * g.y * adj_xy + 2 * g.x * g.z * adj_xz +
                                     2 * g.y * g.z * adj_yz;
                    const Real gn4 = gn * gn * gn * gn;
                    const Real K = num / gn4;
                    st.sum_curv += std::abs(K);
                    const Real dt = K > 0 ? 1.0 : (K < 0 ? -1.0 : 0.0);
                    if (dt == 0) continue;
                    const Real scale = w.w_gauss * dt / (n_shell * gn4);
                    // dNum/dH entries (symmetric-matrix derivative, off-diagonals doubled)
                    Real cot[6];
                    cot[0] = g.y * g.y * hzz + g.z * g.z * hyy - 2 * g.y * g.z * hyz;  // d/dhxx
                    cot[3] = g.x * g.x * hzz + g.z * g.z * hxx - 2 * g.x * g.z * hxz;  // d/dhyy
                    cot[5] = g.x * g.x * hyy + g.y * g.y * hxx - 2 * g.x * g.y * hxy;  // d/dhzz
                    cot[1] = -2 * g.z * g.z * hxy - 2 * g.x * g.y * hzz + 2 * g.x * g.z * hyz +
                             2 * g.y * g.z * hxz;  // d/dhxy
                    cot[2] = -2 * g.y * g.y * hxz + 2 * g.x * g.y * hyz - 2 * g.x * g.z * hyy +
                             2 * g.y * g.z * hxy;  // d/dhxz
                    cot[4] = -2 * g.x * g.x * hyz + 2 * g.x * g.y * hxz + 2 * g.x * g.z * hxy -
                             2 * g.y * g.z * hxx;  // d/dhyz
                    for (int pi = 0; pi < 6; ++pi)
                        reverse_accumulate(params, st.rec, &st.axis_rec[pairs[pi][0]],
                                           &st.axis_rec[pairs[pi][1]], &st.mixed_rec[pi], 0, 0, 0,
                                           scale * cot[pi], st.grad, st.rs);
                    // gradient path: dK/dg = 2 adj(H) g / gn^4 - 4 K g / gn^2... folded into one
                    // vector cotangent on g
                    const Vec3 adjg{adj_xx * g.x + adj_xy * g.y + adj_xz * g.z,
                                    adj_xy * g.x + adj_yy * g.y + adj_yz * g.z,
                                    adj_xz * g.x + adj_yz * g.y + adj_zz * g.z};
                    const Vec3 dir = (adjg * 2.0 - g * (4.0 * num / (gn * gn))) *
                                     (w.w_gauss * dt / (n_shell * gn4));
                    tangent_forward(params, st.rec, dir, st.tp);
                    reverse_accumulate(params, st.rec, &st.tp, nullptr, nullptr, 0, 1.0, 0, 0,
                                       st.grad, st.rs);
                }
            }
        });
    }

    // Ordered reduction: chunk partials combined in chunk index order.
    ParamGradient total = zeros_like(params);
    Real sum_dm = 0, sum_dnm = 0, sum_eik = 0, sum_curv = 0;
    long skipped = 0;
    for (const auto& c : work.chunks) {
        accumulate(total, c.grad);
        sum_dm += c.sum_dm;
        sum_dnm += c.sum_dnm;
        sum_eik += c.sum_eik;
        sum_curv += c.sum_curv;
        skipped += c.skipped;
    }

    const Real used_shell = n_shell - static_cast<Real>(skipped);
    LossBreakdown bd;
    bd.dm = batch.manifold.empty() ? 0 : sum_dm / n_man;
    bd.dnm = batch.freespace.empty() ? 0 : sum_dnm / n_free;
    bd.eik = batch.freespace.empty() ? 0 : sum_eik / n_free;
    // The mean over the shell uses the full shell count: skipped samples are
    // rare degenerate points and contribute zero, matching the cotangent scale.
    bd.proxy = want_proxy && used_shell > 0 ? sum_curv / n_shell : 0;
    bd.gauss = want_gauss && used_shell > 0 ? sum_curv / n_shell : 0;
    bd.total = w.w_dm * bd.dm + w.w_dnm * bd.dnm + w.w_eik * bd.eik + w.w_proxy * bd.proxy +
               w.w_gauss * bd.gauss;
    if (!std::isfinite(bd.total))
        throw NonFiniteLoss("total loss is not finite");
    return {bd, std::move(total)};
}

inline std::pair<LossBreakdown, ParamGradient> loss_parameter_gradient(const NetworkParams& params,
                                                                       const BatchSpec& batch) {
    GradWork work;
    return loss_parameter_gradient(params, batch, work);
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic "FLATCAD1", then depth and width as uint32,
// omega0 as float64, then each layer's weight matrix (row-major) and bias
// vector as 64-bit little-endian floats.

inline void save_checkpoint(const NetworkParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write("FLATCAD1", 8);
    const std::uint32_t depth = static_cast<std::uint32_t>(p.depth());
    const std::uint32_t width = static_cast<std::uint32_t>(p.width());
    out.write(reinterpret_cast<const char*>(&depth), 4);
    out.write(reinterpret_cast<const char*>(&width), 4);
    out.write(reinterpret_cast<const char*>(&p.omega0), 8);
    for (const Layer& L : p.layers) {
        out.write(reinterpret_cast<const char*>(L.w.data()),
                  static_cast<std::streamsize>(L.w.size() * sizeof(Real)));
        out.write(reinterpret_cast<const char*>(L.b.data()),
                  static_cast<std::streamsize>(L.b.size() * sizeof(Real)));
    }
    if (!out) throw IoError("write failed: " + path);
}

inline NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "FLATCAD1", 8) != 0)
        throw IoError("not a FLATCAD1 checkpoint: " + path);
    std::uint32_t depth = 0, width = 0;
    Real omega0 = 0;
    in.read(reinterpret_cast<char*>(&depth), 4);
    in.read(reinterpret_cast<char*>(&width), 4);
    in.read(reinterpret_cast<char*>(&omega0), 8);
    if (!in || depth < 1 || width < 1 || depth > 1024 || width > 65536)
        throw IoError("corrupt checkpoint header: " + path);
    NetworkParams p;
    p.omega0 = omega0;
    auto read_layer = [&](int lin, int lout) {
        Layer L;
        L.in = lin;
        L.out = lout;
        L.w.resize(static_cast<std::size_t>(lin) * lout);
        L.b.resize(static_cast<std::size_t>(lout));
        in.read(reinterpret_cast<char*>(L.w.data()),
                static_cast<std::streamsize>(L.w.size() * sizeof(Real)));
        in.read(reinterpret_cast<char*>(L.b.data()),
                static_cast<std::streamsize>(L.b.size() * sizeof(Real)));
        p.layers.push_back(std::move(L));
    };
    read_layer(3, static_cast<int>(width));
    for (std::uint32_t l = 1; l < depth; ++l) read_layer(static_cast<int>(width), static_cast<int>(width));
    read_layer(static_cast<int>(width), 1);
    if (!in) throw IoError("truncated checkpoint: " + path);
    return p;
}

// Plain-text export for debugging; full precision, one layer per block.
inline void export_params_text(const NetworkParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.precision(17);
    out << "{\n  \"omega0\": " << p.omega0 << ",\n  \"depth\": " << p.depth()
        << ",\n  \"width\": " << p.width() << ",\n  \"layers\": [\n";
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const Layer& L = p.layers[l];
        out << "    {\"in\": " << L.in << ", \"out\": " << L.out << ", \"w\": [";
        for (std::size_t i = 0; i < L.w.size(); ++i) out << (i ? "," : "") << L.w[i];
        out << "], \"b\": [";
        for (std::size_t i = 0; i < L.b.size(); ++i) out << (i ? "," : "") << L.b[i];
        out << "]}" << (l + 1 < p.layers.size() ? "," : "") << "\n";
    }
    out << "  ]\n}\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace flatcad
