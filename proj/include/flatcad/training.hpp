#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "flatcad/errors.hpp"
#include "flatcad/geometry.hpp"
#include "flatcad/kdtree.hpp"
#include "flatcad/losses.hpp"
#include "flatcad/net.hpp"
#include "flatcad/sampling.hpp"

namespace flatcad {

struct Seeds {
    std::uint64_t init = 1;
    std::uint64_t shell = 2;
    std::uint64_t batch = 3;
    std::uint64_t theta = 4;
    std::uint64_t freespace = 5;
};

struct AdamConfig {
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
};

struct TrainConfig {
    LossWeights weights;
    Route route = Route::ProxyFD;
    Real fd_step = 1e-3;
    bool proxy_squared = false;

    int depth = 4;
    int width = 256;
    Real omega0 = 30.0;

    Real lr = 5e-5;
    int max_iters = 10000;
    int plateau_window = 1500;
    int eval_every = 250;
    std::size_t batch_manifold = 20000;
    std::size_t batch_freespace = 20000;
    std::size_t shell_count = 15000;
    int knn_k = 50;
    int checkpoint_every = 1000;

    Seeds seeds;
    AdamConfig adam;

    void validate() const {
        weights.validate();
        if (!(lr > 0)) throw ConfigError("lr must be positive");
        if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
        if (plateau_window > max_iters && max_iters > 0)
            throw ConfigError("plateau_window must not exceed max_iters");
        if (batch_manifold < 1 || batch_freespace < 1 || shell_count < 1)
            throw ConfigError("batch sizes must be at least 1");
        if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
    }
};

struct AdamState {
    ParamGradient m, v;
    long t = 0;
};

inline AdamState make_adam_state(const NetworkParams& p) {
    return {zeros_like(p), zeros_like(p), 0};
}

// One Adam update. Standard constants; bias-corrected moments.
inline void adam_step(NetworkParams& params, AdamState& state, const ParamGradient& grad, Real lr,
                      const AdamConfig& cfg = {}) {
    if (state.m.layers.size() != params.layers.size() ||
        grad.layers.size() != params.layers.size())
        throw ShapeMismatch("adam_step: layer count mismatch");
    state.t += 1;
    const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(state.t));
    const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(state.t));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& P = params.layers[l];
        Layer& M = state.m.layers[l];
        Layer& V = state.v.layers[l];
        const Layer& G = grad.layers[l];
        if (P.w.size() != G.w.size() || P.b.size() != G.b.size())
            throw ShapeMismatch("adam_step: layer shape mismatch");
        auto update = [&](std::vector<Real>& p, std::vector<Real>& m, std::vector<Real>& v,
                          const std::vector<Real>& g) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
                const Real mhat = m[i] / bc1;
                const Real vhat = v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        };
        update(P.w, M.w, V.w, G.w);
        update(P.b, M.b, V.b, G.b);
    }
}

// Cheap reconstruction-distance signal for plateau detection: project each
// probe point once onto the zero set along the gradient, then take the
// symmetric mean nearest-neighbor distance against the reference set.
template <ScalarField F>
Real cd_proxy_estimate(const F& field, const std::vector<Vec3>& probes,
                       const std::vector<Vec3>& references) {
    if (probes.empty() || references.empty()) throw EmptySet("cd_proxy_estimate");
    std::vector<Vec3> projected(probes.size());
    std::vector<char> ok(probes.size(), 0);
    parallel_chunks(probes.size(), kReduceChunks, [&](int, std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto [f, g] = field.value_and_gradient(probes[i]);
            const Real g2 = norm_squared(g);
            if (!(std::sqrt(g2) > eps_norm) || !std::isfinite(f) || !finite(g)) continue;
            projected[i] = probes[i] - g * (f / g2);
            ok[i] = 1;
        }
    });
    std::vector<Vec3> proj;
    proj.reserve(projected.size());
    for (std::size_t i = 0; i < projected.size(); ++i)
        if (ok[i]) proj.push_back(projected[i]);
    if (proj.empty()) throw DegenerateGradient("cd_proxy_estimate: all probes degenerate");

    KdTree ref_tree(references);
    KdTree proj_tree(proj);
    Real sum_ab = 0, sum_ba = 0;
    for (const Vec3& p : proj) sum_ab += ref_tree.nearest(p).dist;
    for (const Vec3& r : references) sum_ba += proj_tree.nearest(r).dist;
    return 0.5 * (sum_ab / static_cast<Real>(proj.size()) +
                  sum_ba / static_cast<Real>(references.size()));
}

struct IterationRecord {
    int iteration = 0;
    LossBreakdown loss;
    Real iter_ms = 0;
    Real cd_eval = std::numeric_limits<Real>::quiet_NaN();  // NaN when not evaluated

    bool has_cd() const { return !std::isnan(cd_eval); }
};

struct RunHistory {
    std::vector<IterationRecord> iterations;
    int best_iteration = -1;
    Real best_cd = std::numeric_limits<Real>::infinity();
    Real mean_iter_ms = 0;
    Real std_iter_ms = 0;
};

// Optional observation hooks; used by the CLI for periodic checkpoints.
struct TrainCallbacks {
    std::function<void(int iteration, const NetworkParams&)> on_checkpoint;
    std::function<void(int iteration, const NetworkParams&)> on_best;
};

// Full optimization protocol over a normalized cloud:
//  - static Gaussian shell built once from the k-NN radii,
//  - per iteration: a manifold minibatch, a fresh uniform free-space batch,
//    a fresh frame angle per shell point, one Adam step,
//  - reconstruction-distance evaluation every eval_every iterations with
//    early stop once the best value stops improving for plateau_window
//    iterations,
//  - returns the parameters from the best evaluation plus the history.
inline std::pair<NetworkParams, RunHistory> train(const TrainConfig& cfg, const PointCloud& cloud,
                                                  const TrainCallbacks& callbacks = {}) {
    cfg.validate();
    if (cloud.points.empty()) throw EmptyCloud("train");
    const std::size_t n = cloud.points.size();

    NetworkParams params = init_siren(cfg.depth, cfg.width, cfg.omega0, cfg.seeds.init);
    AdamState adam = make_adam_state(params);

    const std::vector<Real> sigmas = knn_sigma(cloud, cfg.knn_k);
    const ShellSet shell = build_shell(cloud, sigmas, cfg.shell_count, cfg.seeds.shell);

    // Plateau signal: every cloud point is a probe so both Chamfer directions
    // measure projection displacement rather than sampling density.
    const std::vector<Vec3>& cd_probes = cloud.points;
    const std::vector<Vec3>& cd_refs = cloud.points;

    RunHistory history;
    history.iterations.reserve(static_cast<std::size_t>(cfg.max_iters));
    NetworkParams best_params = params;
    int best_improve_iter = 0;

    BatchSpec batch;
    batch.weights = cfg.weights;
    batch.route = cfg.route;
    batch.fd_step = cfg.fd_step;
    batch.proxy_squared = cfg.proxy_squared;
    batch.shell.resize(shell.points.size());
    GradWork work;

    const std::size_t m_manifold = std::min(cfg.batch_manifold, n);
    const bool curvature_on = (cfg.route == Route::ProxyFD || cfg.route == Route::ProxyAD)
                                  ? cfg.weights.w_proxy > 0
                                  : (cfg.route == Route::GaussBaseline && cfg.weights.w_gauss > 0);

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();

        const std::vector<int> sel = minibatch(n, m_manifold, cfg.seeds.batch, static_cast<std::uint64_t>(iter));
        batch.manifold.resize(sel.size());
        for (std::size_t i = 0; i < sel.size(); ++i)
            batch.manifold[i] = cloud.points[static_cast<std::size_t>(sel[i])];

        batch.freespace = sample_uniform_box(cfg.batch_freespace, cfg.seeds.freespace,
                                             static_cast<std::uint64_t>(iter));

        if (curvature_on) {
            // Fresh frame angle per shell point; frames frozen for this step.
            Rng theta_rng = make_engine(cfg.seeds.theta, 19, static_cast<std::uint64_t>(iter));
            std::uniform_real_distribution<Real> uth(0.0, 2 * 3.14159265358979323846);
            std::vector<Real> thetas(shell.points.size());
            for (Real& t : thetas) t = uth(theta_rng);
            const Net net(params);
            parallel_chunks(shell.points.size(), kReduceChunks, [&](int, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) {
                    ShellSample& sp = batch.shell[i];
                    sp.x = shell.points[i];
                    const auto [f, g] = net.value_and_gradient(sp.x);
                    (void)f;
                    const Real gn = norm(g);
                    if (gn > eps_norm) {
                        const auto [u0, v0] = base_frame(g / gn);
                        const auto [u, v] = rotate_frame(u0, v0, thetas[i]);
                        sp.u = u;
                        sp.v = v;
                    } else {
                        sp.u = {1, 0, 0};
                        sp.v = {0, 1, 0};
                    }
                }
            });
        } else {
            batch.shell.clear();
        }

        LossBreakdown bd;
        ParamGradient grad;
        try {
            std::tie(bd, grad) = loss_parameter_gradient(params, batch, work);
        } catch (const NonFiniteLoss&) {
            throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(iter));
        }
        adam_step(params, adam, grad, cfg.lr, cfg.adam);

        const auto t1 = std::chrono::steady_clock::now();
        IterationRecord rec;
        rec.iteration = iter;
        rec.loss = bd;
        rec.iter_ms = std::chrono::duration<Real, std::milli>(t1 - t0).count();

        if ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.max_iters) {
            const Net net(params);
            const Real cd = cd_proxy_estimate(net, cd_probes, cd_refs);
            rec.cd_eval = cd;
            if (cd < history.best_cd - 1e-6) best_improve_iter = iter;
            if (cd < history.best_cd) {
                history.best_cd = cd;
                history.best_iteration = iter;
                best_params = params;
                if (callbacks.on_best) callbacks.on_best(iter, params);
            }
        }
        history.iterations.push_back(rec);

        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 &&
            callbacks.on_checkpoint)
            callbacks.on_checkpoint(iter, params);

        if (history.best_iteration >= 0 && iter - best_improve_iter >= cfg.plateau_window) break;
    }

    if (history.best_iteration < 0) {
        // max_iters == 0 or no evaluation happened; fall back to the last state.
        best_params = params;
    }

    if (!history.iterations.empty()) {
        Real sum = 0;
        for (const auto& r : history.iterations) sum += r.iter_ms;
        history.mean_iter_ms = sum / static_cast<Real>(history.iterations.size());
        Real var = 0;
        for (const auto& r : history.iterations) {
            const Real d = r.iter_ms - history.mean_iter_ms;
            var += d * d;
        }
        history.std_iter_ms = std::sqrt(var / static_cast<Real>(history.iterations.size()));
    }
    return {std::move(best_params), std::move(history)};
}

}  // namespace flatcad
