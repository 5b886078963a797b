#pragma once

#include <cmath>
#include <span>

#include "flatcad/errors.hpp"
#include "flatcad/linalg.hpp"

namespace flatcad {

// Loss weights. Defaults follow the recommended reconstruction settings:
// the data term is weighted 7000, the sign-agnostic free-space term 600,
// the Eikonal term 50, and the curvature term 10 with alpha = 100.
// At most one of w_proxy / w_gauss may be nonzero in a run; the curvature
// routes are exclusive.
struct LossWeights {
    Real w_dm = 7000;
    Real w_dnm = 600;
    Real w_eik = 50;
    Real w_proxy = 10;
    Real w_gauss = 0;
    Real alpha = 100;

    void validate() const {
        if (!(alpha > 0)) throw ConfigError("alpha must be positive");
        if (w_dm < 0 || w_dnm < 0 || w_eik < 0 || w_proxy < 0 || w_gauss < 0)
            throw ConfigError("loss weights must be non-negative");
        if (w_proxy > 0 && w_gauss > 0)
            throw ConfigError("w_proxy and w_gauss are mutually exclusive");
    }
};

struct LossBreakdown {
    Real dm = 0;     // mean |f| over surface points
    Real dnm = 0;    // mean exp(-alpha |f|) over free-space points
    Real eik = 0;    // mean (|grad| - 1)^2
    Real proxy = 0;  // mean |S12| (or mean S12^2 in the squared variant)
    Real gauss = 0;  // mean |K|
    Real total = 0;
};

inline Real manifold_loss(std::span<const Real> values) {
    if (values.empty()) throw EmptyBatch("manifold_loss");
    Real sum = 0;
    for (Real v : values) sum += std::abs(v);
    return sum / static_cast<Real>(values.size());
}

inline Real nonmanifold_loss(std::span<const Real> values, Real alpha) {
    if (values.empty()) throw EmptyBatch("nonmanifold_loss");
    if (!(alpha > 0)) throw ConfigError("alpha must be positive");
    Real sum = 0;
    for (Real v : values) sum += std::exp(-alpha * std::abs(v));
    return sum / static_cast<Real>(values.size());
}

inline Real eikonal_loss(std::span<const Real> grad_norms) {
    if (grad_norms.empty()) throw EmptyBatch("eikonal_loss");
    Real sum = 0;
    for (Real n : grad_norms) {
        const Real d = n - 1;
        sum += d * d;
    }
    return sum / static_cast<Real>(grad_norms.size());
}

inline Real proxy_loss(std::span<const Real> s12_values) {
    if (s12_values.empty()) throw EmptyBatch("proxy_loss");
    Real sum = 0;
    for (Real s : s12_values) sum += std::abs(s);
    return sum / static_cast<Real>(s12_values.size());
}

// Squared variant, exposed as a config switch.
inline Real proxy_loss_squared(std::span<const Real> s12_values) {
    if (s12_values.empty()) throw EmptyBatch("proxy_loss_squared");
    Real sum = 0;
    for (Real s : s12_values) sum += s * s;
    return sum / static_cast<Real>(s12_values.size());
}

inline Real gauss_loss(std::span<const Real> k_values) {
    if (k_values.empty()) throw EmptyBatch("gauss_loss");
    Real sum = 0;
    for (Real k : k_values) sum += std::abs(k);
    return sum / static_cast<Real>(k_values.size());
}

inline LossBreakdown total_loss(Real dm, Real dnm, Real eik, Real proxy, Real gauss,
                                const LossWeights& w) {
    w.validate();
    LossBreakdown b{dm, dnm, eik, proxy, gauss, 0};
    b.total = w.w_dm * dm + w.w_dnm * dnm + w.w_eik * eik + w.w_proxy * proxy + w.w_gauss * gauss;
    return b;
}

}  // namespace flatcad
