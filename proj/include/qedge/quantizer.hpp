#pragma once

// Dynamic uniform quantizer with saturation, plus the zoom-variable state
// machine that drives it.
//
//   q_mu(x) = mu * q_u(x / mu)
//   q_u(y)  = (floor(y / delta) + 1/2) * delta   for |y| <= M
//           = sign(y) * (M - delta / 2)          otherwise
//
// The interior branch is clamped to +-(M - delta/2). Unclamped, q_u(M) would be
// M + delta/2 whenever M/delta is an integer, and q would not be monotone.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "qedge/errors.hpp"
#include "qedge/spectral.hpp"

namespace qedge {

struct QuantizerConfig {
    double delta = 0.1;  // cell width (quantization error parameter)
    double range = 63;   // M, saturation threshold

    void validate() const {
        if (!(delta > 0.0) || !std::isfinite(delta)) throw ValidationError("quantizer: delta must be > 0");
        if (!std::isfinite(range) || !(range > delta)) throw ValidationError("quantizer: M must exceed delta");
    }

    double saturation_level() const noexcept { return range - delta / 2.0; }

    friend bool operator==(const QuantizerConfig&, const QuantizerConfig&) = default;
};

/// Base quantizer q_u (mu = 1).
inline double quantize_unit(double y, const QuantizerConfig& cfg) {
    const double top = cfg.saturation_level();
    if (std::abs(y) <= cfg.range) {
        const double q = (std::floor(y / cfg.delta) + 0.5) * cfg.delta;
        return std::clamp(q, -top, top);
    }
    return y < 0.0 ? -top : top;
}

inline double quantize_scalar(double x, const QuantizerConfig& cfg, double mu) {
    if (!(mu > 0.0)) throw DomainError("quantize: zoom variable mu must be > 0, got " + std::to_string(mu));
    return mu * quantize_unit(x / mu, cfg);
}

/// True when x lies inside the quantizer range mu * M (non-strict).
inline bool in_range(double x, const QuantizerConfig& cfg, double mu) { return std::abs(x / mu) <= cfg.range; }

template <typename Derived>
Matrix quantize(const Eigen::MatrixBase<Derived>& x, const QuantizerConfig& cfg, double mu) {
    if (!(mu > 0.0)) throw DomainError("quantize: zoom variable mu must be > 0, got " + std::to_string(mu));
    return x.unaryExpr([&](double v) { return mu * quantize_unit(v / mu, cfg); });
}

inline Vector quantize_vector(const Vector& x, const QuantizerConfig& cfg, double mu) {
    return quantize(x, cfg, mu);
}

template <typename Derived>
bool all_in_range(const Eigen::MatrixBase<Derived>& x, const QuantizerConfig& cfg, double mu) {
    return x.size() == 0 || (x.array() / mu).abs().maxCoeff() <= cfg.range;
}

/// Zoom-out detection: |q_mu(z_T)| <= shrink * M * mu - delta * mu certifies
/// that the true state lies in R1(mu). `shrink` = sqrt(lambda_min(P) / lambda_max(P)).
inline bool in_range_detect(double q_value_norm, const QuantizerConfig& cfg, double mu, double shrink) {
    if (!(shrink > 0.0 && shrink <= 1.0)) {
        throw DomainError("in_range_detect: shrink must lie in (0, 1], got " + std::to_string(shrink));
    }
    if (!(mu > 0.0)) throw DomainError("in_range_detect: mu must be > 0");
    return q_value_norm <= shrink * cfg.range * mu - cfg.delta * mu;
}

enum class ZoomPhase { ZoomOut, ZoomIn, Converged };

inline const char* to_string(ZoomPhase p) {
    switch (p) {
        case ZoomPhase::ZoomOut: return "zoom_out";
        case ZoomPhase::ZoomIn: return "zoom_in";
        case ZoomPhase::Converged: return "converged";
    }
    return "?";
}

enum class ZoomEvent { ScheduleTick, DetectionSuccess };

struct ZoomState {
    double mu = 1.0;
    ZoomPhase phase = ZoomPhase::ZoomOut;
    int k = 0;            // ticks since the current phase began
    double tau = 1.0;     // zoom-out tick interval [s]
    double dwell = 0.0;   // zoom-in tick interval [s]
    double mu_entry = 1.0;  // mu when the current phase began; mu == mu_entry * factor^k

    static ZoomState zoom_out(double mu0, double tau) { return {mu0, ZoomPhase::ZoomOut, 0, tau, 0.0, mu0}; }
    static ZoomState zoom_in(double mu0, double dwell) { return {mu0, ZoomPhase::ZoomIn, 0, 0.0, dwell, mu0}; }
};

/// Advances the zoom state machine by one event. Pure: returns the new state.
///
/// ZoomOut + tick      -> mu grows by gamma_out
/// ZoomOut + detection -> ZoomIn with k = 0, mu unchanged
/// ZoomIn  + tick      -> mu shrinks by omega
/// Converged is terminal; ticks leave it unchanged.
inline ZoomState zoom_step(const ZoomState& z, ZoomEvent event, double omega, double gamma_out) {
    if (!(z.mu > 0.0)) throw DomainError("zoom_step: mu must be > 0");
    ZoomState next = z;
    switch (z.phase) {
        case ZoomPhase::ZoomOut:
            if (event == ZoomEvent::DetectionSuccess) {
                next.phase = ZoomPhase::ZoomIn;
                next.k = 0;
                next.mu_entry = z.mu;
                return next;
            }
            if (!(gamma_out > 1.0)) throw DomainError("zoom_step: zoom-out growth factor must exceed 1");
            next.k = z.k + 1;
            next.mu = z.mu_entry * std::pow(gamma_out, next.k);
            return next;
        case ZoomPhase::ZoomIn:
            if (event == ZoomEvent::DetectionSuccess) {
                throw ProtocolError("zoom_step: detection is only meaningful while zooming out");
            }
            if (!(omega > 0.0 && omega < 1.0)) throw DomainError("zoom_step: zoom-in factor must lie in (0, 1)");
            next.k = z.k + 1;
            next.mu = z.mu_entry * std::pow(omega, next.k);
            return next;
        case ZoomPhase::Converged:
            if (event == ZoomEvent::DetectionSuccess) {
                throw ProtocolError("zoom_step: detection after convergence");
            }
            return next;
    }
    return next;
}

struct BitBudget {
    std::int64_t levels = 0;  // 2M + 1
    int bits = 0;             // ceil(log2(2M))
};

/// Level and bit count for an integer level parameter M.
inline BitBudget bit_budget(const QuantizerConfig& cfg) {
    if (cfg.range < 1.0 || cfg.range != std::floor(cfg.range) || cfg.range > 1e15) {
        throw DomainError("bit_budget: M must be a positive integer level count, got " + std::to_string(cfg.range));
    }
    const auto m = static_cast<std::uint64_t>(cfg.range);
    return {static_cast<std::int64_t>(2 * m + 1), static_cast<int>(std::bit_width(2 * m - 1))};
}

/// Bits needed when M and delta share units: 2M/delta interior cells.
inline int cell_bits(const QuantizerConfig& cfg) {
    const double cells = std::ceil(2.0 * cfg.range / cfg.delta - 1e-9);
    return static_cast<int>(std::ceil(std::log2(cells) - 1e-12));
}

}  // namespace qedge
