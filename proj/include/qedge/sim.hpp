#pragma once

// Hybrid closed-loop simulation: N double integrators in R^n driven by the
// quantized relative-state protocol, with the zoom variable mu following the
// zoom-out / zoom-in schedule.
//
// Node states are stored as N x n matrices (row i = agent i), so every
// Kronecker product with I_n becomes an ordinary matrix product:
// (E^T (x) I_n) x  <->  E^T X.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qedge/errors.hpp"
#include "qedge/graph.hpp"
#include "qedge/quantizer.hpp"
#include "qedge/stability.hpp"

namespace qedge {

struct AgentState {
    Matrix x;  // N x n positions
    Matrix v;  // N x n velocities
    double t = 0.0;

    static AgentState zero(int nodes, int n) { return {Matrix::Zero(nodes, n), Matrix::Zero(nodes, n), 0.0}; }
    bool finite() const { return x.allFinite() && v.allFinite(); }
};

/// Everything the closed loop needs, derived once from the graph.
struct Network {
    DirectedGraph graph;
    GraphMatrices matrices;
    TreeDecomposition tree;
    StabilityCertificate cert;

    int state_dim() const noexcept { return cert.state_dim; }
};

inline Network make_network(DirectedGraph g, std::optional<std::vector<int>> tree_edges, double sigma, double epsilon,
                            const QuantizerConfig& cfg, int n, const Tolerances& tol = {}) {
    GraphMatrices m = build_matrices(g);
    TreeDecomposition d = tree_edges ? decompose(g, m, std::span<const int>(*tree_edges), tol) : decompose(g, m, tol);
    StabilityCertificate c = build_certificate(d, sigma, epsilon, cfg, n);
    return {std::move(g), std::move(m), std::move(d), std::move(c)};
}

struct EdgeView {
    Matrix x_e, v_e;  // L x n
    Matrix x_T, v_T;  // (N-1) x n
    Matrix x_C, v_C;  // (L-N+1) x n, read directly from E_C^T
    Matrix q_x, q_v;  // quantized edge states
    Matrix e_x, e_v;  // quantization errors q - edge state
    ReducedState z_T; // [x_T; v_T]
    double omega_norm = 0.0;
    bool in_range = true;  // every edge component within mu * M

    /// Largest gap between x_C and the reconstruction T^T x_T (and the v analogue).
    double reconstruction_gap(const TreeDecomposition& d) const {
        if (x_C.size() == 0) return 0.0;
        const double gx = (x_C - d.T.transpose() * x_T).cwiseAbs().maxCoeff();
        const double gv = (v_C - d.T.transpose() * v_T).cwiseAbs().maxCoeff();
        return std::max(gx, gv);
    }
};

inline EdgeView edge_views(const AgentState& s, const GraphMatrices& m, const TreeDecomposition& d,
                           const QuantizerConfig& cfg, double mu) {
    EdgeView e;
    e.x_e = m.incidence.transpose() * s.x;
    e.v_e = m.incidence.transpose() * s.v;
    e.x_T = d.tree_incidence.transpose() * s.x;
    e.v_T = d.tree_incidence.transpose() * s.v;
    e.x_C = d.cotree_incidence.transpose() * s.x;
    e.v_C = d.cotree_incidence.transpose() * s.v;
    e.q_x = quantize(e.x_e, cfg, mu);
    e.q_v = quantize(e.v_e, cfg, mu);
    e.e_x = e.q_x - e.x_e;
    e.e_v = e.q_v - e.v_e;
    e.z_T.resize(e.x_T.rows() * 2, s.x.cols());
    e.z_T << e.x_T, e.v_T;
    e.omega_norm = std::sqrt(e.e_x.squaredNorm() + e.e_v.squaredNorm());
    e.in_range = all_in_range(e.x_e, cfg, mu) && all_in_range(e.v_e, cfg, mu);
    return e;
}

/// Stacked form u = -s^2 E_in_w q(E^T x) - s^3 E_in_w q(E^T v), from precomputed quantized edge states.
inline Matrix control_from_quantized(const Matrix& q_x, const Matrix& q_v, const GraphMatrices& m, double sigma) {
    const double s2 = sigma * sigma;
    return -s2 * (m.weighted_in_incidence * q_x) - s2 * sigma * (m.weighted_in_incidence * q_v);
}

inline Matrix control_input(const AgentState& s, const GraphMatrices& m, const QuantizerConfig& cfg, double mu,
                            double sigma) {
    if (s.x.rows() != m.incidence.rows() || s.v.rows() != m.incidence.rows() || s.x.cols() != s.v.cols()) {
        throw ValidationError("control_input: state has wrong shape");
    }
    return control_from_quantized(quantize(m.incidence.transpose() * s.x, cfg, mu),
                                  quantize(m.incidence.transpose() * s.v, cfg, mu), m, sigma);
}

/// Node form u_i = s^2 sum_j a_ij q(x_j - x_i) + s^3 sum_j a_ij q(v_j - v_i),
/// summed over the in-neighbours j of i.
inline Matrix control_input_neighbor_sum(const AgentState& s, const DirectedGraph& g, const QuantizerConfig& cfg,
                                         double mu, double sigma) {
    if (s.x.rows() != g.node_count() || s.v.rows() != g.node_count() || s.x.cols() != s.v.cols()) {
        throw ValidationError("control_input: state has wrong shape");
    }
    Matrix u = Matrix::Zero(s.x.rows(), s.x.cols());
    for (const Edge& e : g.edges()) {
        for (Eigen::Index d = 0; d < s.x.cols(); ++d) {
            const double qx = quantize_scalar(s.x(e.tail, d) - s.x(e.head, d), cfg, mu);
            const double qv = quantize_scalar(s.v(e.tail, d) - s.v(e.head, d), cfg, mu);
            u(e.head, d) += sigma * sigma * e.weight * qx + sigma * sigma * sigma * e.weight * qv;
        }
    }
    return u;
}

/// One classical RK4 step of x' = v, v' = u with u held over the step.
inline AgentState step(const AgentState& s, const Matrix& u, double dt) {
    if (!(dt > 0.0)) throw DomainError("step: dt must be > 0");
    const Matrix k1x = s.v;
    const Matrix k2x = s.v + 0.5 * dt * u;
    const Matrix k3x = s.v + 0.5 * dt * u;
    const Matrix k4x = s.v + dt * u;
    AgentState out;
    out.x = s.x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    out.v = s.v + (dt / 6.0) * (u + 2.0 * u + 2.0 * u + u);
    out.t = s.t + dt;
    return out;
}

struct SimOptions {
    double dt = 1e-3;
    double horizon = 100.0;
    double tau = 1.0;        // zoom-out tick interval
    double gamma_out = 2.0;  // zoom-out growth per tick
    std::optional<double> mu0;  // set: start zooming in at once (initial state must lie in R1(mu0))
    double kappa = 10.0;
    double conv_floor = 1e-6;
    bool stop_on_convergence = false;
    int sample_every = 10;
    double decay_slack = 0.05;
};

struct Sample {
    double t = 0.0;
    double mu = 0.0;
    ZoomPhase phase = ZoomPhase::ZoomOut;
    double V = 0.0;
    double norm_x_e = 0.0, norm_v_e = 0.0, norm_omega = 0.0;
    Matrix x, v, x_e, v_e;
    ReducedState z_T;
};

enum class EventKind { ZoomOutTick, Detection, ZoomInTick, Converged };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::ZoomOutTick: return "zoom_out_tick";
        case EventKind::Detection: return "detection";
        case EventKind::ZoomInTick: return "zoom_in_tick";
        case EventKind::Converged: return "converged";
    }
    return "?";
}

struct Event {
    EventKind kind = EventKind::ZoomOutTick;
    double t = 0.0;
    int k = 0;
    double mu_before = 0.0;
    double mu_after = 0.0;
    double V = 0.0;  // at the event instant
    bool in_R1 = false;  // membership with respect to mu_after
    bool in_R2 = false;  // membership with respect to mu_before
    double q_norm = 0.0;     // |q_mu(z_T)|: zoom-out ticks and detection
    double true_norm = 0.0;  // |z_T|, diagnostic only
};

struct InvariantStatus {
    bool pass = true;
    std::int64_t checks = 0;
    std::int64_t violations = 0;
    double worst = -std::numeric_limits<double>::infinity();  // check-specific, see run()

    void record(bool ok, double value) {
        ++checks;
        if (!ok) {
            ++violations;
            pass = false;
        }
        worst = std::max(worst, value);
    }
};

enum class RunStatus { Completed, Converged, Diverged };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Completed: return "completed";
        case RunStatus::Converged: return "converged";
        case RunStatus::Diverged: return "diverged";
    }
    return "?";
}

struct SimTrace {
    std::vector<Sample> samples;
    std::vector<Event> events;
    std::map<std::string, InvariantStatus> invariants;
    RunStatus status = RunStatus::Completed;
    std::string message;
    std::optional<double> detection_time;  // t_0
    std::optional<double> converged_time;
    int zoom_in_ticks = 0;
    int zoom_out_ticks = 0;
    double final_mu = 0.0;
    double max_reduced_defect = 0.0;  // max one-step defect of the reduced model
    std::int64_t steps = 0;
    double wall_seconds = 0.0;
    AgentState final_state;

    bool all_invariants_pass() const {
        for (const auto& [name, s] : invariants) {
            if (!s.pass) return false;
        }
        return true;
    }
};

/// Positions uniform in [-pos, pos]^n, velocities uniform in [-vel, vel]^n.
inline AgentState random_state(int nodes, int n, std::uint64_t seed, double pos = 5.0, double vel = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> px(-pos, pos);
    std::uniform_real_distribution<double> pv(-vel, vel);
    AgentState s = AgentState::zero(nodes, n);
    for (int i = 0; i < nodes; ++i) {
        for (int d = 0; d < n; ++d) s.x(i, d) = px(rng);
    }
    for (int i = 0; i < nodes; ++i) {
        for (int d = 0; d < n; ++d) s.v(i, d) = pv(rng);
    }
    return s;
}

inline ReducedState reduced_state(const AgentState& s, const TreeDecomposition& d) {
    ReducedState z(2 * d.tree_size(), s.x.cols());
    z << d.tree_incidence.transpose() * s.x, d.tree_incidence.transpose() * s.v;
    return z;
}

/// Scales the state so that V(z_T) equals `fraction` of the R1(mu) threshold.
inline AgentState scale_into_r1(const AgentState& s, const Network& net, double mu, double fraction) {
    const double v = lyapunov_value(reduced_state(s, net.tree), net.cert.P);
    if (!(v > 0.0)) throw ValidationError("cannot rescale a state at consensus");
    const double k = std::sqrt(fraction * net.cert.r1_threshold(mu) / v);
    return {k * s.x, k * s.v, s.t};
}

namespace invariant {
inline constexpr const char* kReconstruction = "cotree_reconstruction";
inline constexpr const char* kErrorBound = "quantization_error_bound";
inline constexpr const char* kReducedModel = "reduced_model_defect";
inline constexpr const char* kR2AtDwellEnd = "r2_at_dwell_end";
inline constexpr const char* kR1AfterZoom = "r1_after_zoom_in";
inline constexpr const char* kDecay = "lyapunov_decay";
inline constexpr const char* kMonotoneMu = "monotone_mu";
}  // namespace invariant

/// Runs the hybrid closed loop from `initial` until the horizon.
///
/// Zoom-out (no mu0): u = 0, mu starts at 1; at t = 0, tau, 2 tau, ... the
/// quantized reduced state is tested with in_range_detect; on failure mu
/// grows by gamma_out, on success zooming in starts. Zoom-in: mu is held for
/// dwell_T seconds, then multiplied by Omega.
///
/// Invariants are checked at every integration step. `worst` values:
/// reconstruction gap; |omega| / (sqrt(2nL) mu delta); defect / bound;
/// V / R2 at dwell ends; V / R1 after zoom-in; decay excess relative to
/// alpha V (must stay <= decay_slack).
inline SimTrace run(const Network& net, const AgentState& initial, const SimOptions& opt) {
    const auto wall_start = std::chrono::steady_clock::now();
    const StabilityCertificate& c = net.cert;
    const QuantizerConfig& q = c.quantizer;
    const int n = c.state_dim;
    const int nodes = net.graph.node_count();
    if (initial.x.rows() != nodes || initial.x.cols() != n || initial.v.rows() != nodes || initial.v.cols() != n) {
        throw ValidationError("initial state must be " + std::to_string(nodes) + " x " + std::to_string(n));
    }
    if (!(opt.dt > 0.0) || !(opt.horizon > 0.0)) throw ValidationError("dt and horizon must be > 0");
    if (!c.zoom_in_feasible) throw CertificateError("refusing to zoom in: " + c.infeasibility_reason());
    if (opt.sample_every < 1) throw ValidationError("sample_every must be >= 1");

    SimTrace tr;
    for (const char* name : {invariant::kReconstruction, invariant::kErrorBound, invariant::kReducedModel,
                             invariant::kR2AtDwellEnd, invariant::kR1AfterZoom, invariant::kDecay,
                             invariant::kMonotoneMu}) {
        tr.invariants[name] = InvariantStatus{};
    }

    AgentState s = initial;
    s.t = 0.0;
    ZoomState zoom;
    double next_tick = 0.0;
    if (opt.mu0) {
        if (!(*opt.mu0 > 0.0)) throw ValidationError("mu0 must be > 0");
        zoom = ZoomState::zoom_in(*opt.mu0, c.dwell_T);
        const double v0 = lyapunov_value(reduced_state(s, net.tree), c.P);
        if (!(v0 <= c.r1_threshold(*opt.mu0))) {
            throw ValidationError("initial state is outside R1(mu0): V = " + std::to_string(v0) +
                                  " > " + std::to_string(c.r1_threshold(*opt.mu0)));
        }
        tr.detection_time = 0.0;
        next_tick = c.dwell_T;
    } else {
        zoom = ZoomState::zoom_out(1.0, opt.tau);
        next_tick = 0.0;
    }

    const double error_scale = std::sqrt(2.0 * n * net.graph.edge_count()) * q.delta;
    const auto total_steps = static_cast<std::int64_t>(std::ceil(opt.horizon / opt.dt - 1e-9));
    const double tick_eps = 1e-9 * opt.dt;
    std::int64_t last_sampled = -1;

    auto record_sample = [&](std::int64_t idx, const EdgeView& ev) {
        if (idx == last_sampled) return;
        last_sampled = idx;
        Sample smp;
        smp.t = s.t;
        smp.mu = zoom.mu;
        smp.phase = zoom.phase;
        smp.V = lyapunov_value(ev.z_T, c.P);
        smp.norm_x_e = ev.x_e.norm();
        smp.norm_v_e = ev.v_e.norm();
        smp.norm_omega = ev.omega_norm;
        smp.x = s.x;
        smp.v = s.v;
        smp.x_e = ev.x_e;
        smp.v_e = ev.v_e;
        smp.z_T = ev.z_T;
        tr.samples.push_back(std::move(smp));
    };

    for (std::int64_t idx = 0;; ++idx) {
        s.t = static_cast<double>(idx) * opt.dt;
        EdgeView ev = edge_views(s, net.matrices, net.tree, q, zoom.mu);
        bool event_here = false;

        // Zoom schedule at this instant. Zoom-out may tick, then detect, then
        // needs a fresh view with the new mu.
        while (s.t + tick_eps >= next_tick && zoom.phase != ZoomPhase::Converged) {
            event_here = true;
            const double v_now = lyapunov_value(ev.z_T, c.P);
            Event e;
            e.t = s.t;
            e.mu_before = zoom.mu;
            e.V = v_now;
            if (zoom.phase == ZoomPhase::ZoomOut) {
                ReducedState qz(ev.z_T.rows(), ev.z_T.cols());
                Matrix qx_t = quantize(ev.x_T, q, zoom.mu);
                Matrix qv_t = quantize(ev.v_T, q, zoom.mu);
                qz << qx_t, qv_t;
                e.q_norm = qz.norm();
                e.true_norm = ev.z_T.norm();
                if (in_range_detect(e.q_norm, q, zoom.mu, c.shrink)) {
                    zoom = zoom_step(zoom, ZoomEvent::DetectionSuccess, c.omega_factor, opt.gamma_out);
                    zoom.dwell = c.dwell_T;
                    e.kind = EventKind::Detection;
                    e.mu_after = zoom.mu;
                    e.in_R1 = v_now <= c.r1_threshold(zoom.mu);
                    e.in_R2 = v_now <= c.r2_threshold(zoom.mu);
                    tr.detection_time = s.t;
                    next_tick = s.t + c.dwell_T;
                } else {
                    zoom = zoom_step(zoom, ZoomEvent::ScheduleTick, c.omega_factor, opt.gamma_out);
                    e.kind = EventKind::ZoomOutTick;
                    e.k = zoom.k;
                    e.mu_after = zoom.mu;
                    e.in_R1 = v_now <= c.r1_threshold(zoom.mu);
                    e.in_R2 = v_now <= c.r2_threshold(e.mu_before);
                    tr.invariants[invariant::kMonotoneMu].record(zoom.mu > e.mu_before, 0.0);
                    ++tr.zoom_out_ticks;
                    next_tick += opt.tau;
                }
            } else {
                const double r2 = c.r2_threshold(zoom.mu);
                tr.invariants[invariant::kR2AtDwellEnd].record(v_now <= r2, v_now / r2);
                zoom = zoom_step(zoom, ZoomEvent::ScheduleTick, c.omega_factor, opt.gamma_out);
                e.kind = EventKind::ZoomInTick;
                e.k = zoom.k;
                e.mu_after = zoom.mu;
                const double r1 = c.r1_threshold(zoom.mu);
                // R2(mu) and R1(Omega mu) coincide analytically; allow roundoff.
                tr.invariants[invariant::kR1AfterZoom].record(v_now <= r1 * (1.0 + 1e-12), v_now / r1);
                tr.invariants[invariant::kMonotoneMu].record(zoom.mu < e.mu_before, 0.0);
                e.in_R1 = v_now <= r1;
                e.in_R2 = v_now <= r2;
                ++tr.zoom_in_ticks;
                next_tick += c.dwell_T;
            }
            tr.events.push_back(e);
            ev = edge_views(s, net.matrices, net.tree, q, zoom.mu);
        }

        const bool zooming_in = zoom.phase == ZoomPhase::ZoomIn;

        tr.invariants[invariant::kReconstruction].record(
            ev.reconstruction_gap(net.tree) <= 1e-9 * (1.0 + ev.x_e.cwiseAbs().maxCoeff() + ev.v_e.cwiseAbs().maxCoeff()),
            ev.reconstruction_gap(net.tree));
        if (ev.in_range) {
            const double bound = error_scale * zoom.mu;
            tr.invariants[invariant::kErrorBound].record(ev.omega_norm <= bound, ev.omega_norm / bound);
        }

        const double threshold = std::max(opt.kappa * zoom.mu * q.delta, opt.conv_floor);
        const double nx = ev.x_e.norm();
        const double nv = ev.v_e.norm();
        if (zooming_in && !tr.converged_time && nx <= threshold && nv <= threshold) {
            tr.converged_time = s.t;
            Event e;
            e.kind = EventKind::Converged;
            e.t = s.t;
            e.mu_before = e.mu_after = zoom.mu;
            e.V = lyapunov_value(ev.z_T, c.P);
            tr.events.push_back(e);
            event_here = true;
            if (opt.stop_on_convergence) zoom.phase = ZoomPhase::Converged;
        }

        if (event_here || idx % opt.sample_every == 0 || idx == total_steps) record_sample(idx, ev);
        if (idx >= total_steps || zoom.phase == ZoomPhase::Converged) break;

        const Matrix u = zooming_in ? control_from_quantized(ev.q_x, ev.q_v, net.matrices, c.sigma)
                                    : Matrix::Zero(nodes, n);
        AgentState next = step(s, u, opt.dt);
        if (!next.finite()) {
            tr.status = RunStatus::Diverged;
            tr.message = "state became non-finite after t = " + std::to_string(s.t);
            break;
        }

        // One-step defect of the reduced model, with omega taken at the step start.
        const ReducedState z_next = reduced_state(next, net.tree);
        Matrix omega(2 * ev.e_x.rows(), n);
        omega << ev.e_x, ev.e_v;
        const Matrix drift = c.L_T * ev.z_T + (zooming_in ? Matrix(c.L_T1 * omega) : Matrix::Zero(ev.z_T.rows(), n));
        // Zoom-out runs open loop (u = 0): the reduced model is then dz/dt = [v_T; 0].
        Matrix model = drift;
        if (!zooming_in) {
            model.topRows(ev.x_T.rows()) = ev.v_T;
            model.bottomRows(ev.v_T.rows()).setZero();
        }
        const double defect = (z_next - ev.z_T - opt.dt * model).norm();
        const double u_t = (net.tree.tree_incidence.transpose() * u).norm();
        const double defect_bound = 0.5 * (1.0 + 1e-6) * opt.dt * opt.dt * u_t + 1e-12 * (1.0 + ev.z_T.norm());
        tr.invariants[invariant::kReducedModel].record(defect <= defect_bound,
                                                       defect_bound > 0 ? defect / defect_bound : 0.0);
        tr.max_reduced_defect = std::max(tr.max_reduced_defect, defect);

        if (zooming_in && ev.in_range) {
            const double v_old = lyapunov_value(ev.z_T, c.P);
            const double v_new = lyapunov_value(z_next, c.P);
            const double lo = c.r2_threshold(zoom.mu);
            const double hi = c.r1_threshold(zoom.mu);
            if (v_old > lo && v_old <= hi && v_new > lo && v_new <= hi) {
                const double rate = (v_new - v_old) / opt.dt;
                const double excess = (rate + c.alpha_rate * v_old) / (c.alpha_rate * v_old);
                tr.invariants[invariant::kDecay].record(excess <= opt.decay_slack, excess);
            }
        }

        s = std::move(next);
        ++tr.steps;
    }

    tr.status = tr.status == RunStatus::Diverged ? RunStatus::Diverged
                : (opt.stop_on_convergence && tr.converged_time) ? RunStatus::Converged
                                                                 : RunStatus::Completed;
    tr.final_mu = zoom.mu;
    tr.final_state = s;
    tr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return tr;
}

}  // namespace qedge
