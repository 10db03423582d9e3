#pragma once

// Stability certificate for the quantized double-integrator edge dynamics on
// the spanning-tree reduced model
//
//   dz_T/dt = (L_T (x) I_n) z_T + (L_T1 (x) I_n) omega
//
// with H solving H L_hat_e + L_hat_e^T H = I, P = [[sH, H], [H, sH]] and
// Q = -(P L_T + L_T^T P).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "qedge/errors.hpp"
#include "qedge/graph.hpp"
#include "qedge/quantizer.hpp"
#include "qedge/spectral.hpp"

namespace qedge {

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

inline double lyapunov_residual(const Matrix& h, const Matrix& l_hat) {
    if (h.size() == 0) return 0.0;
    const Matrix r = h * l_hat + l_hat.transpose() * h - Matrix::Identity(h.rows(), h.cols());
    return r.cwiseAbs().maxCoeff();
}

/// Solves H L + L^T H = I through the vectorized (N-1)^2 linear system
/// (L^T (x) I + I (x) L^T) vec(H) = vec(I), with one step of iterative
/// refinement when the residual exceeds 1e-9.
inline Matrix solve_lyapunov(const Matrix& l_hat) {
    if (l_hat.rows() != l_hat.cols()) throw ValidationError("solve_lyapunov: matrix must be square");
    const Eigen::Index k = l_hat.rows();
    if (k == 0) return Matrix(0, 0);
    for (const auto& ev : spectrum(l_hat)) {
        if (!(ev.real() > 0.0)) {
            throw CertificateError("graph not quasi-strongly connected or numerical failure: L_hat_e has eigenvalue " +
                                   std::to_string(ev.real()) + (ev.imag() >= 0 ? "+" : "") +
                                   std::to_string(ev.imag()) + "i");
        }
    }
    const Matrix id = Matrix::Identity(k, k);
    const Matrix system = kron(l_hat.transpose(), id) + kron(id, l_hat.transpose());
    const Vector rhs = id.reshaped();
    Eigen::PartialPivLU<Matrix> lu(system);
    Vector h = lu.solve(rhs);
    auto as_matrix = [k](const Vector& v) { return Matrix(v.reshaped(k, k)); };
    if (lyapunov_residual(as_matrix(h), l_hat) > 1e-9) h += lu.solve(rhs - system * h);

    Matrix hm = as_matrix(h);
    hm = 0.5 * (hm + hm.transpose());
    if (const double r = lyapunov_residual(hm, l_hat); r > 1e-9) {
        throw CertificateError("solve_lyapunov: residual " + std::to_string(r) + " exceeds 1e-9");
    }
    if (Eigen::LLT<Matrix>(hm).info() != Eigen::Success) {
        throw CertificateError("solve_lyapunov: solution is not positive definite");
    }
    return hm;
}

/// sqrt(lambda_max(H)/2 + 1); any sigma above it makes P and Q positive definite.
inline double sigma_floor(const Matrix& h) {
    const Vector ev = symmetric_eigenvalues(h);
    if (ev.size() == 0 || !(ev(0) > 0.0)) throw CertificateError("sigma_floor: H is not positive definite");
    return std::sqrt(ev(ev.size() - 1) / 2.0 + 1.0);
}

/// P = [[sigma H, H], [H, sigma H]].
inline Matrix lyapunov_weight(const Matrix& h, double sigma) {
    const Eigen::Index k = h.rows();
    Matrix p(2 * k, 2 * k);
    p << sigma * h, h, h, sigma * h;
    return p;
}

/// L_T = [[0, I], [-s^2 L_hat_e, -s^3 L_hat_e]].
inline Matrix reduced_state_matrix(const Matrix& l_hat, double sigma) {
    const Eigen::Index k = l_hat.rows();
    Matrix lt(2 * k, 2 * k);
    lt << Matrix::Zero(k, k), Matrix::Identity(k, k), -sigma * sigma * l_hat, -sigma * sigma * sigma * l_hat;
    return lt;
}

/// L_T1 = [[0, 0], [-s^2 L_hat_O, -s^3 L_hat_O]].
inline Matrix reduced_error_matrix(const Matrix& l_obs, double sigma) {
    const Eigen::Index k = l_obs.rows();
    const Eigen::Index l = l_obs.cols();
    Matrix lt1(2 * k, 2 * l);
    lt1 << Matrix::Zero(k, l), Matrix::Zero(k, l), -sigma * sigma * l_obs, -sigma * sigma * sigma * l_obs;
    return lt1;
}

/// Q in closed form: [[s^2 I, s^3 I - s H], [s^3 I - s H, s^4 I - 2H]].
inline Matrix decay_matrix_closed_form(const Matrix& h, double sigma) {
    const Eigen::Index k = h.rows();
    const Matrix id = Matrix::Identity(k, k);
    const double s2 = sigma * sigma;
    const Matrix off = s2 * sigma * id - sigma * h;
    Matrix q(2 * k, 2 * k);
    q << s2 * id, off, off, s2 * s2 * id - 2.0 * h;
    return q;
}

struct StabilityCertificate {
    double sigma = 0.0;
    double alpha_gain = 0.0;  // sigma^2, position coupling
    double beta_gain = 0.0;   // sigma^3, velocity coupling
    double sigma_floor = 0.0;
    Matrix H, P, Q, L_T, L_T1;
    double lambda_min_P = 0.0, lambda_max_P = 0.0;
    double lambda_min_Q = 0.0, lambda_max_Q = 0.0;
    double norm_PLT1 = 0.0;
    double theta_const = 0.0;  // 2 sqrt(2nL) ||P L_T1|| / lambda_min(Q)
    double epsilon = 0.75;
    double alpha_rate = 0.0;   // lambda_min(Q) eps / (lambda_max(P) (1 + eps))
    double dwell_T = 0.0;
    double omega_factor = 0.0;
    double shrink = 0.0;       // sqrt(lambda_min(P) / lambda_max(P))
    double cond1_lhs = 0.0;    // shrink * M
    double cond1_rhs = 0.0;    // 2 delta max{1, sqrt(2nL) ||P L_T1|| / lambda_min(Q)}
    bool cond1_ok = false;
    bool zoom_in_feasible = false;  // cond1_ok and omega_factor < 1
    double q_residual = 0.0;        // |defining Q - closed-form Q|_max, checked relative to |Q|_max
    double lyapunov_residual = 0.0;
    int state_dim = 1;
    int edge_count = 0;
    QuantizerConfig quantizer;

    double r1_threshold(double mu) const {
        return lambda_min_P * quantizer.range * quantizer.range * mu * mu;
    }
    double r2_threshold(double mu) const {
        const double s = theta_const * quantizer.delta * (1.0 + epsilon) * mu;
        return lambda_max_P * s * s;
    }
    /// Which side of the feasibility condition failed, for diagnostics.
    std::string infeasibility_reason() const {
        if (!cond1_ok) {
            return "sqrt(lambda_min(P)/lambda_max(P)) * M = " + std::to_string(cond1_lhs) +
                   " does not exceed 2 delta max{1, sqrt(2nL) ||P L_T1|| / lambda_min(Q)} = " +
                   std::to_string(cond1_rhs) + "; increase M or reduce delta";
        }
        if (!zoom_in_feasible) {
            return "zoom-in factor Omega = " + std::to_string(omega_factor) +
                   " is not below 1; reduce epsilon or increase M";
        }
        return {};
    }
};

inline StabilityCertificate build_certificate(const TreeDecomposition& d, double sigma, double epsilon,
                                              const QuantizerConfig& cfg, int n) {
    cfg.validate();
    if (d.tree_size() < 1) throw CertificateError("certificate needs at least two agents");
    if (n < 1) throw ValidationError("state dimension n must be >= 1");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");

    StabilityCertificate c;
    c.quantizer = cfg;
    c.state_dim = n;
    c.edge_count = static_cast<int>(d.R.cols());
    c.epsilon = epsilon;
    c.H = solve_lyapunov(d.essential_laplacian);
    c.lyapunov_residual = lyapunov_residual(c.H, d.essential_laplacian);
    c.sigma_floor = qedge::sigma_floor(c.H);
    if (!(sigma > c.sigma_floor)) {
        throw CertificateError("sigma = " + std::to_string(sigma) + " must exceed sqrt(lambda_max(H)/2 + 1) = " +
                               std::to_string(c.sigma_floor));
    }
    c.sigma = sigma;
    c.alpha_gain = sigma * sigma;
    c.beta_gain = sigma * sigma * sigma;

    c.P = lyapunov_weight(c.H, sigma);
    c.L_T = reduced_state_matrix(d.essential_laplacian, sigma);
    c.L_T1 = reduced_error_matrix(d.observation, sigma);
    c.Q = -(c.P * c.L_T + c.L_T.transpose() * c.P);
    c.q_residual = (c.Q - decay_matrix_closed_form(c.H, sigma)).cwiseAbs().maxCoeff();
    if (c.q_residual > 1e-9 * std::max(1.0, c.Q.cwiseAbs().maxCoeff())) {
        throw ConsistencyError("Q from its definition and its closed form differ by " + std::to_string(c.q_residual));
    }

    const Vector ep = symmetric_eigenvalues(c.P);
    const Vector eq = symmetric_eigenvalues(c.Q);
    c.lambda_min_P = ep(0);
    c.lambda_max_P = ep(ep.size() - 1);
    c.lambda_min_Q = eq(0);
    c.lambda_max_Q = eq(eq.size() - 1);
    if (!(c.lambda_min_P > 0.0) || !(c.lambda_min_Q > 0.0)) {
        throw CertificateError("P or Q is not positive definite (lambda_min(P) = " + std::to_string(c.lambda_min_P) +
                               ", lambda_min(Q) = " + std::to_string(c.lambda_min_Q) + ")");
    }
    c.norm_PLT1 = spectral_norm(c.P * c.L_T1);

    const double root2nl = std::sqrt(2.0 * n * c.edge_count);
    const double delta = cfg.delta;
    const double m = cfg.range;
    c.theta_const = 2.0 * root2nl * c.norm_PLT1 / c.lambda_min_Q;
    c.alpha_rate = c.lambda_min_Q * epsilon / (c.lambda_max_P * (1.0 + epsilon));
    c.shrink = std::sqrt(c.lambda_min_P / c.lambda_max_P);
    c.cond1_lhs = c.shrink * m;
    c.cond1_rhs = 2.0 * delta * std::max(1.0, root2nl * c.norm_PLT1 / c.lambda_min_Q);
    c.cond1_ok = c.cond1_lhs > c.cond1_rhs;

    const double spread = c.theta_const * delta * (1.0 + epsilon);
    c.omega_factor = std::sqrt(c.lambda_max_P) * spread / (std::sqrt(c.lambda_min_P) * m);
    c.dwell_T = std::log(c.lambda_min_P * m * m / (c.lambda_max_P * spread * spread)) / c.alpha_rate;
    c.zoom_in_feasible = c.cond1_ok && c.omega_factor < 1.0;
    return c;
}

/// Reduced state as a 2(N-1) x n matrix: rows [x_T; v_T], one column per
/// spatial dimension.
using ReducedState = Matrix;

/// Stacked vector [x_T; v_T] (edge-major, dimension-minor) to matrix form.
inline ReducedState unstack(const Vector& z, int n) {
    if (n < 1 || z.size() % n != 0) throw ValidationError("reduced state length is not a multiple of n");
    return z.reshaped(n, z.size() / n).transpose();
}

inline Vector stack(const ReducedState& z) { return z.transpose().reshaped(); }

/// V = z_T^T (P (x) I_n) z_T, evaluated as trace(Z^T P Z).
inline double lyapunov_value(const ReducedState& z, const Matrix& p) {
    if (z.rows() != p.rows()) throw ValidationError("lyapunov_value: dimension mismatch");
    return (z.transpose() * p * z).trace();
}

inline double lyapunov_value(const Vector& z, const Matrix& p, int n) { return lyapunov_value(unstack(z, n), p); }

struct EllipsoidMembership {
    bool in_R1 = false;
    bool in_R2 = false;
};

inline EllipsoidMembership ellipsoid_membership(const Vector& z, const Matrix& p, double mu, const QuantizerConfig& cfg,
                                                double epsilon, double theta_const, int n) {
    const Vector ev = symmetric_eigenvalues(p);
    const double v = lyapunov_value(z, p, n);
    const double r1 = ev(0) * cfg.range * cfg.range * mu * mu;
    const double s = theta_const * cfg.delta * (1.0 + epsilon) * mu;
    const double r2 = ev(ev.size() - 1) * s * s;
    return {v <= r1, v <= r2};
}

inline EllipsoidMembership ellipsoid_membership(const ReducedState& z, const StabilityCertificate& c, double mu) {
    const double v = lyapunov_value(z, c.P);
    return {v <= c.r1_threshold(mu), v <= c.r2_threshold(mu)};
}

}  // namespace qedge
