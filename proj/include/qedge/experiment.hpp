#pragma once

// Config-driven experiment runner: builds the network and certificate,
// runs the simulation, and writes trace.csv, summary.json and plot data.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qedge/config.hpp"
#include "qedge/errors.hpp"
#include "qedge/fixture.hpp"
#include "qedge/graph.hpp"
#include "qedge/quantizer.hpp"
#include "qedge/sim.hpp"
#include "qedge/stability.hpp"

namespace qedge {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitInfeasible = 2, kExitDivergence = 3 };

inline QuantizerConfig quantizer_of(const RunConfig& c) { return {c.delta, c.M}; }

/// Builds graph, decomposition and certificate. sigma = auto resolves to
/// 1.05 * sigma_floor(H).
inline Network network_for(const RunConfig& cfg) {
    DirectedGraph g = graph_of(cfg);
    double sigma = 0.0;
    if (cfg.sigma) {
        sigma = *cfg.sigma;
    } else {
        GraphMatrices m = build_matrices(g);
        TreeDecomposition d = cfg.tree ? decompose(g, m, std::span<const int>(*cfg.tree)) : decompose(g, m);
        sigma = 1.05 * sigma_floor(solve_lyapunov(d.essential_laplacian));
    }
    return make_network(std::move(g), cfg.tree, sigma, cfg.epsilon, quantizer_of(cfg), cfg.n);
}

inline SimOptions sim_options_for(const RunConfig& cfg) {
    SimOptions o;
    o.dt = cfg.dt;
    o.horizon = cfg.horizon;
    o.tau = cfg.tau;
    o.gamma_out = cfg.gamma_out;
    o.mu0 = cfg.mu0;
    o.kappa = cfg.kappa;
    o.conv_floor = cfg.conv_floor;
    o.stop_on_convergence = cfg.stop_on_convergence;
    o.sample_every = cfg.sample_every;
    return o;
}

inline AgentState initial_state_for(const RunConfig& cfg, const Network& net) {
    AgentState s;
    switch (cfg.init) {
        case InitMode::Zero: s = AgentState::zero(cfg.nodes, cfg.n); break;
        case InitMode::Random: s = random_state(cfg.nodes, cfg.n, cfg.seed, cfg.init_pos, cfg.init_vel); break;
        case InitMode::Explicit:
            s = AgentState::zero(cfg.nodes, cfg.n);
            for (int i = 0; i < cfg.nodes; ++i) {
                for (int d = 0; d < cfg.n; ++d) {
                    const auto idx = static_cast<std::size_t>(i * cfg.n + d);
                    s.x(i, d) = cfg.x0.at(idx);
                    s.v(i, d) = cfg.v0.at(idx);
                }
            }
            break;
    }
    if (cfg.init_r1_fraction) s = scale_into_r1(s, net, *cfg.mu0, *cfg.init_r1_fraction);
    return s;
}

inline Json matrix_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Json certificate_json(const StabilityCertificate& c) {
    Json j;
    j["sigma"] = c.sigma;
    j["sigma_floor"] = c.sigma_floor;
    j["alpha_gain"] = c.alpha_gain;
    j["beta_gain"] = c.beta_gain;
    j["state_dim"] = c.state_dim;
    j["edge_count"] = c.edge_count;
    j["delta"] = c.quantizer.delta;
    j["M"] = c.quantizer.range;
    j["epsilon"] = c.epsilon;
    j["lambda_min_P"] = c.lambda_min_P;
    j["lambda_max_P"] = c.lambda_max_P;
    j["lambda_min_Q"] = c.lambda_min_Q;
    j["lambda_max_Q"] = c.lambda_max_Q;
    j["norm_PLT1"] = c.norm_PLT1;
    j["theta_const"] = c.theta_const;
    j["alpha_rate"] = c.alpha_rate;
    j["dwell_T"] = c.dwell_T;
    j["omega_factor"] = c.omega_factor;
    j["shrink"] = c.shrink;
    j["cond1_lhs"] = c.cond1_lhs;
    j["cond1_rhs"] = c.cond1_rhs;
    j["cond1_ok"] = c.cond1_ok;
    j["zoom_in_feasible"] = c.zoom_in_feasible;
    j["lyapunov_residual"] = c.lyapunov_residual;
    j["q_residual"] = c.q_residual;
    if (c.quantizer.range == std::floor(c.quantizer.range) && c.quantizer.range >= 1) {
        const BitBudget b = bit_budget(c.quantizer);
        j["levels_nominal"] = b.levels;
        j["bits_nominal"] = b.bits;
    }
    j["bits_state_units"] = cell_bits(c.quantizer);
    j["H"] = matrix_json(c.H);
    j["P"] = matrix_json(c.P);
    j["Q"] = matrix_json(c.Q);
    return j;
}

inline Json invariants_json(const SimTrace& tr) {
    Json j;
    for (const auto& [name, s] : tr.invariants) {
        Json e;
        e["pass"] = s.pass;
        e["checks"] = s.checks;
        e["violations"] = s.violations;
        if (s.checks > 0) e["worst"] = s.worst;
        else e["worst"] = nullptr;
        j[name] = std::move(e);
    }
    return j;
}

inline Json summary_json(const Network& net, const SimTrace& tr) {
    Json j;
    j["status"] = to_string(tr.status);
    if (!tr.message.empty()) j["message"] = tr.message;
    j["certificate"] = certificate_json(net.cert);
    j["detection_time"] = tr.detection_time ? Json(*tr.detection_time) : Json(nullptr);
    j["zoom_out_ticks"] = tr.zoom_out_ticks;
    j["zoom_in_ticks"] = tr.zoom_in_ticks;
    j["converged"] = tr.converged_time.has_value();
    j["converged_time"] = tr.converged_time ? Json(*tr.converged_time) : Json(nullptr);
    const Matrix xe = net.matrices.incidence.transpose() * tr.final_state.x;
    const Matrix ve = net.matrices.incidence.transpose() * tr.final_state.v;
    j["final_time"] = tr.final_state.t;
    j["final_norm_x_e"] = xe.norm();
    j["final_norm_v_e"] = ve.norm();
    j["final_mu"] = tr.final_mu;
    j["steps"] = tr.steps;
    j["max_reduced_defect"] = tr.max_reduced_defect;
    j["wall_seconds"] = tr.wall_seconds;
    j["all_invariants_pass"] = tr.all_invariants_pass();
    j["invariants"] = invariants_json(tr);
    return j;
}

/// trace.csv: t, mu, phase, V, norm_x_e, norm_v_e, norm_omega, then
/// x_e[k,d] for every edge k and dimension d, then v_e[k,d]. Those names
/// contain a comma and are written quoted. 17 significant digits, LF line endings.
inline void write_trace_csv(std::ostream& os, const SimTrace& tr, int edges, int n) {
    using detail::fmt17;
    os << "t,mu,phase,V,norm_x_e,norm_v_e,norm_omega";
    for (const char* name : {"x_e", "v_e"}) {
        for (int k = 1; k <= edges; ++k) {
            for (int d = 1; d <= n; ++d) os << ",\"" << name << "[" << k << "," << d << "]\"";
        }
    }
    os << "\n";
    for (const Sample& s : tr.samples) {
        os << fmt17(s.t) << "," << fmt17(s.mu) << "," << to_string(s.phase) << "," << fmt17(s.V) << ","
           << fmt17(s.norm_x_e) << "," << fmt17(s.norm_v_e) << "," << fmt17(s.norm_omega);
        for (const Matrix* m : {&s.x_e, &s.v_e}) {
            for (int k = 0; k < edges; ++k) {
                for (int d = 0; d < n; ++d) os << "," << fmt17((*m)(k, d));
            }
        }
        os << "\n";
    }
}

namespace detail {

inline void write_series(const std::filesystem::path& path, const SimTrace& tr, const char* label, int rows, int n,
                         Matrix Sample::*field) {
    std::ofstream os(path, std::ios::binary);
    os << "t";
    for (int r = 1; r <= rows; ++r) {
        for (int d = 1; d <= n; ++d) os << ",\"" << label << "[" << r << "," << d << "]\"";
    }
    os << "\n";
    for (const Sample& s : tr.samples) {
        os << fmt17(s.t);
        const Matrix& m = s.*field;
        for (int r = 0; r < rows; ++r) {
            for (int d = 0; d < n; ++d) os << "," << fmt17(m(r, d));
        }
        os << "\n";
    }
}

}  // namespace detail

/// Per-panel plot data: node positions/velocities, edge positions/velocities,
/// and the mu staircase (each zoom event contributes a before and an after row).
inline void write_plot_data(const std::filesystem::path& dir, const Network& net, const SimTrace& tr) {
    const int nodes = net.graph.node_count();
    const int edges = net.graph.edge_count();
    const int n = net.state_dim();
    detail::write_series(dir / "plot_x.csv", tr, "x", nodes, n, &Sample::x);
    detail::write_series(dir / "plot_v.csv", tr, "v", nodes, n, &Sample::v);
    detail::write_series(dir / "plot_x_e.csv", tr, "x_e", edges, n, &Sample::x_e);
    detail::write_series(dir / "plot_v_e.csv", tr, "v_e", edges, n, &Sample::v_e);

    std::ofstream os(dir / "plot_mu.csv", std::ios::binary);
    os << "t,mu\n";
    std::size_t ev = 0;
    double mu = tr.samples.empty() ? tr.final_mu : tr.samples.front().mu;
    auto zoom_event = [](const Event& e) { return e.kind != EventKind::Converged; };
    for (const Sample& s : tr.samples) {
        while (ev < tr.events.size() && tr.events[ev].t <= s.t) {
            const Event& e = tr.events[ev++];
            if (!zoom_event(e)) continue;
            os << detail::fmt17(e.t) << "," << detail::fmt17(e.mu_before) << "\n";
            os << detail::fmt17(e.t) << "," << detail::fmt17(e.mu_after) << "\n";
            mu = e.mu_after;
        }
        os << detail::fmt17(s.t) << "," << detail::fmt17(s.mu) << "\n";
    }
    (void)mu;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream os(path, std::ios::binary);
    os << j.dump(2) << "\n";
}

struct RunOutcome {
    int exit_code = kExitOk;
    std::string message;
    Json summary;
    std::optional<SimTrace> trace;
};

/// Runs one configured experiment and writes its files under cfg.out.
inline RunOutcome run_experiment(const RunConfig& cfg) {
    RunOutcome out;
    const std::filesystem::path dir(cfg.out);
    std::optional<Network> net;
    try {
        net = network_for(cfg);
    } catch (const CertificateError& e) {
        out.exit_code = kExitInfeasible;
        out.message = e.what();
        out.summary["status"] = "infeasible";
        out.summary["message"] = out.message;
        std::filesystem::create_directories(dir);
        write_json(dir / "summary.json", out.summary);
        return out;
    } catch (const ValidationError& e) {
        out.exit_code = kExitValidation;
        out.message = e.what();
        return out;
    } catch (const NoSpanningTreeError& e) {
        out.exit_code = kExitValidation;
        out.message = e.what();
        return out;
    }

    std::filesystem::create_directories(dir);
    if (!net->cert.zoom_in_feasible) {
        out.exit_code = kExitInfeasible;
        out.message = "certificate infeasible: " + net->cert.infeasibility_reason();
        out.summary["status"] = "infeasible";
        out.summary["message"] = out.message;
        out.summary["certificate"] = certificate_json(net->cert);
        write_json(dir / "summary.json", out.summary);
        return out;
    }

    SimTrace tr;
    try {
        const AgentState init = initial_state_for(cfg, *net);
        tr = run(*net, init, sim_options_for(cfg));
    } catch (const ValidationError& e) {
        out.exit_code = kExitValidation;
        out.message = e.what();
        return out;
    }

    {
        std::ofstream os(dir / "trace.csv", std::ios::binary);
        write_trace_csv(os, tr, net->graph.edge_count(), net->state_dim());
    }
    write_plot_data(dir, *net, tr);
    out.summary = summary_json(*net, tr);
    write_json(dir / "summary.json", out.summary);
    if (tr.status == RunStatus::Diverged) {
        out.exit_code = kExitDivergence;
        out.message = tr.message;
    }
    out.trace = std::move(tr);
    return out;
}

// ---------------------------------------------------------------------------
// Fixture verification

struct FixtureInput {
    DirectedGraph graph = fixture::graph();
    std::vector<int> tree = fixture::tree_edges();
    double sigma = fixture::kSigma;
    double epsilon = fixture::kEpsilon;
    QuantizerConfig quantizer = fixture::quantizer();
    int n = fixture::kStateDim;
};

struct FixtureRow {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    std::string kind;  // "abs", "rel" or "exact"
    bool pass = false;
    std::string detail;
};

struct FixtureReport {
    std::vector<FixtureRow> rows;

    bool all_pass() const {
        for (const auto& r : rows) {
            if (!r.pass) return false;
        }
        return true;
    }
    const FixtureRow* find(const std::string& name) const {
        for (const auto& r : rows) {
            if (r.name == name) return &r;
        }
        return nullptr;
    }
};

/// Recomputes the fixture matrices and constants and compares them with the
/// reference values.
inline FixtureReport verify_fixture(const FixtureInput& in = {}) {
    FixtureReport rep;
    auto matrix_row = [&](const std::string& name, const Matrix& got, const Matrix& want, double tol) {
        FixtureRow r{name, 0.0, tol, "abs", false, {}};
        if (got.rows() != want.rows() || got.cols() != want.cols()) {
            r.residual = std::numeric_limits<double>::infinity();
            r.detail = "shape " + std::to_string(got.rows()) + "x" + std::to_string(got.cols()) + ", expected " +
                       std::to_string(want.rows()) + "x" + std::to_string(want.cols());
        } else {
            r.residual = want.size() ? (got - want).cwiseAbs().maxCoeff() : 0.0;
            r.pass = r.residual <= tol;
        }
        rep.rows.push_back(r);
    };
    auto scalar_row = [&](const std::string& name, double got, double want, double tol, const char* kind) {
        FixtureRow r{name, 0.0, tol, kind, false, {}};
        r.residual = std::string(kind) == "rel" ? std::abs(got - want) / std::abs(want) : std::abs(got - want);
        r.pass = r.residual <= tol;
        std::ostringstream os;
        os.precision(10);
        os << "computed " << got << ", reference " << want;
        r.detail = os.str();
        rep.rows.push_back(r);
    };
    auto failed = [&](const std::string& name, const std::string& why) {
        rep.rows.push_back({name, std::numeric_limits<double>::infinity(), 0.0, "abs", false, why});
    };

    TreeDecomposition d;
    GraphMatrices m;
    try {
        m = build_matrices(in.graph);
        d = decompose(in.graph, m, std::span<const int>(in.tree));
    } catch (const std::exception& e) {
        for (const char* name : {"T", "R", "L_hat_e", "L_hat_O", "H", "lambda_max_P", "lambda_min_P", "norm_PLT1",
                                 "dwell_T"}) {
            failed(name, e.what());
        }
        return rep;
    }
    matrix_row("T", d.T, fixture::reference::T(), 0.005);
    matrix_row("R", d.R, fixture::reference::R(), 0.005);
    matrix_row("L_hat_e", d.essential_laplacian, fixture::reference::essential_laplacian(), 0.005);
    matrix_row("L_hat_O", d.observation, fixture::reference::observation(), 0.005);

    try {
        const StabilityCertificate c = build_certificate(d, in.sigma, in.epsilon, in.quantizer, in.n);
        matrix_row("H", c.H, fixture::reference::H(), 0.01);
        rep.rows.back().detail = "Lyapunov residual " + std::to_string(c.lyapunov_residual);
        scalar_row("lambda_max_P", c.lambda_max_P, fixture::reference::kLambdaMaxP, 1e-3, "rel");
        scalar_row("lambda_min_P", c.lambda_min_P, fixture::reference::kLambdaMinP, 1e-3, "rel");
        scalar_row("norm_PLT1", c.norm_PLT1, fixture::reference::kNormPLT1, 1e-3, "rel");
        scalar_row("dwell_T", c.dwell_T, fixture::reference::kDwellT, 1e-2, "abs");
        rep.rows.back().detail += " (lambda_min(Q) = " + std::to_string(c.lambda_min_Q) + ")";
    } catch (const std::exception& e) {
        for (const char* name : {"H", "lambda_max_P", "lambda_min_P", "norm_PLT1", "dwell_T"}) failed(name, e.what());
    }

    try {
        const BitBudget b = bit_budget(in.quantizer);
        FixtureRow r{"bits", std::abs(double(b.bits - fixture::reference::kBits)), 0.0, "exact",
                     b.bits == fixture::reference::kBits, {}};
        r.detail = std::to_string(b.levels) + " levels, " + std::to_string(b.bits) +
                   " bits; with M and delta in the same units: " + std::to_string(cell_bits(in.quantizer)) + " bits";
        rep.rows.push_back(r);
    } catch (const std::exception& e) {
        failed("bits", e.what());
    }
    return rep;
}

inline void print_report(std::ostream& os, const FixtureReport& rep) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %-6s %14s %10s  %s\n", "quantity", "result", "residual", "tolerance", "detail");
    os << buf;
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%-14s %-6s %14.6g %10.3g  %s%s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                      r.residual, r.tolerance, r.kind == "rel" ? "(relative) " : "", r.detail.c_str());
        os << buf;
    }
}

}  // namespace qedge
