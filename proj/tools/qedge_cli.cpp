// qedge: run quantized edge-agreement experiments from a config file.
//
//   qedge run <config> [--out DIR] [--seed N] [--dt H]
//   qedge verify-fixture
//   qedge cert <config>
//
// Exit codes: 0 ok, 1 validation error, 2 infeasible certificate, 3 divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qedge/config.hpp"
#include "qedge/experiment.hpp"

namespace {

using namespace qedge;

RunConfig load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void print_certificate(const StabilityCertificate& c) {
    std::printf("sigma            %.10g (floor %.10g)\n", c.sigma, c.sigma_floor);
    std::printf("alpha, beta      %.10g, %.10g\n", c.alpha_gain, c.beta_gain);
    std::printf("lambda P         [%.10g, %.10g]\n", c.lambda_min_P, c.lambda_max_P);
    std::printf("lambda Q         [%.10g, %.10g]\n", c.lambda_min_Q, c.lambda_max_Q);
    std::printf("|P L_T1|         %.10g\n", c.norm_PLT1);
    std::printf("Theta            %.10g\n", c.theta_const);
    std::printf("decay rate       %.10g\n", c.alpha_rate);
    std::printf("dwell_T          %.10g\n", c.dwell_T);
    std::printf("Omega            %.10g\n", c.omega_factor);
    std::printf("shrink           %.10g\n", c.shrink);
    std::printf("condition 1      %.10g > %.10g : %s\n", c.cond1_lhs, c.cond1_rhs, c.cond1_ok ? "yes" : "no");
    std::printf("zoom-in feasible %s\n", c.zoom_in_feasible ? "yes" : "no");
    if (!c.zoom_in_feasible) std::printf("reason           %s\n", c.infeasibility_reason().c_str());
}

int cmd_run(const std::string& path, const std::string& out, const std::optional<std::uint64_t>& seed,
            const std::optional<double>& dt) {
    RunConfig cfg = load(path);
    if (!out.empty()) cfg.out = out;
    if (seed) cfg.seed = *seed;
    if (dt) {
        if (!(*dt > 0.0) || *dt > cfg.horizon) throw ValidationError("--dt must lie in (0, horizon]");
        cfg.dt = *dt;
    }
    const RunOutcome r = run_experiment(cfg);
    if (r.exit_code != kExitOk) {
        std::cerr << "qedge: " << r.message << "\n";
        return r.exit_code;
    }
    const Json& s = r.summary;
    std::printf("status %s, %lld steps in %.2f s\n", s["status"].get<std::string>().c_str(),
                static_cast<long long>(s["steps"].get<std::int64_t>()), s["wall_seconds"].get<double>());
    if (r.trace && r.trace->detection_time) std::printf("t0 = %.6g\n", *r.trace->detection_time);
    std::printf("zoom-in ticks %d, final mu %.6g, |x_e| %.6g, |v_e| %.6g\n", s["zoom_in_ticks"].get<int>(),
                s["final_mu"].get<double>(), s["final_norm_x_e"].get<double>(), s["final_norm_v_e"].get<double>());
    for (const auto& [name, inv] : r.trace->invariants) {
        std::printf("  %-26s %s (%lld checks)\n", name.c_str(), inv.pass ? "ok" : "VIOLATED",
                    static_cast<long long>(inv.checks));
    }
    std::printf("wrote %s/{trace.csv,summary.json,plot_*.csv}\n", cfg.out.c_str());
    return kExitOk;
}

int cmd_cert(const std::string& path) {
    const RunConfig cfg = load(path);
    const Network net = network_for(cfg);
    print_certificate(net.cert);
    return net.cert.zoom_in_feasible ? kExitOk : kExitInfeasible;
}

int cmd_verify_fixture() {
    const FixtureReport rep = verify_fixture();
    print_report(std::cout, rep);
    return rep.all_pass() ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantized edge agreement of double-integrator networks"};
    app.require_subcommand(1);

    std::string run_path, run_out, cert_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> dt;
    auto* run = app.add_subcommand("run", "simulate the configured experiment");
    run->add_option("config", run_path, "config file")->required();
    run->add_option("--out", run_out, "output directory");
    run->add_option("--seed", seed, "random seed for the initial state");
    run->add_option("--dt", dt, "integration step");

    auto* fixture = app.add_subcommand("verify-fixture", "recompute the reference network values");
    auto* cert = app.add_subcommand("cert", "print the stability certificate");
    cert->add_option("config", cert_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : qedge::kExitValidation;
    }

    try {
        if (*run) return cmd_run(run_path, run_out, seed, dt);
        if (*fixture) return cmd_verify_fixture();
        if (*cert) return cmd_cert(cert_path);
    } catch (const qedge::CertificateError& e) {
        std::cerr << "qedge: " << e.what() << "\n";
        return qedge::kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "qedge: " << e.what() << "\n";
        return qedge::kExitValidation;
    }
    return qedge::kExitValidation;
}
