// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// values and runtime. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qedge/experiment.hpp"
#include "qedge/fixture.hpp"
#include "qedge/graph.hpp"
#include "qedge/quantizer.hpp"
#include "qedge/sim.hpp"
#include "qedge/spectral.hpp"
#include "qedge/stability.hpp"
#include "random_graphs.hpp"

using namespace qedge;

namespace {

// Tolerances and runtime budgets.
constexpr double kMatrixTol = 0.005;
constexpr double kHTol = 0.01;
constexpr double kResidualTol = 1e-9;
constexpr double kConstRelTol = 1e-3;
constexpr double kDwellAbsTol = 1e-2;
constexpr int kExpectedBits = 7;
constexpr double kLemmaTol = 1e-9;
constexpr int kLemmaGraphs = 200;
constexpr int kFuzzSamples = 10000;
constexpr double kDecaySlack = 0.05;
constexpr double kAgreementTol = 1e-3;
constexpr int kDwellIntervals = 10;
constexpr double kDefectRatioLo = 3.0, kDefectRatioHi = 5.0;

struct Result {
    std::string id;
    bool pass;
    std::string detail;
    double seconds;
    double budget;  // 0: no budget
};

std::vector<Result> results;

template <typename F>
void criterion(const std::string& id, double budget, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
        pass = body(detail);
    } catch (const std::exception& e) {
        detail += std::string(" exception: ") + e.what();
        pass = false;
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget > 0 && s > budget) {
        detail += " [over runtime budget]";
        pass = false;
    }
    results.push_back({id, pass, detail, s, budget});
    std::printf("%-5s %s  %s  (%.3f s%s)\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str(), s,
                budget > 0 ? (" of " + std::to_string(static_cast<int>(budget)) + " s").c_str() : "");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Network fixture_network() {
    return make_network(fixture::graph(), fixture::tree_edges(), fixture::kSigma, fixture::kEpsilon,
                        fixture::quantizer(), fixture::kStateDim);
}

AgentState fixture_initial(const Network& net, std::optional<double> r1_fraction = std::nullopt) {
    RunConfig cfg = parse_config(fixture::config_text());
    cfg.init_r1_fraction = r1_fraction;
    return initial_state_for(cfg, net);
}

}  // namespace

int main() {
    const FixtureReport report = verify_fixture();
    auto row = [&](const char* name) { return *report.find(name); };

    criterion("1", 1.0, [&](std::string& d) {
        bool ok = true;
        for (const char* name : {"T", "R", "L_hat_e", "L_hat_O"}) {
            const FixtureRow r = row(name);
            ok = ok && r.pass && r.residual <= kMatrixTol;
            d += std::string(name) + " " + fmt("%.2g", r.residual) + "; ";
        }
        d += "entrywise tol " + fmt("%g", kMatrixTol);
        return ok;
    });

    criterion("2", 1.0, [&](std::string& d) {
        const TreeDecomposition tree = [] {
            const DirectedGraph g = fixture::graph();
            const auto t = fixture::tree_edges();
            return decompose(g, build_matrices(g), std::span<const int>(t));
        }();
        const Matrix h = solve_lyapunov(tree.essential_laplacian);
        const double err = (h - fixture::reference::H()).cwiseAbs().maxCoeff();
        const Matrix res = h * tree.essential_laplacian + tree.essential_laplacian.transpose() * h -
                           Matrix::Identity(4, 4);
        const double rn = res.norm();
        d = "max |H - H_ref| = " + fmt("%.4g", err) + " (tol " + fmt("%g", kHTol) + "), residual " + fmt("%.2e", rn);
        return err <= kHTol && rn <= kResidualTol;
    });

    criterion("3", 1.0, [&](std::string& d) {
        const StabilityCertificate c = fixture_network().cert;
        auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
        const double r1 = rel(c.lambda_max_P, fixture::reference::kLambdaMaxP);
        const double r2 = rel(c.lambda_min_P, fixture::reference::kLambdaMinP);
        const double r3 = rel(c.norm_PLT1, fixture::reference::kNormPLT1);
        const double dd = std::abs(c.dwell_T - fixture::reference::kDwellT);
        d = "lambda_max(P) " + fmt("%.6g", c.lambda_max_P) + " (rel " + fmt("%.1e", r1) + "), lambda_min(P) " +
            fmt("%.6g", c.lambda_min_P) + " (rel " + fmt("%.1e", r2) + "), |P L_T1| " + fmt("%.6g", c.norm_PLT1) +
            " (rel " + fmt("%.1e", r3) + "), dwell_T " + fmt("%.6g", c.dwell_T) + " vs " +
            fmt("%.5g", fixture::reference::kDwellT) + " (abs " + fmt("%.4g", dd) + ", tol " +
            fmt("%g", kDwellAbsTol) + ")";
        return r1 <= kConstRelTol && r2 <= kConstRelTol && r3 <= kConstRelTol && dd <= kDwellAbsTol;
    });

    criterion("4", 0.0, [&](std::string& d) {
        const BitBudget b = bit_budget(fixture::quantizer());
        const int same_units = cell_bits(fixture::quantizer());
        d = "M = 63: " + std::to_string(b.levels) + " levels, " + std::to_string(b.bits) +
            " bits; with M and delta in the same units (2M/delta cells): " + std::to_string(same_units) + " bits";
        return b.bits == kExpectedBits;
    });

    criterion("5", 30.0, [&](std::string& d) {
        std::mt19937_64 rng(20240611);
        int bad1 = 0, bad2 = 0, bad3 = 0, bad4 = 0;
        double worst = 0.0;
        for (int trial = 0; trial < kLemmaGraphs; ++trial) {
            const DirectedGraph g = test_support::random_qsc_digraph(rng);
            const GraphMatrices m = build_matrices(g);
            const Eigenvalues le = spectrum(m.edge_laplacian);
            const double d1 = multiset_distance(nonzero_part(spectrum(m.graph_laplacian), kLemmaTol),
                                                nonzero_part(le, kLemmaTol));
            bad1 += !(d1 <= kLemmaTol);
            bad2 += count_near_zero(le, kLemmaTol) != static_cast<std::size_t>(g.edge_count() - g.node_count() + 1);
            const TreeDecomposition t = decompose(g, m);
            const double d3 = multiset_distance(spectrum(t.essential_laplacian), nonzero_part(le, kLemmaTol));
            bad3 += !(d3 <= kLemmaTol);
            const SimilarityBlocks b = similarity_blocks(m, t);
            double d4 = (b.top_left - t.essential_laplacian).cwiseAbs().maxCoeff();
            if (b.bottom_left.size()) d4 = std::max(d4, b.bottom_left.cwiseAbs().maxCoeff());
            if (b.bottom_right.size()) d4 = std::max(d4, b.bottom_right.cwiseAbs().maxCoeff());
            bad4 += !(d4 <= kLemmaTol);
            worst = std::max({worst, d1, d3, d4});
        }
        d = std::to_string(kLemmaGraphs) + " digraphs; failures: spectra " + std::to_string(bad1) + ", zero count " +
            std::to_string(bad2) + ", essential spectrum " + std::to_string(bad3) + ", block form " +
            std::to_string(bad4) + "; worst deviation " + fmt("%.2e", worst);
        return bad1 + bad2 + bad3 + bad4 == 0;
    });

    criterion("6", 5.0, [&](std::string& d) {
        const QuantizerConfig q = fixture::quantizer();
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> mu_dist(1e-3, 100.0), u(-1.5, 1.5);
        std::uniform_int_distribution<int> dim_dist(1, 40);
        int scaling = 0, error = 0, saturation = 0, monotone = 0, vector = 0;
        for (int i = 0; i < kFuzzSamples; ++i) {
            const double mu = mu_dist(rng);
            const double x = u(rng) * q.range * mu;
            const double y = quantize_scalar(x, q, mu);
            scaling += y != mu * quantize_unit(x / mu, q);
            if (in_range(x, q, mu)) error += std::abs(y - x) > mu * q.delta / 2 * (1 + 1e-12);
            else saturation += std::abs(y) != mu * (q.range - q.delta / 2);
            const double x2 = x + std::abs(u(rng)) * mu;
            monotone += quantize_scalar(x2, q, mu) < y;

            const int dim = dim_dist(rng);
            Vector v(dim);
            for (int j = 0; j < dim; ++j) v(j) = u(rng) / 1.5 * q.range * mu;
            vector += (quantize_vector(v, q, mu) - v).norm() > std::sqrt(double(dim)) * mu * q.delta;
        }
        d = std::to_string(kFuzzSamples) + " samples; violations: scaling " + std::to_string(scaling) +
            ", in-range error " + std::to_string(error) + ", saturation " + std::to_string(saturation) +
            ", monotonicity " + std::to_string(monotone) + ", vector bound " + std::to_string(vector);
        return scaling + error + saturation + monotone + vector == 0;
    });

    // Criterion 7: the fixture over ten dwell intervals from the seed-pinned state.
    const Network net = fixture_network();
    const StabilityCertificate& c = net.cert;
    SimOptions opt;
    opt.mu0 = fixture::kMu0;
    opt.horizon = kDwellIntervals * c.dwell_T + 2 * opt.dt;
    SimTrace main_run;
    double t_main = 0.0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        main_run = run(net, fixture_initial(net), opt);
        t_main = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const double v0 = main_run.samples.front().V;
    std::printf("      fixture run: V(0) = %.6g, R1(10) = %.6g, R2(10) = %.6g, %d zoom-in ticks, %.2f s\n", v0,
                c.r1_threshold(10.0), c.r2_threshold(10.0), main_run.zoom_in_ticks, t_main);

    criterion("7a", 60.0, [&](std::string& d) {
        int ticks = 0, mismatched = 0;
        for (const Event& e : main_run.events) {
            if (e.kind != EventKind::ZoomInTick) continue;
            ++ticks;
            mismatched += e.mu_after != fixture::kMu0 * std::pow(c.omega_factor, e.k);
        }
        d = std::to_string(ticks) + " zoom boundaries, mu(k) == 10 * Omega^k mismatches: " + std::to_string(mismatched) +
            " (Omega = " + fmt("%.10g", c.omega_factor) + "), run took " + fmt("%.2f", t_main) + " s";
        return ticks == kDwellIntervals && mismatched == 0 && t_main < 60.0;
    });

    criterion("7b", 60.0, [&](std::string& d) {
        int ends = 0, outside = 0;
        double worst = 0.0;
        for (const Event& e : main_run.events) {
            if (e.kind != EventKind::ZoomInTick) continue;
            ++ends;
            outside += !e.in_R2;
            worst = std::max(worst, e.V / c.r2_threshold(e.mu_before));
        }
        d = std::to_string(ends) + " dwell ends, outside R2: " + std::to_string(outside) + ", max V/R2 " +
            fmt("%.3g", worst);
        return ends == kDwellIntervals && outside == 0;
    });

    criterion("7c", 60.0, [&](std::string& d) {
        // The default state starts inside R2(10), so the decay band is probed
        // from a state of the same seed rescaled to 98% of the R1(10) level.
        const SimTrace band = run(net, fixture_initial(net, 0.98), opt);
        const InvariantStatus& inv = band.invariants.at(invariant::kDecay);
        const InvariantStatus& main_inv = main_run.invariants.at(invariant::kDecay);
        d = "band run: " + std::to_string(inv.checks) + " steps between R2 and R1, violations " +
            std::to_string(inv.violations) + ", worst excess " + fmt("%.3g", inv.worst) + " (slack " +
            fmt("%g", kDecaySlack) + "); default run: " + std::to_string(main_inv.checks) + " band steps";
        return inv.checks > 0 && inv.pass && inv.worst <= kDecaySlack && main_inv.pass && band.all_invariants_pass();
    });

    criterion("7d", 60.0, [&](std::string& d) {
        const Matrix xe = net.matrices.incidence.transpose() * main_run.final_state.x;
        const Matrix ve = net.matrices.incidence.transpose() * main_run.final_state.v;
        // How long it actually takes.
        SimOptions longer = opt;
        longer.horizon = 60 * c.dwell_T;
        const SimTrace ext = run(net, fixture_initial(net), longer);
        std::optional<double> reached;
        for (const Sample& s : ext.samples) {
            if (s.norm_x_e <= kAgreementTol && s.norm_v_e <= kAgreementTol) {
                reached = s.t;
                break;
            }
        }
        d = "after " + std::to_string(kDwellIntervals) + " intervals (t = " + fmt("%.4g", main_run.final_state.t) +
            "): |x_e| = " + fmt("%.3g", xe.norm()) + ", |v_e| = " + fmt("%.3g", ve.norm()) + ", mu = " +
            fmt("%.3g", main_run.final_mu) + "; tol " + fmt("%g", kAgreementTol) + " first met " +
            (reached ? "at t = " + fmt("%.4g", *reached) + " (interval " +
                           std::to_string(static_cast<int>(std::ceil(*reached / c.dwell_T))) + ")"
                     : std::string("not within 60 intervals"));
        return xe.norm() <= kAgreementTol && ve.norm() <= kAgreementTol;
    });

    criterion("8", 0.0, [&](std::string& d) {
        SimOptions o;
        o.mu0 = fixture::kMu0;
        o.horizon = 1.0;
        const AgentState init = fixture_initial(net, 0.98);
        const SimTrace a = run(net, init, o);
        o.dt /= 2;
        const SimTrace b = run(net, init, o);
        const double ratio = a.max_reduced_defect / b.max_reduced_defect;
        d = "max one-step defect " + fmt("%.4e", a.max_reduced_defect) + " at dt = 1e-3, " +
            fmt("%.4e", b.max_reduced_defect) + " at dt = 5e-4, ratio " + fmt("%.4f", ratio);
        return ratio >= kDefectRatioLo && ratio <= kDefectRatioHi && a.invariants.at(invariant::kReducedModel).pass &&
               b.invariants.at(invariant::kReducedModel).pass;
    });

    int failed = 0;
    for (const auto& r : results) failed += !r.pass;
    std::printf("%zu criteria, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
}
