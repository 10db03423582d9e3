#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "qedge/fixture.hpp"
#include "qedge/graph.hpp"
#include "qedge/stability.hpp"
#include "random_graphs.hpp"

using namespace qedge;

namespace {

// Independent values from tests/oracles/fixture_oracle.py (numpy/scipy).
namespace oracle {
constexpr double kLambdaMinP = 0.6156871119886145;
constexpr double kLambdaMaxP = 8.097972584069307;
constexpr double kLambdaMinQ = 0.878255539045299;
constexpr double kNormPLT1 = 6.712144302118361;
constexpr double kTheta = 83.72034516278467;
constexpr double kAlpha = 0.04648018094799127;
constexpr double kDwell = 7.328153709976816;
constexpr double kOmega = 0.8434058890125385;
constexpr double kSigmaFloor = 1.591762208623199;
constexpr double kVAllOnes = 147.12693816875372;

Matrix H() {
    Matrix h(4, 4);
    h << 2.474922473110614, 0.1644476612769043, 0.07180508633117276, -0.26421015284394944,
        0.1644476612769043, 2.8576807176469052, 0.38894421762718545, 0.44707103966522765,
        0.07180508633117276, 0.38894421762718545, 1.136363636363636, -0.00742811237908665,
        -0.26421015284394944, 0.44707103966522765, -0.00742811237908665, 1.218090497106873;
    return h;
}
}  // namespace oracle

TreeDecomposition fixture_tree() {
    const DirectedGraph g = fixture::graph();
    const auto tree = fixture::tree_edges();
    return decompose(g, build_matrices(g), std::span<const int>(tree));
}

StabilityCertificate fixture_cert(double epsilon = fixture::kEpsilon, QuantizerConfig q = fixture::quantizer()) {
    return build_certificate(fixture_tree(), fixture::kSigma, epsilon, q, fixture::kStateDim);
}

TreeDecomposition single_edge() {
    const DirectedGraph g(2, {{0, 1, 0.5}});
    return decompose(g, build_matrices(g));
}

Matrix mat(int r, int c, std::initializer_list<double> xs) {
    Matrix m(r, c);
    auto it = xs.begin();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = *it++;
    return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Lyapunov, Examples) {
    EXPECT_TRUE(solve_lyapunov(mat(1, 1, {0.5})).isApprox(mat(1, 1, {1.0}), 1e-14));
    EXPECT_TRUE(solve_lyapunov(mat(2, 2, {1, 0, 0, 2})).isApprox(mat(2, 2, {0.5, 0, 0, 0.25}), 1e-14));
}

TEST(Lyapunov, FixtureSolution) {
    const TreeDecomposition d = fixture_tree();
    const Matrix h = solve_lyapunov(d.essential_laplacian);
    EXPECT_LE((h - oracle::H()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((h - fixture::reference::H()).cwiseAbs().maxCoeff(), 0.01);
    EXPECT_LE(lyapunov_residual(h, d.essential_laplacian), 1e-9);
    EXPECT_TRUE(h.isApprox(h.transpose(), 0.0));
}

TEST(Lyapunov, RejectsUnstableReduction) {
    EXPECT_THROW(solve_lyapunov(mat(1, 1, {-1.0})), CertificateError);
    EXPECT_THROW(solve_lyapunov(mat(2, 2, {1, 0, 0, 0})), CertificateError);
    try {
        solve_lyapunov(mat(1, 1, {0.0}));
    } catch (const CertificateError& e) {
        EXPECT_NE(std::string(e.what()).find("not quasi-strongly connected"), std::string::npos);
    }
}

TEST(SigmaFloor, Examples) {
    EXPECT_DOUBLE_EQ(sigma_floor(mat(1, 1, {1.0})), std::sqrt(1.5));
    EXPECT_DOUBLE_EQ(sigma_floor(Matrix::Identity(4, 4)), std::sqrt(1.5));
    // The fixture floor is 1.59176 (lambda_max(H) = 3.0675); sigma = 1.64 clears it.
    const double floor = sigma_floor(oracle::H());
    EXPECT_NEAR(floor, oracle::kSigmaFloor, 1e-12);
    EXPECT_LT(floor, fixture::kSigma);
}

TEST(Certificate, SingleEdge) {
    const StabilityCertificate c = build_certificate(single_edge(), 1.3, 0.75, {0.1, 63.0}, 1);
    EXPECT_TRUE(c.P.isApprox(mat(2, 2, {1.3, 1, 1, 1.3}), 1e-14));
    EXPECT_NEAR(c.lambda_min_P, 0.3, 1e-14);
    EXPECT_NEAR(c.lambda_max_P, 2.3, 1e-14);
    EXPECT_TRUE(decay_matrix_closed_form(c.H, 1.3).isApprox(mat(2, 2, {1.69, 0.897, 0.897, 0.8561}), 1e-14));
    EXPECT_LE(c.q_residual, 1e-12);
    EXPECT_NEAR(c.lambda_min_Q, 0.28388049859996173, 1e-12);
    EXPECT_NEAR(c.norm_PLT1, 2.27305, 1e-12);
    EXPECT_NEAR(c.theta_const, 22.64740377592529, 1e-9);
    EXPECT_NEAR(c.alpha_rate, 0.05289698731676307, 1e-12);
    EXPECT_NEAR(c.dwell_T, 66.07627143582198, 1e-8);
    EXPECT_NEAR(c.omega_factor, 0.17418839318355733, 1e-12);
    EXPECT_NEAR(c.sigma_floor, std::sqrt(1.5), 1e-14);
}

TEST(Certificate, FixtureMatchesOracle) {
    const StabilityCertificate c = fixture_cert();
    EXPECT_LT(rel(c.lambda_min_P, oracle::kLambdaMinP), 1e-12);
    EXPECT_LT(rel(c.lambda_max_P, oracle::kLambdaMaxP), 1e-12);
    EXPECT_LT(rel(c.lambda_min_Q, oracle::kLambdaMinQ), 1e-12);
    EXPECT_LT(rel(c.norm_PLT1, oracle::kNormPLT1), 1e-12);
    EXPECT_LT(rel(c.theta_const, oracle::kTheta), 1e-12);
    EXPECT_LT(rel(c.alpha_rate, oracle::kAlpha), 1e-12);
    EXPECT_LT(rel(c.dwell_T, oracle::kDwell), 1e-10);
    EXPECT_LT(rel(c.omega_factor, oracle::kOmega), 1e-12);
    EXPECT_TRUE(c.cond1_ok);
    EXPECT_TRUE(c.zoom_in_feasible);
    EXPECT_EQ(c.edge_count, 5);
    EXPECT_LE(c.lyapunov_residual, 1e-9);

    // Printed reference constants (4-5 significant digits).
    EXPECT_LT(rel(c.lambda_max_P, fixture::reference::kLambdaMaxP), 1e-3);
    EXPECT_LT(rel(c.lambda_min_P, fixture::reference::kLambdaMinP), 1e-3);
    EXPECT_LT(rel(c.norm_PLT1, fixture::reference::kNormPLT1), 1e-3);
}

TEST(Certificate, DerivedIdentities) {
    const StabilityCertificate c = fixture_cert();
    EXPECT_NEAR(c.dwell_T, -2.0 * std::log(c.omega_factor) / c.alpha_rate, 1e-10);
    for (double mu : {1e-3, 1.0, 10.0, 1e4}) {
        EXPECT_LT(rel(c.r2_threshold(mu), c.r1_threshold(c.omega_factor * mu)), 1e-12);
    }
    EXPECT_NEAR(c.shrink, std::sqrt(c.lambda_min_P / c.lambda_max_P), 1e-15);
}

TEST(Certificate, BelowSigmaFloorReportsFloor) {
    try {
        build_certificate(fixture_tree(), 1.5, 0.75, fixture::quantizer(), 3);
        FAIL() << "expected CertificateError";
    } catch (const CertificateError& e) {
        EXPECT_NE(std::string(e.what()).find("1.59176"), std::string::npos) << e.what();
    }
}

// The first condition bounds M against Theta * delta, but Omega < 1 needs
// Theta * delta * (1 + eps): a large eps satisfies the former and not the latter.
TEST(Certificate, ConditionOneDoesNotImplyContraction) {
    const StabilityCertificate c = fixture_cert(2.0);
    EXPECT_TRUE(c.cond1_ok);
    EXPECT_GE(c.omega_factor, 1.0);
    EXPECT_LE(c.dwell_T, 0.0);
    EXPECT_FALSE(c.zoom_in_feasible);
    EXPECT_NE(c.infeasibility_reason().find("Omega"), std::string::npos);
}

TEST(Certificate, ConditionOneFailsForSmallRange) {
    const StabilityCertificate c = fixture_cert(0.75, {0.1, 5.0});
    EXPECT_FALSE(c.cond1_ok);
    EXPECT_FALSE(c.zoom_in_feasible);
    EXPECT_NE(c.infeasibility_reason().find("increase M"), std::string::npos);
}

TEST(Property, PositiveDefiniteAboveFloor) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> bump(1e-3, 1.0);
    std::uniform_int_distribution<int> dim(1, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const DirectedGraph g = test_support::random_qsc_digraph(rng);
        const TreeDecomposition d = decompose(g, build_matrices(g));
        const Matrix h = solve_lyapunov(d.essential_laplacian);
        const double sigma = sigma_floor(h) * (1.0 + bump(rng));
        const StabilityCertificate c = build_certificate(d, sigma, 0.75, {0.1, 63.0}, dim(rng));
        EXPECT_GT(c.lambda_min_P, 0.0);
        EXPECT_GT(c.lambda_min_Q, 0.0);
        EXPECT_LE(c.q_residual, 1e-9 * std::max(1.0, c.Q.cwiseAbs().maxCoeff()));
        EXPECT_LE(c.lyapunov_residual, 1e-9);
    }
}

TEST(LyapunovValue, Examples) {
    const Matrix p = lyapunov_weight(oracle::H(), fixture::kSigma);
    EXPECT_EQ(lyapunov_value(ReducedState::Zero(8, 3), p), 0.0);

    Vector unit = Vector::Zero(4);
    unit(2) = 1.0;
    EXPECT_EQ(lyapunov_value(unit, Matrix::Identity(4, 4), 1), 1.0);

    const Vector ones = Vector::Ones(24);
    const double v = lyapunov_value(ones, p, 3);
    const double brute = ones.dot(kron(p, Matrix::Identity(3, 3)) * ones);
    EXPECT_NEAR(v, brute, 1e-12);
    EXPECT_NEAR(v, oracle::kVAllOnes, 1e-9);
}

TEST(LyapunovValue, StackRoundTripMatchesKronecker) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const Matrix p = lyapunov_weight(oracle::H(), fixture::kSigma);
    Vector z(24);
    for (auto& x : z) x = nd(rng);
    const ReducedState zm = unstack(z, 3);
    EXPECT_EQ(stack(zm), z);
    EXPECT_NEAR(lyapunov_value(zm, p), z.dot(kron(p, Matrix::Identity(3, 3)) * z), 1e-10);
}

TEST(Ellipsoids, Membership) {
    const StabilityCertificate c = fixture_cert();
    const EllipsoidMembership zero = ellipsoid_membership(ReducedState::Zero(8, 3), c, 10.0);
    EXPECT_TRUE(zero.in_R1);
    EXPECT_TRUE(zero.in_R2);

    // Boundary is inclusive: P = I, z = (M, 0) gives V = M^2 = R1(1) exactly.
    Vector edge = Vector::Zero(2);
    edge(0) = 63.0;
    EXPECT_TRUE(ellipsoid_membership(edge, Matrix::Identity(2, 2), 1.0, {0.1, 63.0}, 0.75, 1.0, 1).in_R1);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    ReducedState z(8, 3);
    for (int i = 0; i < z.size(); ++i) z.data()[i] = nd(rng);
    const double target = 0.5 * (c.r1_threshold(10.0) + c.r2_threshold(10.0));
    z *= std::sqrt(target / lyapunov_value(z, c.P));
    const EllipsoidMembership between = ellipsoid_membership(z, c, 10.0);
    EXPECT_TRUE(between.in_R1);
    EXPECT_FALSE(between.in_R2);

    const EllipsoidMembership via_vector =
        ellipsoid_membership(stack(z), c.P, 10.0, c.quantizer, c.epsilon, c.theta_const, 3);
    EXPECT_EQ(via_vector.in_R1, between.in_R1);
    EXPECT_EQ(via_vector.in_R2, between.in_R2);
}
