#pragma once

// Five-agent reference network and its published reference values.
//
// Edge list: e1 = (1,2), e2 = (2,3), e3 = (3,4), e4 = (3,5), e5 = (5,1),
// weights (0.12, 0.24, 0.44, 0.43, 0.09), tree {e1..e4}, co-tree {e5}.
// This head/tail pattern was reconstructed as the one consistent with the
// reference T, L_hat_e and L_hat_O; recomputing them from it reproduces all
// three.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qedge/graph.hpp"
#include "qedge/quantizer.hpp"

namespace qedge::fixture {

inline DirectedGraph graph() {
    return DirectedGraph(5, {{0, 1, 0.12}, {1, 2, 0.24}, {2, 3, 0.44}, {2, 4, 0.43}, {4, 0, 0.09}});
}

inline std::vector<int> tree_edges() { return {0, 1, 2, 3}; }

inline constexpr double kSigma = 1.64;
inline constexpr double kEpsilon = 0.75;
inline constexpr double kDelta = 0.1;
inline constexpr double kRange = 63.0;
inline constexpr double kMu0 = 10.0;
inline constexpr int kStateDim = 3;

inline QuantizerConfig quantizer() { return {kDelta, kRange}; }

/// Reference values, as printed (2 decimals for matrices).
namespace reference {

inline Matrix T() {
    Matrix m(4, 1);
    m << -1.0, -1.0, 0.0, -1.0;
    return m;
}

inline Matrix R() {
    Matrix m(4, 5);
    m << 1, 0, 0, 0, -1,
         0, 1, 0, 0, -1,
         0, 0, 1, 0, 0,
         0, 0, 0, 1, -1;
    return m;
}

inline Matrix essential_laplacian() {
    Matrix m(4, 4);
    m << 0.21, 0.09, 0.00, 0.09,
        -0.12, 0.24, 0.00, 0.00,
         0.00, -0.24, 0.44, 0.00,
         0.00, -0.24, 0.00, 0.43;
    return m;
}

inline Matrix observation() {
    Matrix m(4, 5);
    m << 0.12, 0.00, 0.00, 0.00, -0.09,
        -0.12, 0.24, 0.00, 0.00, 0.00,
         0.00, -0.24, 0.44, 0.00, 0.00,
         0.00, -0.24, 0.00, 0.43, 0.00;
    return m;
}

inline Matrix H() {
    Matrix m(4, 4);
    m << 2.47, 0.16, 0.07, -0.26,
         0.16, 2.86, 0.39, 0.45,
         0.07, 0.39, 1.14, -0.01,
        -0.26, 0.45, -0.01, 1.22;
    return m;
}

inline constexpr double kLambdaMaxP = 8.098;
inline constexpr double kLambdaMinP = 0.6157;
inline constexpr double kNormPLT1 = 6.7121;
inline constexpr double kDwellT = 6.2597;
inline constexpr int kBits = 7;

}  // namespace reference

/// The shipped fixture config (also at configs/fixture.cfg).
inline std::string config_text() {
    return R"(# five-agent reference network, n = 3
nodes = 5
edge = 1 2 0.12
edge = 2 3 0.24
edge = 3 4 0.44
edge = 3 5 0.43
edge = 5 1 0.09
tree = 1 2 3 4
n = 3
sigma = 1.64
delta = 0.1
M = 63
epsilon = 0.75
mu0 = 10
dt = 0.001
horizon = 74
seed = 1
init = random
init_pos = 5
init_vel = 1
out = out/fixture
)";
}

}  // namespace qedge::fixture
