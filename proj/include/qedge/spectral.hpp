#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "qedge/errors.hpp"

namespace qedge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigenvalues = std::vector<std::complex<double>>;

/// Eigenvalues of a square matrix, sorted by real part, then imaginary part.
inline Eigenvalues spectrum(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ValidationError("spectrum: matrix is " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + ", expected square");
    }
    Eigenvalues out;
    if (a.rows() == 0) return out;
    Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw ConsistencyError("spectrum: eigenvalue iteration did not converge");
    }
    const auto& ev = solver.eigenvalues();
    out.assign(ev.data(), ev.data() + ev.size());
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        if (x.real() != y.real()) return x.real() < y.real();
        return x.imag() < y.imag();
    });
    return out;
}

inline std::size_t count_near_zero(const Eigenvalues& ev, double tol) {
    return static_cast<std::size_t>(
        std::count_if(ev.begin(), ev.end(), [tol](const auto& z) { return std::abs(z) < tol; }));
}

inline Eigenvalues nonzero_part(const Eigenvalues& ev, double tol) {
    Eigenvalues out;
    std::copy_if(ev.begin(), ev.end(), std::back_inserter(out),
                 [tol](const auto& z) { return std::abs(z) >= tol; });
    return out;
}

/// Largest distance in a greedy nearest-neighbour pairing of two multisets.
/// Infinity when the sizes differ.
inline double multiset_distance(const Eigenvalues& a, const Eigenvalues& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    std::vector<bool> used(b.size(), false);
    double worst = 0.0;
    for (const auto& x : a) {
        std::size_t best = b.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(x - b[j]);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        used[best] = true;
        worst = std::max(worst, best_d);
    }
    return worst;
}

inline bool multiset_equal(const Eigenvalues& a, const Eigenvalues& b, double tol) {
    return multiset_distance(a, b) <= tol;
}

/// Eigenvalues of the symmetric part, ascending.
inline Vector symmetric_eigenvalues(const Matrix& a) {
    if (a.rows() == 0) return Vector{};
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

/// Spectral (2-)norm.
inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

}  // namespace qedge
