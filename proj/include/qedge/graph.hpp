#pragma once

// Graph-derived matrices for directed edge agreement.
//
// Conventions: nodes and edges are 0-based in this API. An edge e_k = (j, i)
// carries information from its tail j to its head i; column k of every
// node-by-edge matrix belongs to e_k, in the order the edges were given.
//
//   E       incidence, +1 at the tail, -1 at the head
//   E_in    in-incidence, -1 at the head only
//   E_in_w  E_in * W, W = diag(weights)
//   L_G     E_in_w * E^T   (graph Laplacian)
//   L_e     E^T * E_in_w   (edge Laplacian)

#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qedge/errors.hpp"
#include "qedge/spectral.hpp"

namespace qedge {

struct Tolerances {
    double construction = 1e-12;
    double spectral = 1e-9;
};

struct Edge {
    int tail = 0;
    int head = 0;
    double weight = 1.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

inline std::string describe_edge(std::size_t k, const Edge& e) {
    return "edge e" + std::to_string(k + 1) + " (" + std::to_string(e.tail + 1) + " -> " +
           std::to_string(e.head + 1) + ", w = " + std::to_string(e.weight) + ")";
}

/// Weighted digraph with a fixed edge order. Validated on construction.
class DirectedGraph {
public:
    DirectedGraph(int node_count, std::vector<Edge> edges)
        : node_count_(node_count), edges_(std::move(edges)) {
        if (node_count_ < 1) {
            throw ValidationError("graph needs at least one node, got " + std::to_string(node_count_));
        }
        std::set<std::pair<int, int>> seen;
        for (std::size_t k = 0; k < edges_.size(); ++k) {
            const Edge& e = edges_[k];
            if (e.tail < 0 || e.tail >= node_count_ || e.head < 0 || e.head >= node_count_) {
                throw ValidationError(describe_edge(k, e) + ": node index outside [1, " +
                                      std::to_string(node_count_) + "]");
            }
            if (e.tail == e.head) throw ValidationError(describe_edge(k, e) + ": self-loop");
            if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
                throw ValidationError(describe_edge(k, e) + ": weight must be positive and finite");
            }
            if (!seen.emplace(e.tail, e.head).second) {
                throw ValidationError(describe_edge(k, e) + ": duplicate edge (multigraphs unsupported)");
            }
        }
    }

    int node_count() const noexcept { return node_count_; }
    int edge_count() const noexcept { return static_cast<int>(edges_.size()); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Edge& edge(int k) const { return edges_.at(static_cast<std::size_t>(k)); }

    friend bool operator==(const DirectedGraph&, const DirectedGraph&) = default;

private:
    int node_count_;
    std::vector<Edge> edges_;
};

struct GraphMatrices {
    Matrix incidence;              // E,      N x L
    Matrix in_incidence;           // E_in,   N x L
    Matrix weighted_in_incidence;  // E_in_w, N x L
    Matrix graph_laplacian;        // L_G,    N x N
    Matrix edge_laplacian;         // L_e,    L x L
};

inline GraphMatrices build_matrices(const DirectedGraph& g) {
    const int n = g.node_count();
    const int l = g.edge_count();
    GraphMatrices m;
    m.incidence = Matrix::Zero(n, l);
    m.in_incidence = Matrix::Zero(n, l);
    m.weighted_in_incidence = Matrix::Zero(n, l);
    for (int k = 0; k < l; ++k) {
        const Edge& e = g.edge(k);
        m.incidence(e.tail, k) = 1.0;
        m.incidence(e.head, k) = -1.0;
        m.in_incidence(e.head, k) = -1.0;
        m.weighted_in_incidence(e.head, k) = -e.weight;
    }
    m.graph_laplacian = m.weighted_in_incidence * m.incidence.transpose();
    m.edge_laplacian = m.incidence.transpose() * m.weighted_in_incidence;
    return m;
}

namespace detail {

/// Breadth-first search from root. Returns tree edges in discovery order;
/// `reached` gets the number of nodes visited (root included).
inline std::vector<int> bfs_tree(const DirectedGraph& g, int root, int& reached) {
    std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(g.node_count()));
    for (int k = 0; k < g.edge_count(); ++k) out_edges[static_cast<std::size_t>(g.edge(k).tail)].push_back(k);

    std::vector<bool> visited(static_cast<std::size_t>(g.node_count()), false);
    std::vector<int> tree;
    std::queue<int> frontier;
    visited[static_cast<std::size_t>(root)] = true;
    frontier.push(root);
    reached = 1;
    while (!frontier.empty()) {
        const int u = frontier.front();
        frontier.pop();
        for (int k : out_edges[static_cast<std::size_t>(u)]) {
            const int v = g.edge(k).head;
            if (visited[static_cast<std::size_t>(v)]) continue;
            visited[static_cast<std::size_t>(v)] = true;
            tree.push_back(k);
            frontier.push(v);
            ++reached;
        }
    }
    return tree;
}

}  // namespace detail

/// Smallest node from which every other node is reachable, if any.
inline std::optional<int> spanning_root(const DirectedGraph& g) {
    for (int r = 0; r < g.node_count(); ++r) {
        int reached = 0;
        detail::bfs_tree(g, r, reached);
        if (reached == g.node_count()) return r;
    }
    return std::nullopt;
}

inline bool is_quasi_strongly_connected(const DirectedGraph& g) { return spanning_root(g).has_value(); }

/// Spanning-tree / co-tree split and the matrices derived from it.
struct TreeDecomposition {
    int root = 0;
    std::vector<int> tree_edges;    // N-1 edge indices, rows of R and L_hat_e follow this order
    std::vector<int> cotree_edges;  // L-N+1 edge indices, ascending
    Matrix tree_incidence;          // E_T, N x (N-1)
    Matrix cotree_incidence;        // E_C, N x (L-N+1)
    Matrix T;                       // (N-1) x (L-N+1), E_T * T = E_C
    Matrix R;                       // (N-1) x L, columns in edge order, E = E_T * R
    Matrix theta;                   // L x (L-N+1), orthonormal basis of null(E)
    Matrix essential_laplacian;     // L_hat_e = E_T^T E_in_w R^T, (N-1) x (N-1)
    Matrix observation;             // L_hat_O = E_T^T E_in_w, (N-1) x L

    int tree_size() const noexcept { return static_cast<int>(tree_edges.size()); }
    int cotree_size() const noexcept { return static_cast<int>(cotree_edges.size()); }
};

namespace detail {

inline void check_explicit_tree(const DirectedGraph& g, std::span<const int> tree, int& root) {
    const int n = g.node_count();
    if (static_cast<int>(tree.size()) != n - 1) {
        throw NoSpanningTreeError("explicit tree has " + std::to_string(tree.size()) + " edges, expected " +
                                  std::to_string(n - 1));
    }
    std::vector<int> in_degree(static_cast<std::size_t>(n), 0);
    std::set<int> distinct;
    for (int k : tree) {
        if (k < 0 || k >= g.edge_count()) {
            throw NoSpanningTreeError("tree edge index " + std::to_string(k + 1) + " out of range");
        }
        if (!distinct.insert(k).second) {
            throw NoSpanningTreeError("tree edge e" + std::to_string(k + 1) + " listed twice");
        }
        ++in_degree[static_cast<std::size_t>(g.edge(k).head)];
    }
    root = -1;
    for (int v = 0; v < n; ++v) {
        if (in_degree[static_cast<std::size_t>(v)] == 0) {
            if (root >= 0) throw NoSpanningTreeError("explicit tree has more than one root");
            root = v;
        } else if (in_degree[static_cast<std::size_t>(v)] > 1) {
            throw NoSpanningTreeError("node " + std::to_string(v + 1) + " has two parents in the explicit tree");
        }
    }
    if (root < 0) throw NoSpanningTreeError("explicit tree contains a cycle");

    std::vector<Edge> sub;
    for (int k : tree) sub.push_back(g.edge(k));
    int reached = 0;
    bfs_tree(DirectedGraph(n, std::move(sub)), root, reached);
    if (reached != n) throw NoSpanningTreeError("explicit tree does not reach every node from its root");
}

/// Orthonormal null-space basis of E from the fundamental cycles [-T; I],
/// orthogonalized by Householder QR. Each column's first entry with
/// magnitude above `tol` is made positive.
inline Matrix flow_basis(const Matrix& T, const std::vector<int>& tree, const std::vector<int>& cotree, int l,
                         double tol) {
    const auto c = static_cast<Eigen::Index>(cotree.size());
    Matrix cycles = Matrix::Zero(l, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        cycles(cotree[static_cast<std::size_t>(j)], j) = 1.0;
        for (std::size_t k = 0; k < tree.size(); ++k) {
            cycles(tree[k], j) = -T(static_cast<Eigen::Index>(k), j);
        }
    }
    if (c == 0) return cycles;
    Eigen::HouseholderQR<Matrix> qr(cycles);
    Matrix q = qr.householderQ() * Matrix::Identity(l, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < l; ++i) {
            if (std::abs(q(i, j)) > tol) {
                if (q(i, j) < 0.0) q.col(j) *= -1.0;
                break;
            }
        }
    }
    return q;
}

inline TreeDecomposition assemble(const DirectedGraph& g, const GraphMatrices& m, int root, std::vector<int> tree,
                                  const Tolerances& tol) {
    const int n = g.node_count();
    const int l = g.edge_count();
    TreeDecomposition d;
    d.root = root;
    d.tree_edges = std::move(tree);
    std::vector<bool> in_tree(static_cast<std::size_t>(l), false);
    for (int k : d.tree_edges) in_tree[static_cast<std::size_t>(k)] = true;
    for (int k = 0; k < l; ++k) {
        if (!in_tree[static_cast<std::size_t>(k)]) d.cotree_edges.push_back(k);
    }
    const auto t = static_cast<Eigen::Index>(d.tree_edges.size());
    const auto c = static_cast<Eigen::Index>(d.cotree_edges.size());

    d.tree_incidence.resize(n, t);
    for (Eigen::Index k = 0; k < t; ++k) d.tree_incidence.col(k) = m.incidence.col(d.tree_edges[static_cast<std::size_t>(k)]);
    d.cotree_incidence.resize(n, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        d.cotree_incidence.col(j) = m.incidence.col(d.cotree_edges[static_cast<std::size_t>(j)]);
    }

    // T = (E_T^T E_T)^{-1} E_T^T E_C; E_T has full column rank for a spanning tree.
    const Matrix gram = d.tree_incidence.transpose() * d.tree_incidence;
    Eigen::LDLT<Matrix> ldlt(gram);
    if (t > 0 && (ldlt.info() != Eigen::Success || !ldlt.isPositive())) {
        throw ConsistencyError("E_T^T E_T is not positive definite");
    }
    d.T = t > 0 ? Matrix(ldlt.solve(d.tree_incidence.transpose() * d.cotree_incidence)) : Matrix::Zero(0, c);

    d.R = Matrix::Zero(t, l);
    for (Eigen::Index k = 0; k < t; ++k) d.R(k, d.tree_edges[static_cast<std::size_t>(k)]) = 1.0;
    for (Eigen::Index j = 0; j < c; ++j) d.R.col(d.cotree_edges[static_cast<std::size_t>(j)]) = d.T.col(j);

    d.theta = flow_basis(d.T, d.tree_edges, d.cotree_edges, l, 1e-12);
    d.observation = d.tree_incidence.transpose() * m.weighted_in_incidence;
    d.essential_laplacian = d.observation * d.R.transpose();

    const double scale = 1.0 + static_cast<double>(n);
    if (c > 0) {
        const double r1 = (d.tree_incidence * d.T - d.cotree_incidence).cwiseAbs().maxCoeff();
        const double r2 = (m.incidence * d.theta).cwiseAbs().maxCoeff();
        const double r3 = (d.theta.transpose() * d.theta - Matrix::Identity(c, c)).cwiseAbs().maxCoeff();
        if (r1 > tol.construction * scale || r2 > tol.construction * scale || r3 > tol.construction * scale) {
            throw ConsistencyError("tree decomposition identities violated (E_T T - E_C: " + std::to_string(r1) +
                                   ", E theta: " + std::to_string(r2) + ", theta^T theta - I: " +
                                   std::to_string(r3) + ")");
        }
    }
    return d;
}

}  // namespace detail

/// Decomposition along the breadth-first tree from the smallest spanning root.
inline TreeDecomposition decompose(const DirectedGraph& g, const GraphMatrices& m, const Tolerances& tol = {}) {
    const auto root = spanning_root(g);
    if (!root) throw NoSpanningTreeError();
    int reached = 0;
    auto tree = detail::bfs_tree(g, *root, reached);
    return detail::assemble(g, m, *root, std::move(tree), tol);
}

/// Decomposition along a caller-chosen spanning tree (edge indices, in row order).
inline TreeDecomposition decompose(const DirectedGraph& g, const GraphMatrices& m, std::span<const int> tree_edges,
                                   const Tolerances& tol = {}) {
    int root = -1;
    detail::check_explicit_tree(g, tree_edges, root);
    return detail::assemble(g, m, root, std::vector<int>(tree_edges.begin(), tree_edges.end()), tol);
}

/// S_e^{-1} L_e S_e with S_e = [R^T, theta], split into its 2x2 block structure.
struct SimilarityBlocks {
    Matrix transformed;
    Matrix top_left;      // (N-1) x (N-1), equals L_hat_e
    Matrix top_right;     // (N-1) x (L-N+1), equals E_T^T E_in_w theta
    Matrix bottom_left;   // zero
    Matrix bottom_right;  // zero
};

inline SimilarityBlocks similarity_blocks(const GraphMatrices& m, const TreeDecomposition& d) {
    const auto t = static_cast<Eigen::Index>(d.tree_size());
    const auto c = static_cast<Eigen::Index>(d.cotree_size());
    const auto l = t + c;

    Matrix s(l, l);
    s << d.R.transpose(), d.theta;

    const Matrix rrt = d.R * d.R.transpose();
    Eigen::LLT<Matrix> llt(rrt);
    if (t > 0 && llt.info() != Eigen::Success) {
        throw ConsistencyError("R R^T is singular; tree decomposition is inconsistent");
    }
    Matrix s_inv(l, l);
    s_inv << (t > 0 ? Matrix(llt.solve(d.R)) : Matrix::Zero(0, l)), d.theta.transpose();

    SimilarityBlocks b;
    b.transformed = s_inv * m.edge_laplacian * s;
    b.top_left = b.transformed.topLeftCorner(t, t);
    b.top_right = b.transformed.topRightCorner(t, c);
    b.bottom_left = b.transformed.bottomLeftCorner(c, t);
    b.bottom_right = b.transformed.bottomRightCorner(c, c);
    return b;
}

}  // namespace qedge
