#pragma once

#include <algorithm>
#include <set>
#include <utility>

#include "advbench/ops.hpp"

namespace advbench::graph {

using autodiff::Tensor;

/// Undirected, unweighted graph stored as the sorted set of upper-triangle
/// edges. Symmetric and zero-diagonal by construction; attacks copy-on-flip.
class SparseSym {
public:
    SparseSym() = default;
    explicit SparseSym(std::size_t n) : n_(n) {}

    SparseSym(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) : n_(n) {
        for (auto [u, v] : edges) add_edge(u, v);
    }

    std::size_t num_nodes() const { return n_; }
    std::size_t num_edges() const { return edges_.size(); }

    bool has_edge(std::size_t u, std::size_t v) const {
        if (u == v) return false;
        return edges_.count(ordered(u, v)) > 0;
    }

    void add_edge(std::size_t u, std::size_t v) {
        check(u, v);
        if (u == v) throw std::invalid_argument("graph: self-loops are not representable");
        edges_.insert(ordered(u, v));
    }

    void remove_edge(std::size_t u, std::size_t v) {
        check(u, v);
        edges_.erase(ordered(u, v));
    }

    /// New graph with edge (u, v) toggled.
    SparseSym flipped(std::size_t u, std::size_t v) const {
        SparseSym g = *this;
        if (g.has_edge(u, v))
            g.remove_edge(u, v);
        else
            g.add_edge(u, v);
        return g;
    }

    std::size_t degree(std::size_t u) const {
        std::size_t d = 0;
        for (const auto& [a, b] : edges_) d += (a == u) + (b == u);
        return d;
    }

    std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> d(n_, 0);
        for (const auto& [a, b] : edges_) {
            ++d[a];
            ++d[b];
        }
        return d;
    }

    std::vector<std::size_t> neighbors(std::size_t u) const {
        std::vector<std::size_t> out;
        for (const auto& [a, b] : edges_) {
            if (a == u) out.push_back(b);
            if (b == u) out.push_back(a);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    const std::set<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

    Tensor to_dense() const {
        Tensor A = Tensor::zeros({n_, n_});
        for (const auto& [u, v] : edges_) {
            A.data()[u * n_ + v] = 1.0;
            A.data()[v * n_ + u] = 1.0;
        }
        return A;
    }

    static SparseSym from_dense(const Tensor& A, double tol = 0.5) {
        const std::size_t n = A.dim(0);
        SparseSym g(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (A.data()[i * n + j] > tol) g.add_edge(i, j);
        return g;
    }

private:
    static std::pair<std::size_t, std::size_t> ordered(std::size_t u, std::size_t v) {
        return {std::min(u, v), std::max(u, v)};
    }
    void check(std::size_t u, std::size_t v) const {
        if (u >= n_ || v >= n_)
            throw std::out_of_range("graph: node index out of range (n=" + std::to_string(n_) + ")");
    }

    std::size_t n_ = 0;
    std::set<std::pair<std::size_t, std::size_t>> edges_;
};

/// CSR real-valued sparse matrix; the weighted counterpart used for the
/// normalized adjacency.
struct SparseMat {
    std::size_t rows = 0, cols = 0;
    std::vector<std::size_t> row_ptr;  // rows + 1
    std::vector<std::size_t> col_idx;
    std::vector<double> values;

    static SparseMat from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::tuple<std::size_t, std::size_t, double>> trips) {
        std::sort(trips.begin(), trips.end());
        SparseMat m;
        m.rows = rows;
        m.cols = cols;
        m.row_ptr.assign(rows + 1, 0);
        for (const auto& [r, c, v] : trips) ++m.row_ptr[r + 1];
        for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
        m.col_idx.reserve(trips.size());
        m.values.reserve(trips.size());
        for (const auto& [r, c, v] : trips) {
            m.col_idx.push_back(c);
            m.values.push_back(v);
        }
        return m;
    }

    /// Dense matrix-vector-style product with a dense right factor.
    std::vector<double> multiply(const std::vector<double>& X, std::size_t d) const {
        std::vector<double> Y(rows * d, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
                const double v = values[p];
                const std::size_t c = col_idx[p];
                for (std::size_t j = 0; j < d; ++j) Y[r * d + j] += v * X[c * d + j];
            }
        return Y;
    }

    Tensor to_dense() const {
        Tensor A = Tensor::zeros({rows, cols});
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
                A.data()[r * cols + col_idx[p]] += values[p];
        return A;
    }
};

/// GCN renormalization A_hat = D~^{-1/2} (A + I) D~^{-1/2} for a binary
/// symmetric adjacency. Isolated nodes get a pure self-loop row.
inline SparseMat normalize_adj(const SparseSym& A) {
    const std::size_t n = A.num_nodes();
    auto deg = A.degrees();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
    std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
    trips.reserve(2 * A.num_edges() + n);
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (const auto& [u, v] : A.edges()) {
        const double w = inv_sqrt[u] * inv_sqrt[v];
        trips.emplace_back(u, v, w);
        trips.emplace_back(v, u, w);
    }
    return SparseMat::from_triplets(n, n, std::move(trips));
}

/// Same renormalization for a dense nonnegative weighted adjacency (used by
/// the SVD defense). Zero rows fall back to a unit self-loop.
inline Tensor normalize_adj_dense(const Tensor& A) {
    const std::size_t n = A.dim(0);
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) deg[i] += A.data()[i * n + j];
        deg[i] += 1.0;  // self loop
    }
    Tensor out = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = A.data()[i * n + j] + (i == j ? 1.0 : 0.0);
            if (a != 0.0) out.data()[i * n + j] = a / std::sqrt(deg[i] * deg[j]);
        }
    return out;
}

/// Sparse-matrix x dense-tensor product registered as an autodiff op. The
/// sparse factor is constant; gradients flow through the dense factor only:
/// dX += S^T dY.
inline Tensor spmm(const SparseMat& S, const Tensor& X) {
    if (X.rank() != 2 || X.dim(0) != S.cols)
        throw std::invalid_argument("spmm: incompatible shapes sparse [" + std::to_string(S.rows) + " x " +
                                    std::to_string(S.cols) + "] vs " + autodiff::shape_str(X.shape()));
    const std::size_t d = X.dim(1);
    auto y = S.multiply(X.data(), d);
    auto Sp = std::make_shared<SparseMat>(S);
    return autodiff::make_op("spmm", {S.rows, d}, std::move(y), {X}, [xn = X.node(), Sp, d](autodiff::Node& o) {
        xn->ensure_grad();
        // S^T accumulate: iterate rows of S, scatter into columns
        for (std::size_t r = 0; r < Sp->rows; ++r)
            for (std::size_t p = Sp->row_ptr[r]; p < Sp->row_ptr[r + 1]; ++p) {
                const double v = Sp->values[p];
                const std::size_t c = Sp->col_idx[p];
                for (std::size_t j = 0; j < d; ++j) xn->grad[c * d + j] += v * o.grad[r * d + j];
            }
    });
}

/// Dense differentiable renormalization used when gradients with respect to
/// the adjacency itself are needed. A must be [n, n] with nonnegative
/// entries; the expression keeps every step on the tape.
inline Tensor normalize_adj_ops(const Tensor& A) {
    using namespace autodiff;
    const std::size_t n = A.dim(0);
    Tensor At = add(A, Tensor::identity(n));
    Tensor deg = matmul(At, Tensor::ones({n, 1}));         // [n, 1]
    Tensor r = pow_scalar(deg, -0.5);                      // [n, 1]
    Tensor scale = matmul(r, transpose(r));                // [n, n] outer product
    return mul(At, scale);
}

}  // namespace advbench::graph
