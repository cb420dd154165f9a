#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "advbench/tensor.hpp"

namespace advbench::autodiff {

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

inline bool is_scalar(const Tensor& t) { return t.size() == 1; }

// last axis length and number of rows, treating 1-D as a single row
inline std::pair<std::size_t, std::size_t> row_layout(const Tensor& t) {
    const auto& s = t.shape();
    const std::size_t cols = s.back();
    return {t.size() / cols, cols};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic (broadcasting limited to scalar-vs-tensor)

inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool sa = detail::is_scalar(a), sb = detail::is_scalar(b);
    if (!sa && !sb) detail::check_same_shape("add", a, b);
    const Tensor& big = sa && !sb ? b : a;
    std::vector<double> out(big.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[sa ? 0 : i] + b.data()[sb ? 0 : i];
    return make_op("add", big.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node(), sa, sb](Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            if (sa && o.size() > 1)
                for (double g : o.grad) an->grad[0] += g;
            else
                for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            if (sb && o.size() > 1)
                for (double g : o.grad) bn->grad[0] += g;
            else
                for (std::size_t i = 0; i < o.size(); ++i) bn->grad[i] += o.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    const bool sa = detail::is_scalar(a), sb = detail::is_scalar(b);
    if (!sa && !sb) detail::check_same_shape("sub", a, b);
    const Tensor& big = sa && !sb ? b : a;
    std::vector<double> out(big.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[sa ? 0 : i] - b.data()[sb ? 0 : i];
    return make_op("sub", big.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node(), sa, sb](Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            if (sa && o.size() > 1)
                for (double g : o.grad) an->grad[0] += g;
            else
                for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            if (sb && o.size() > 1)
                for (double g : o.grad) bn->grad[0] -= g;
            else
                for (std::size_t i = 0; i < o.size(); ++i) bn->grad[i] -= o.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    const bool sa = detail::is_scalar(a), sb = detail::is_scalar(b);
    if (!sa && !sb) detail::check_same_shape("mul", a, b);
    const Tensor& big = sa && !sb ? b : a;
    std::vector<double> out(big.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[sa ? 0 : i] * b.data()[sb ? 0 : i];
    return make_op("mul", big.shape(), std::move(out), {a, b}, [an = a.node(), bn = b.node(), sa, sb](Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.size(); ++i)
                an->grad[sa && o.size() > 1 ? 0 : i] += o.grad[i] * bn->data[sb ? 0 : i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.size(); ++i)
                bn->grad[sb && o.size() > 1 ? 0 : i] += o.grad[i] * an->data[sa ? 0 : i];
        }
    });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return make_op("mul_scalar", a.shape(), std::move(out), {a}, [an = a.node(), c](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i] * c;
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return make_op("add_scalar", a.shape(), std::move(out), {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
    });
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

/// Elementwise x^p. Requires positive inputs unless p is a nonnegative integer.
inline Tensor pow_scalar(const Tensor& a, double p) {
    const bool integral = p == std::floor(p) && p >= 0.0;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        if (!integral && x <= 0.0)
            throw std::domain_error("pow_scalar: non-positive base " + std::to_string(x) +
                                    " with exponent " + std::to_string(p));
        out[i] = std::pow(x, p);
    }
    return make_op("pow_scalar", a.shape(), std::move(out), {a}, [an = a.node(), p](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double x = an->data[i];
            an->grad[i] += o.grad[i] * p * (x == 0.0 ? 0.0 : std::pow(x, p - 1.0));
        }
    });
}

// ---------------------------------------------------------------------------
// matrix ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.data()[i * k + l];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.data()[l * n + j];
        }
    return make_op("matmul", {m, n}, std::move(out), {a, b},
                   [an = a.node(), bn = b.node(), m, k, n](Node& o) {
                       if (an->requires_grad) {
                           an->ensure_grad();  // dA += G * B^T
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) {
                                   const double g = o.grad[i * n + j];
                                   if (g == 0.0) continue;
                                   for (std::size_t l = 0; l < k; ++l)
                                       an->grad[i * k + l] += g * bn->data[l * n + j];
                               }
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();  // dB += A^T * G
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t l = 0; l < k; ++l) {
                                   const double av = an->data[i * k + l];
                                   if (av == 0.0) continue;
                                   for (std::size_t j = 0; j < n; ++j)
                                       bn->grad[l * n + j] += av * o.grad[i * n + j];
                               }
                       }
                   });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expected 2-D, got " + shape_str(a.shape()));
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    return make_op("transpose", {n, m}, std::move(out), {a}, [an = a.node(), m, n](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o.grad[j * m + i];
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    return make_op("reshape", std::move(shape), a.data(), {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) an->grad[i] += o.grad[i];
    });
}

/// Gather rows of a 2-D tensor. Backward scatter-adds.
inline Tensor select_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    if (a.rank() != 2) throw std::invalid_argument("select_rows: expected 2-D, got " + shape_str(a.shape()));
    const std::size_t n = a.dim(0), d = a.dim(1);
    std::vector<double> out(idx.size() * d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= n)
            throw std::out_of_range("select_rows: index " + std::to_string(idx[r]) + " out of range [0, " +
                                    std::to_string(n) + ")");
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    return make_op("select_rows", {idx.size(), d}, std::move(out), {a}, [an = a.node(), idx, d](Node& o) {
        an->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) an->grad[idx[r] * d + j] += o.grad[r * d + j];
    });
}

/// Single element by flat index, as a scalar tensor.
inline Tensor at(const Tensor& a, std::size_t flat_index) {
    if (flat_index >= a.size())
        throw std::out_of_range("at: flat index " + std::to_string(flat_index) + " out of range for " +
                                shape_str(a.shape()));
    return make_op("at", {1}, {a.data()[flat_index]}, {a}, [an = a.node(), flat_index](Node& o) {
        an->ensure_grad();
        an->grad[flat_index] += o.grad[0];
    });
}

// ---------------------------------------------------------------------------
// nonlinearities

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    return make_op("relu", a.shape(), std::move(out), {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i)
            if (an->data[i] > 0.0) an->grad[i] += o.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return make_op("sigmoid", a.shape(), std::move(out), {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double y = o.data[i];
            an->grad[i] += o.grad[i] * y * (1.0 - y);
        }
    });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    return make_op("tanh", a.shape(), std::move(out), {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double y = o.data[i];
            an->grad[i] += o.grad[i] * (1.0 - y * y);
        }
    });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be < hi");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a.data()[i]));
    return make_op("clamp", a.shape(), std::move(out), {a}, [an = a.node(), lo, hi](Node& o) {
        an->ensure_grad();
        // identity inside the active interval, zero outside
        for (std::size_t i = 0; i < o.size(); ++i)
            if (an->data[i] >= lo && an->data[i] <= hi) an->grad[i] += o.grad[i];
    });
}

// ---------------------------------------------------------------------------
// softmax family (row-wise over the last axis; stabilized by max-subtraction)

inline Tensor softmax(const Tensor& a) {
    auto [rows, cols] = detail::row_layout(a);
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += (out[r * cols + j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] /= sum;
    }
    return make_op("softmax", a.shape(), std::move(out), {a}, [an = a.node(), rows = rows, cols = cols](Node& o) {
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = o.data.data() + r * cols;
            const double* g = o.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < cols; ++j) an->grad[r * cols + j] += (g[j] - dot) * y[j];
        }
    });
}

inline Tensor log_softmax(const Tensor& a) {
    auto [rows, cols] = detail::row_layout(a);
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.data().data() + r * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x[j] - lse;
    }
    return make_op("log_softmax", a.shape(), std::move(out), {a},
                   [an = a.node(), rows = rows, cols = cols](Node& o) {
                       an->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* y = o.data.data() + r * cols;
                           const double* g = o.grad.data() + r * cols;
                           double gsum = 0.0;
                           for (std::size_t j = 0; j < cols; ++j) gsum += g[j];
                           for (std::size_t j = 0; j < cols; ++j)
                               an->grad[r * cols + j] += g[j] - std::exp(y[j]) * gsum;
                       }
                   });
}

/// Mean cross-entropy of logits [batch, classes] (or [classes]) against
/// integer labels.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    auto [rows, cols] = detail::row_layout(logits);
    if (labels.size() != rows)
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(rows) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= cols)
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside class range [0, " +
                                    std::to_string(cols) + ")");
    // cache log-softmax for the backward pass
    std::vector<double> logp(logits.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = logits.data().data() + r * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < cols; ++j) logp[r * cols + j] = x[j] - lse;
    }
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) loss -= logp[r * cols + static_cast<std::size_t>(labels[r])];
    loss /= static_cast<double>(rows);
    return make_op("cross_entropy", {1}, {loss}, {logits},
                   [an = logits.node(), labels, logp = std::move(logp), rows = rows, cols = cols](Node& o) {
                       an->ensure_grad();
                       const double g0 = o.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < cols; ++j) {
                               const double soft = std::exp(logp[r * cols + j]);
                               const double onehot = (static_cast<std::size_t>(labels[r]) == j) ? 1.0 : 0.0;
                               an->grad[r * cols + j] += g0 * (soft - onehot);
                           }
                   });
}

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op("sum", {1}, {s}, {a}, [an = a.node()](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double n = static_cast<double>(a.size());
    return make_op("mean", {1}, {s / n}, {a}, [an = a.node(), n](Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0] / n;
    });
}

inline Tensor l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    const double norm = std::sqrt(s);
    return make_op("l2_norm", {1}, {norm}, {a}, [an = a.node(), norm](Node& o) {
        an->ensure_grad();
        if (norm == 0.0) return;  // subgradient 0 at the origin
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0] * an->data[i] / norm;
    });
}

// ---------------------------------------------------------------------------
// composites

/// KL(softmax(p) || softmax(q)) averaged over rows, built from primitives.
inline Tensor kl_divergence(const Tensor& logits_p, const Tensor& logits_q) {
    detail::check_same_shape("kl_divergence", logits_p, logits_q);
    auto [rows, cols] = detail::row_layout(logits_p);
    (void)cols;
    Tensor p = softmax(logits_p);
    Tensor diff = sub(log_softmax(logits_p), log_softmax(logits_q));
    return mul_scalar(sum(mul(p, diff)), 1.0 / static_cast<double>(rows));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

// ---------------------------------------------------------------------------
// non-differentiable helpers on raw buffers

inline std::vector<int> argmax_rows(const Tensor& t) {
    auto [rows, cols] = detail::row_layout(t);
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        // ties break toward the lowest class index
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j)
            if (t.data()[r * cols + j] > t.data()[r * cols + best]) best = j;
        out[r] = static_cast<int>(best);
    }
    return out;
}

inline double linf_dist(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

inline double l2_dist(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline std::size_t l0_dist(const Tensor& a, const Tensor& b, double tol = 0.0) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a.data()[i] - b.data()[i]) > tol) ++c;
    return c;
}

}  // namespace advbench::autodiff
