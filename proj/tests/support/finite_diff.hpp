#pragma once

// Central finite-difference oracle, independent of the reverse-mode path it
// checks. `f` rebuilds the forward computation from a flat parameter vector
// and returns the scalar loss value.

#include <cmath>
#include <functional>
#include <vector>

namespace testsupport {

inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Vector-level relative error: ||a - b||_inf / (||b||_inf + eps).
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / (den + 1e-12);
}

}  // namespace testsupport
