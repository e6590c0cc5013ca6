#pragma once

// Finite-difference helpers shared by the unit tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace fdtest {

/// Fourth-order central first derivative of f along axis.
template <class F, std::size_t D>
double d1(const F& f, std::array<double, D> x, std::size_t axis, double h = 1e-3) {
    const double x0 = x[axis];
    auto at = [&](double s) {
        x[axis] = x0 + s;
        return f(x);
    };
    return (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
}

/// Fourth-order mixed/pure second derivative of f.
template <class F, std::size_t D>
double d2(const F& f, std::array<double, D> x, std::size_t i, std::size_t j, double h = 1e-3) {
    if (i == j) {
        const double x0 = x[i];
        auto at = [&](double s) {
            x[i] = x0 + s;
            return f(x);
        };
        return (-at(-2 * h) + 16 * at(-h) - 30 * at(0) + 16 * at(h) - at(2 * h)) / (12 * h * h);
    }
    auto g = [&](std::array<double, D> y) { return d1(f, y, j, h); };
    return d1(g, x, i, h);
}

/// max |a - b| / max |b|
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

}  // namespace fdtest
