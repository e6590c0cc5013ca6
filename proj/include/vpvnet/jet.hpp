#pragma once

// Order-2 Taylor jets in the spatial inputs.
//
// A Jet2<D> carries the value of a scalar together with its gradient and its
// (symmetric) Hessian with respect to D spatial coordinates. Arithmetic on
// jets applies the chain and product rules truncated at second order, so any
// expression evaluated on seeded jets yields exact first and second
// derivatives up to floating point rounding.

#include "vpvnet/errors.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

namespace vpvnet {

/// Number of packed entries of a symmetric D x D matrix.
constexpr std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

/// Packed index of entry (i, j) of a symmetric D x D matrix, i and j in any
/// order. Row-major upper triangle: (0,0) (0,1) .. (0,D-1) (1,1) ...
constexpr std::size_t packed_index(std::size_t d, std::size_t i, std::size_t j) {
    if (i > j) {
        const std::size_t t = i;
        i = j;
        j = t;
    }
    return i * d - i * (i - 1) / 2 + (j - i);
}

template <std::size_t D>
struct Jet2 {
    static_assert(D == 2 || D == 3, "jets are defined for 2 or 3 spatial inputs");
    static constexpr std::size_t dim = D;
    static constexpr std::size_t n_hess = packed_size(D);
    /// value + gradient + packed Hessian
    static constexpr std::size_t n_components = 1 + D + n_hess;

    double value = 0.0;
    std::array<double, D> grad{};
    std::array<double, n_hess> hess{};

    Jet2() = default;
    /* implicit */ Jet2(double v) : value(v) {}

    double& h(std::size_t i, std::size_t j) { return hess[packed_index(D, i, j)]; }
    double h(std::size_t i, std::size_t j) const { return hess[packed_index(D, i, j)]; }

    /// Flat view: [value, grad..., hess...].
    double component(std::size_t c) const {
        if (c == 0) return value;
        if (c <= D) return grad[c - 1];
        return hess[c - 1 - D];
    }
    double& component(std::size_t c) {
        if (c == 0) return value;
        if (c <= D) return grad[c - 1];
        return hess[c - 1 - D];
    }

    static Jet2 constant(double v) { return Jet2(v); }

    /// Jet of the i-th input coordinate at value v.
    static Jet2 variable(double v, std::size_t i) {
        Jet2 j(v);
        j.grad[i] = 1.0;
        return j;
    }
};

/// Jets of the input coordinates at point x.
template <std::size_t D>
std::array<Jet2<D>, D> seed_inputs(const std::array<double, D>& x) {
    std::array<Jet2<D>, D> out;
    for (std::size_t i = 0; i < D; ++i) out[i] = Jet2<D>::variable(x[i], i);
    return out;
}

/// phi(a) given phi(a0), phi'(a0), phi''(a0).
template <std::size_t D>
Jet2<D> compose(const Jet2<D>& a, double f0, double f1, double f2) {
    Jet2<D> r(f0);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = f1 * a.grad[i];
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = i; j < D; ++j) r.h(i, j) = f2 * a.grad[i] * a.grad[j] + f1 * a.h(i, j);
    return r;
}

template <std::size_t D>
Jet2<D> operator+(const Jet2<D>& a, const Jet2<D>& b) {
    Jet2<D> r(a.value + b.value);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = a.grad[i] + b.grad[i];
    for (std::size_t k = 0; k < Jet2<D>::n_hess; ++k) r.hess[k] = a.hess[k] + b.hess[k];
    return r;
}

template <std::size_t D>
Jet2<D> operator-(const Jet2<D>& a, const Jet2<D>& b) {
    Jet2<D> r(a.value - b.value);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = a.grad[i] - b.grad[i];
    for (std::size_t k = 0; k < Jet2<D>::n_hess; ++k) r.hess[k] = a.hess[k] - b.hess[k];
    return r;
}

template <std::size_t D>
Jet2<D> operator-(const Jet2<D>& a) {
    Jet2<D> r(-a.value);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = -a.grad[i];
    for (std::size_t k = 0; k < Jet2<D>::n_hess; ++k) r.hess[k] = -a.hess[k];
    return r;
}

template <std::size_t D>
Jet2<D> scale(const Jet2<D>& a, double s) {
    Jet2<D> r(s * a.value);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = s * a.grad[i];
    for (std::size_t k = 0; k < Jet2<D>::n_hess; ++k) r.hess[k] = s * a.hess[k];
    return r;
}

template <std::size_t D>
Jet2<D> operator*(const Jet2<D>& a, const Jet2<D>& b) {
    Jet2<D> r(a.value * b.value);
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = a.value * b.grad[i] + b.value * a.grad[i];
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = i; j < D; ++j)
            r.h(i, j) = a.value * b.h(i, j) + b.value * a.h(i, j) + a.grad[i] * b.grad[j] +
                        a.grad[j] * b.grad[i];
    return r;
}

template <std::size_t D>
Jet2<D> operator*(double s, const Jet2<D>& a) { return scale(a, s); }
template <std::size_t D>
Jet2<D> operator*(const Jet2<D>& a, double s) { return scale(a, s); }

template <std::size_t D>
Jet2<D> operator+(const Jet2<D>& a, double s) {
    Jet2<D> r = a;
    r.value += s;
    return r;
}
template <std::size_t D>
Jet2<D> operator+(double s, const Jet2<D>& a) { return a + s; }
template <std::size_t D>
Jet2<D> operator-(const Jet2<D>& a, double s) { return a + (-s); }
template <std::size_t D>
Jet2<D> operator-(double s, const Jet2<D>& a) { return (-a) + s; }

template <std::size_t D>
Jet2<D> reciprocal(const Jet2<D>& a) {
    if (a.value == 0.0) throw NumericDomainError("jet division by a zero value");
    const double inv = 1.0 / a.value;
    return compose(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <std::size_t D>
Jet2<D> operator/(const Jet2<D>& a, const Jet2<D>& b) { return a * reciprocal(b); }
template <std::size_t D>
Jet2<D> operator/(const Jet2<D>& a, double s) {
    if (s == 0.0) throw NumericDomainError("jet division by zero");
    return scale(a, 1.0 / s);
}
template <std::size_t D>
Jet2<D> operator/(double s, const Jet2<D>& a) { return scale(reciprocal(a), s); }

template <std::size_t D>
Jet2<D> sin(const Jet2<D>& a) {
    const double s = std::sin(a.value), c = std::cos(a.value);
    return compose(a, s, c, -s);
}

template <std::size_t D>
Jet2<D> cos(const Jet2<D>& a) {
    const double s = std::sin(a.value), c = std::cos(a.value);
    return compose(a, c, -s, -c);
}

template <std::size_t D>
Jet2<D> tanh(const Jet2<D>& a) {
    const double t = std::tanh(a.value);
    const double d1 = 1.0 - t * t;
    return compose(a, t, d1, -2.0 * t * d1);
}

template <std::size_t D>
Jet2<D> sigmoid(const Jet2<D>& a) {
    const double s = 1.0 / (1.0 + std::exp(-a.value));
    const double d1 = s * (1.0 - s);
    return compose(a, s, d1, d1 * (1.0 - 2.0 * s));
}

template <std::size_t D>
Jet2<D> exp(const Jet2<D>& a) {
    const double e = std::exp(a.value);
    return compose(a, e, e, e);
}

/// a^c for real c; the base must be positive.
template <std::size_t D>
Jet2<D> pow(const Jet2<D>& a, double c) {
    if (!(a.value > 0.0)) throw NumericDomainError("jet pow requires a positive base");
    const double f0 = std::pow(a.value, c);
    const double f1 = c * f0 / a.value;
    const double f2 = (c - 1.0) * f1 / a.value;
    return compose(a, f0, f1, f2);
}

template <std::size_t D>
Jet2<D> sqrt(const Jet2<D>& a) { return pow(a, 0.5); }

/// atan2(y, x) on jets; (x, y) must not be the origin.
template <std::size_t D>
Jet2<D> atan2(const Jet2<D>& y, const Jet2<D>& x) {
    const double r2 = x.value * x.value + y.value * y.value;
    if (r2 == 0.0) throw NumericDomainError("jet atan2 at the origin");
    Jet2<D> r(std::atan2(y.value, x.value));
    const Jet2<D> inv_r2 = reciprocal(x * x + y * y);
    // theta_i = (x y_i - y x_i) / r^2
    for (std::size_t i = 0; i < D; ++i) r.grad[i] = (x.value * y.grad[i] - y.value * x.grad[i]) / r2;
    for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t j = i; j < D; ++j) {
            // d/dx_j of (x y_i - y x_i) * inv_r2
            const double num_i = x.value * y.grad[i] - y.value * x.grad[i];
            const double dnum = x.grad[j] * y.grad[i] + x.value * y.h(i, j) - y.grad[j] * x.grad[i] -
                                y.value * x.h(i, j);
            r.h(i, j) = dnum * inv_r2.value + num_i * inv_r2.grad[j];
        }
    }
    return r;
}

}  // namespace vpvnet
