#pragma once

#include <cmath>

namespace vpvnet {

/// A scalar function and its first three derivatives at one point.
struct Taylor3 {
    double f0, f1, f2, f3;
};

inline Taylor3 sin_taylor(double z) {
    const double s = std::sin(z), c = std::cos(z);
    return {s, c, -s, -c};
}

inline Taylor3 cos_taylor(double z) {
    const double s = std::sin(z), c = std::cos(z);
    return {c, -s, -c, s};
}

inline Taylor3 tanh_taylor(double z) {
    const double t = std::tanh(z);
    const double d1 = 1.0 - t * t;
    return {t, d1, -2.0 * t * d1, d1 * (6.0 * t * t - 2.0)};
}

inline Taylor3 sigmoid_taylor(double z) {
    const double s = 1.0 / (1.0 + std::exp(-z));
    const double d1 = s * (1.0 - s);
    const double d2 = d1 * (1.0 - 2.0 * s);
    return {s, d1, d2, d2 * (1.0 - 2.0 * s) - 2.0 * d1 * d1};
}

inline Taylor3 exp_taylor(double z) {
    const double e = std::exp(z);
    return {e, e, e, e};
}

/// z^c, z > 0 (checked by callers).
inline Taylor3 pow_taylor(double z, double c) {
    const double f0 = std::pow(z, c);
    const double f1 = c * f0 / z;
    const double f2 = (c - 1.0) * f1 / z;
    return {f0, f1, f2, (c - 2.0) * f2 / z};
}

/// 1/z, z != 0 (checked by callers).
inline Taylor3 reciprocal_taylor(double z) {
    const double i = 1.0 / z;
    return {i, -i * i, 2.0 * i * i * i, -6.0 * i * i * i * i};
}

}  // namespace vpvnet
