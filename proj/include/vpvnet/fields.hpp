#pragma once

#include <array>
#include <cstddef>

namespace vpvnet {

/// Spatial point; coordinates beyond the problem dimension are zero.
using Point = std::array<double, 3>;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Velocity, vorticity and pressure with their first spatial derivatives at
/// one point. In 2D the scalar vorticity w = v_x - u_y lives in vort[0].
struct FieldSample {
    std::size_t dim = 2;
    Vec3 vel{};
    Mat3 grad_vel{};   // grad_vel[i][j] = d vel_i / d x_j
    Vec3 vort{};
    Mat3 grad_vort{};  // grad_vort[i][j] = d vort_i / d x_j
    double p = 0.0;
    Vec3 grad_p{};

    double divergence() const {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d += grad_vel[i][i];
        return d;
    }
};

}  // namespace vpvnet
