#pragma once

// Benchmark Stokes problems  -nu Lap u + grad p = f,  div u = 0,  u = g on the
// boundary, with closed-form exact solutions where they exist.

#include "vpvnet/fields.hpp"
#include "vpvnet/geometry.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vpvnet {

enum class DomainKind { unit_square, unit_cube, lshape, butterfly, heart };

std::string to_string(DomainKind d);
/// Bounding box of the domain.
Box domain_box(DomainKind d);
/// Open-domain membership test.
bool domain_contains(DomainKind d, const Point& x);

/// Plain values of the exact fields at a point. In 2D the scalar vorticity
/// w = v_x - u_y is w[0].
struct ExactState {
    Vec3 u{};
    Vec3 w{};
    double p = 0.0;
};

struct ExactSolution {
    std::function<ExactState(const Point&)> values;
    /// Values with exact first derivatives (jet evaluation of the same formulas).
    std::function<FieldSample(const Point&)> fields;
};

struct StokesProblem {
    std::string name;
    std::size_t dim = 2;
    double viscosity = 1.0;
    DomainKind domain = DomainKind::unit_square;
    std::function<Vec3(const Point&)> source;
    std::function<Vec3(const Point&)> dirichlet;
    std::optional<ExactSolution> exact;
    /// Point where the exact solution is singular, if any.
    std::optional<Point> singularity;
};

StokesProblem smooth2d();
StokesProblem smooth3d();
StokesProblem pressure_robust(double viscosity);
StokesProblem lshape_smooth();
StokesProblem lshape_singular();
StokesProblem lid_driven(std::size_t dim);
StokesProblem butterfly2d();
StokesProblem heart3d();

inline constexpr double lshape_delta = 0.5444837;

const std::vector<std::string>& problem_names();
/// Viscosity may only be given for pressure_robust (default 1 there).
/// Unknown names throw ConfigError listing the valid ones.
StokesProblem problem_by_name(std::string_view name, std::optional<double> viscosity = std::nullopt);

struct VerifyOptions {
    std::size_t n_points = 100;
    double tol = 1e-6;
    std::uint64_t seed = 7;
    /// Points closer than this to the singularity are not sampled.
    double exclusion_radius = 0.05;
    double step = 1e-3;
};

struct VerifyReport {
    bool passed = true;
    std::string worst_term;  // momentum | divergence | vorticity
    Point worst_point{};
    double worst_value = 0.0;
    std::size_t points = 0;
};

/// Checks -nu Lap u + grad p - f, div u and w - curl u at random interior
/// points with fourth-order central differences of the exact fields.
VerifyReport verify_manufactured(const StokesProblem& prob, const VerifyOptions& opt = {});

/// Subtracts the weighted mean; returns the mean removed.
double zero_mean(std::vector<double>& values, const std::vector<double>& weights);

}  // namespace vpvnet
