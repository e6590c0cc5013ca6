#pragma once

// Quadrature point sets: one-point (cell-center) rules on structured grids
// and random point clouds on implicitly defined domains.

#include "vpvnet/fields.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

namespace vpvnet {

struct Box {
    std::size_t dim = 2;
    Point lo{};
    Point hi{};

    static Box unit(std::size_t dim);
    double extent(std::size_t axis) const { return hi[axis] - lo[axis]; }
    double measure() const;
    bool contains(const Point& x) const;
};

struct Element {
    Point center{};
    double measure = 0.0;  // |D|
    double size = 0.0;     // diam(D)
};

struct BoundaryFacet {
    Point midpoint{};
    double measure = 0.0;  // |e|
    double size = 0.0;     // diam(e)
    Vec3 normal{};         // outward unit normal
};

struct QuadratureSet {
    std::size_t dim = 2;
    std::vector<Element> elements;
    std::vector<BoundaryFacet> facets;
    /// Nominal cell side: the h of the h^-2 residual weights.
    double mesh_h = 1.0;
    /// Largest element diameter.
    double global_h = 0.0;
    /// Point cloud with unit measures (meshless loss).
    bool meshless = false;

    double total_measure() const;
};

/// n^d equal cells; n facets per edge in 2D, n^2 per face in 3D.
QuadratureSet uniform_grid(const Box& box, std::size_t n);

/// (-1,1)^2 minus [0,1) x (-1,0], three unit squares each split n x n.
QuadratureSet lshape_grid(std::size_t n);

/// Cell widths along one axis of the given length, graded geometrically
/// towards the refined ends: neighbouring widths differ by `ratio`
/// (0 < ratio < 1), the smaller width nearer the end.
std::vector<double> graded_spacing(double length, std::size_t n, bool refine_lo, bool refine_hi,
                                   double ratio);

/// Gives cell sides from 4.4e-3 to 5.3e-2 for n = 50 on the unit interval
/// refined at both ends.
inline constexpr double default_refinement_ratio = 0.9017;

/// Tensor grid refined towards the given box corners.
QuadratureSet refined_grid(const Box& box, std::size_t n, const std::vector<Point>& corners,
                           double ratio = default_refinement_ratio);

/// Uniform n-per-axis grid over box keeping only cells whose center passes
/// `inside`; facets are not generated.
QuadratureSet masked_grid(const Box& box, std::size_t n, const std::function<bool(const Point&)>& inside);

/// Domain given by an inside predicate and a boundary point sampler.
struct ImplicitDomain {
    std::size_t dim = 2;
    Box bounds;
    std::function<bool(const Point&)> inside;
    /// Draws one boundary point with its outward normal, or nothing if the
    /// attempt was rejected.
    std::function<std::optional<BoundaryFacet>(std::mt19937_64&)> sample_boundary;
};

/// r(t) = 2 sqrt(cos^2 5t + cos^2 2t + cos^2 t); boundary (r cos t, 1.4 r sin t).
double butterfly_radius(double theta);
ImplicitDomain butterfly_domain();

/// phi = (x^2 + 9/4 y^2 + z^2 - 1)^3 - x^2 z^3 - 9/80 y^2 z^3; inside is phi < 0.
double heart_phi(const Point& x);
Vec3 heart_phi_gradient(const Point& x);
ImplicitDomain heart_domain();

/// Rejection-sampled interior points and sampled boundary points, all with
/// unit measure and size.
QuadratureSet implicit_sample(const ImplicitDomain& domain, std::size_t n_interior, std::size_t n_boundary,
                              std::uint64_t seed);

/// Columns: x,y[,z],weight,kind with kind in {interior, boundary}.
void write_csv(const QuadratureSet& qs, std::ostream& os);

}  // namespace vpvnet
