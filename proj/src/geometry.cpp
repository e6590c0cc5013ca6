#include "vpvnet/geometry.hpp"

#include "vpvnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace vpvnet {

Box Box::unit(std::size_t dim) {
    Box b;
    b.dim = dim;
    for (std::size_t a = 0; a < dim; ++a) b.hi[a] = 1.0;
    return b;
}

double Box::measure() const {
    double m = 1.0;
    for (std::size_t a = 0; a < dim; ++a) m *= extent(a);
    return m;
}

bool Box::contains(const Point& x) const {
    for (std::size_t a = 0; a < dim; ++a)
        if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
}

double QuadratureSet::total_measure() const {
    double s = 0.0;
    for (const auto& e : elements) s += e.measure;
    return s;
}

namespace {

void check_box(const Box& box) {
    if (box.dim != 2 && box.dim != 3) throw StructuralError("box dimension must be 2 or 3");
    for (std::size_t a = 0; a < box.dim; ++a)
        if (!(box.extent(a) > 0.0)) throw StructuralError("degenerate box");
}

/// Tensor-product grid from per-axis cell widths. Cells failing `keep` are
/// dropped; facets are emitted on every face of a kept cell whose neighbour
/// is dropped or outside the grid.
QuadratureSet tensor_grid(const Box& box, const std::vector<std::vector<double>>& widths,
                          const std::function<bool(const Point&)>& keep, bool with_facets) {
    const std::size_t d = box.dim;
    std::vector<std::vector<double>> edges(d);
    std::vector<std::vector<double>> side(d);
    for (std::size_t a = 0; a < d; ++a) {
        const std::size_t n = widths[a].size();
        const bool uniform = std::all_of(widths[a].begin(), widths[a].end(),
                                         [&](double w) { return w == widths[a][0]; });
        double total = 0.0;
        for (double w : widths[a]) total += w;
        double cum = 0.0;
        edges[a].push_back(box.lo[a]);
        for (std::size_t k = 0; k < n; ++k) {
            cum += widths[a][k];
            // k / n keeps interior edges such as x = 0 of the L-shape exact
            const double frac = uniform ? static_cast<double>(k + 1) / static_cast<double>(n) : cum / total;
            edges[a].push_back(box.lo[a] + box.extent(a) * frac);
        }
        edges[a].back() = box.hi[a];
        for (std::size_t k = 0; k < widths[a].size(); ++k) side[a].push_back(edges[a][k + 1] - edges[a][k]);
    }
    const std::size_t nx = widths[0].size();
    const std::size_t ny = widths[1].size();
    const std::size_t nz = d == 3 ? widths[2].size() : 1;

    auto center = [&](std::size_t i, std::size_t j, std::size_t k) {
        Point c{0.5 * (edges[0][i] + edges[0][i + 1]), 0.5 * (edges[1][j] + edges[1][j + 1]), 0.0};
        if (d == 3) c[2] = 0.5 * (edges[2][k] + edges[2][k + 1]);
        return c;
    };
    auto kept = [&](long i, long j, long k) {
        if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(nx) || j >= static_cast<long>(ny) ||
            k >= static_cast<long>(nz))
            return false;
        return !keep || keep(center(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                    static_cast<std::size_t>(k)));
    };

    QuadratureSet qs;
    qs.dim = d;
    for (std::size_t k = 0; k < nz; ++k) {
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                if (!kept(static_cast<long>(i), static_cast<long>(j), static_cast<long>(k))) continue;
                const std::array<std::size_t, 3> idx{i, j, k};
                std::array<double, 3> len{};
                double measure = 1.0, diam2 = 0.0;
                for (std::size_t a = 0; a < d; ++a) {
                    len[a] = side[a][idx[a]];
                    measure *= len[a];
                    diam2 += len[a] * len[a];
                }
                const Point c = center(i, j, k);
                qs.elements.push_back({c, measure, std::sqrt(diam2)});
                qs.global_h = std::max(qs.global_h, std::sqrt(diam2));
                if (!with_facets) continue;

                for (std::size_t a = 0; a < d; ++a) {
                    for (int dir : {-1, 1}) {
                        std::array<long, 3> nb{static_cast<long>(i), static_cast<long>(j), static_cast<long>(k)};
                        nb[a] += dir;
                        if (kept(nb[0], nb[1], nb[2])) continue;
                        BoundaryFacet f;
                        f.midpoint = c;
                        f.midpoint[a] = dir < 0 ? edges[a][idx[a]] : edges[a][idx[a] + 1];
                        f.measure = 1.0;
                        double fd2 = 0.0;
                        for (std::size_t b = 0; b < d; ++b) {
                            if (b == a) continue;
                            f.measure *= len[b];
                            fd2 += len[b] * len[b];
                        }
                        f.size = std::sqrt(fd2);
                        f.normal[a] = static_cast<double>(dir);
                        qs.facets.push_back(f);
                    }
                }
            }
        }
    }
    return qs;
}

}  // namespace

QuadratureSet uniform_grid(const Box& box, std::size_t n) {
    check_box(box);
    if (n == 0) throw StructuralError("grid resolution must be at least 1");
    std::vector<std::vector<double>> widths(box.dim);
    double h = 0.0;
    for (std::size_t a = 0; a < box.dim; ++a) {
        widths[a].assign(n, box.extent(a) / static_cast<double>(n));
        h = std::max(h, box.extent(a) / static_cast<double>(n));
    }
    QuadratureSet qs = tensor_grid(box, widths, {}, true);
    qs.mesh_h = h;
    return qs;
}

QuadratureSet lshape_grid(std::size_t n) {
    if (n == 0) throw StructuralError("grid resolution must be at least 1");
    Box box;
    box.dim = 2;
    box.lo = {-1.0, -1.0, 0.0};
    box.hi = {1.0, 1.0, 0.0};
    const std::vector<std::vector<double>> widths(2, std::vector<double>(2 * n, 1.0 / static_cast<double>(n)));
    QuadratureSet qs = tensor_grid(box, widths, [](const Point& c) { return !(c[0] > 0.0 && c[1] < 0.0); }, true);
    qs.mesh_h = 1.0 / static_cast<double>(n);
    return qs;
}

std::vector<double> graded_spacing(double length, std::size_t n, bool refine_lo, bool refine_hi, double ratio) {
    if (n == 0) throw StructuralError("grid resolution must be at least 1");
    if (!(ratio > 0.0 && ratio < 1.0)) throw StructuralError("refinement ratio must lie in (0, 1)");
    std::vector<double> w(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t dist = 0;
        if (refine_lo && refine_hi) dist = std::min(k, n - 1 - k);
        else if (refine_lo) dist = k;
        else if (refine_hi) dist = n - 1 - k;
        const bool graded = refine_lo || refine_hi;
        w[k] = graded ? std::pow(ratio, -static_cast<double>(dist)) : 1.0;
        total += w[k];
    }
    for (double& x : w) x *= length / total;
    return w;
}

QuadratureSet refined_grid(const Box& box, std::size_t n, const std::vector<Point>& corners, double ratio) {
    check_box(box);
    std::vector<std::vector<double>> widths(box.dim);
    double h = 0.0;
    for (std::size_t a = 0; a < box.dim; ++a) {
        bool lo = false, hi = false;
        for (const Point& c : corners) {
            lo = lo || c[a] == box.lo[a];
            hi = hi || c[a] == box.hi[a];
        }
        widths[a] = graded_spacing(box.extent(a), n, lo, hi, ratio);
        h = std::max(h, box.extent(a) / static_cast<double>(n));
    }
    QuadratureSet qs = tensor_grid(box, widths, {}, true);
    qs.mesh_h = h;
    return qs;
}

QuadratureSet masked_grid(const Box& box, std::size_t n, const std::function<bool(const Point&)>& inside) {
    check_box(box);
    if (n == 0) throw StructuralError("grid resolution must be at least 1");
    std::vector<std::vector<double>> widths(box.dim);
    double h = 0.0;
    for (std::size_t a = 0; a < box.dim; ++a) {
        widths[a].assign(n, box.extent(a) / static_cast<double>(n));
        h = std::max(h, box.extent(a) / static_cast<double>(n));
    }
    QuadratureSet qs = tensor_grid(box, widths, inside, false);
    qs.mesh_h = h;
    return qs;
}

double butterfly_radius(double theta) {
    const double c5 = std::cos(5.0 * theta), c2 = std::cos(2.0 * theta), c1 = std::cos(theta);
    return 2.0 * std::sqrt(c5 * c5 + c2 * c2 + c1 * c1);
}

ImplicitDomain butterfly_domain() {
    constexpr double stretch = 1.4;
    const double rmax = 2.0 * std::sqrt(3.0);
    ImplicitDomain dom;
    dom.dim = 2;
    dom.bounds.dim = 2;
    dom.bounds.lo = {-rmax, -stretch * rmax, 0.0};
    dom.bounds.hi = {rmax, stretch * rmax, 0.0};
    dom.inside = [](const Point& x) {
        const double px = x[0], py = x[1] / stretch;
        const double rho = std::hypot(px, py);
        return rho < butterfly_radius(std::atan2(py, px));
    };
    dom.sample_boundary = [](std::mt19937_64& rng) -> std::optional<BoundaryFacet> {
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        const double t = angle(rng);
        const double c5 = std::cos(5.0 * t), c2 = std::cos(2.0 * t), c1 = std::cos(t);
        const double s = c5 * c5 + c2 * c2 + c1 * c1;
        const double r = 2.0 * std::sqrt(s);
        const double ds = -5.0 * std::sin(10.0 * t) - 2.0 * std::sin(4.0 * t) - std::sin(2.0 * t);
        const double dr = ds / std::sqrt(s);
        const double tx = dr * std::cos(t) - r * std::sin(t);
        const double ty = stretch * (dr * std::sin(t) + r * std::cos(t));
        const double tn = std::hypot(tx, ty);
        BoundaryFacet f;
        f.midpoint = {r * std::cos(t), stretch * r * std::sin(t), 0.0};
        f.measure = 1.0;
        f.size = 1.0;
        // counter-clockwise curve: outward normal is the tangent turned clockwise
        f.normal = {ty / tn, -tx / tn, 0.0};
        return f;
    };
    return dom;
}

double heart_phi(const Point& p) {
    const double x = p[0], y = p[1], z = p[2];
    const double q = x * x + 2.25 * y * y + z * z - 1.0;
    const double z3 = z * z * z;
    return q * q * q - x * x * z3 - (9.0 / 80.0) * y * y * z3;
}

Vec3 heart_phi_gradient(const Point& p) {
    const double x = p[0], y = p[1], z = p[2];
    const double q = x * x + 2.25 * y * y + z * z - 1.0;
    const double q2 = 3.0 * q * q;
    const double z2 = z * z, z3 = z2 * z;
    return {q2 * 2.0 * x - 2.0 * x * z3, q2 * 4.5 * y - (9.0 / 40.0) * y * z3,
            q2 * 2.0 * z - 3.0 * x * x * z2 - (27.0 / 80.0) * y * y * z2};
}

ImplicitDomain heart_domain() {
    ImplicitDomain dom;
    dom.dim = 3;
    dom.bounds.dim = 3;
    dom.bounds.lo = {-1.5, -1.0, -1.5};
    dom.bounds.hi = {1.5, 1.0, 1.5};
    dom.inside = [](const Point& x) { return heart_phi(x) < 0.0; };
    const Box bounds = dom.bounds;
    dom.sample_boundary = [bounds](std::mt19937_64& rng) -> std::optional<BoundaryFacet> {
        constexpr double band = 0.05;
        constexpr int max_newton = 50;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Point x{};
        // start near the zero set
        for (;;) {
            for (std::size_t a = 0; a < 3; ++a) x[a] = bounds.lo[a] + u(rng) * bounds.extent(a);
            if (std::abs(heart_phi(x)) < band) break;
        }
        for (int it = 0; it < max_newton; ++it) {
            const double phi = heart_phi(x);
            if (std::abs(phi) < 1e-10) {
                const Vec3 g = heart_phi_gradient(x);
                const double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                // the surface has two cusps where the gradient vanishes
                if (!(gn > 1e-4) || !bounds.contains(x)) return std::nullopt;
                BoundaryFacet f;
                f.midpoint = x;
                f.measure = 1.0;
                f.size = 1.0;
                f.normal = {g[0] / gn, g[1] / gn, g[2] / gn};
                return f;
            }
            const Vec3 g = heart_phi_gradient(x);
            const double g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            if (!(g2 > 1e-300)) return std::nullopt;
            for (std::size_t a = 0; a < 3; ++a) x[a] -= phi * g[a] / g2;
        }
        return std::nullopt;
    };
    return dom;
}

QuadratureSet implicit_sample(const ImplicitDomain& domain, std::size_t n_interior, std::size_t n_boundary,
                              std::uint64_t seed) {
    if (!domain.inside || !domain.sample_boundary) throw StructuralError("implicit domain is incomplete");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    QuadratureSet qs;
    qs.dim = domain.dim;
    qs.meshless = true;
    qs.mesh_h = 1.0;
    qs.global_h = 1.0;
    while (qs.elements.size() < n_interior) {
        Point x{};
        for (std::size_t a = 0; a < domain.dim; ++a) x[a] = domain.bounds.lo[a] + u(rng) * domain.bounds.extent(a);
        if (domain.inside(x)) qs.elements.push_back({x, 1.0, 1.0});
    }
    while (qs.facets.size() < n_boundary) {
        if (auto f = domain.sample_boundary(rng)) qs.facets.push_back(*f);
    }
    return qs;
}

void write_csv(const QuadratureSet& qs, std::ostream& os) {
    const char* axes[] = {"x", "y", "z"};
    for (std::size_t a = 0; a < qs.dim; ++a) os << axes[a] << ',';
    os << "weight,kind\n";
    os.precision(17);
    for (const auto& e : qs.elements) {
        for (std::size_t a = 0; a < qs.dim; ++a) os << e.center[a] << ',';
        os << e.measure << ",interior\n";
    }
    for (const auto& f : qs.facets) {
        for (std::size_t a = 0; a < qs.dim; ++a) os << f.midpoint[a] << ',';
        os << f.measure << ",boundary\n";
    }
}

}  // namespace vpvnet
