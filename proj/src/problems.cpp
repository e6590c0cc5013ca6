#include "vpvnet/problems.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/jet.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace vpvnet {

std::string to_string(DomainKind d) {
    switch (d) {
        case DomainKind::unit_square: return "unit_square";
        case DomainKind::unit_cube: return "unit_cube";
        case DomainKind::lshape: return "lshape";
        case DomainKind::butterfly: return "butterfly";
        case DomainKind::heart: return "heart";
    }
    return "?";
}

Box domain_box(DomainKind d) {
    switch (d) {
        case DomainKind::unit_square: return Box::unit(2);
        case DomainKind::unit_cube: return Box::unit(3);
        case DomainKind::lshape: {
            Box b;
            b.dim = 2;
            b.lo = {-1.0, -1.0, 0.0};
            b.hi = {1.0, 1.0, 0.0};
            return b;
        }
        case DomainKind::butterfly: return butterfly_domain().bounds;
        case DomainKind::heart: return heart_domain().bounds;
    }
    throw StructuralError("unknown domain");
}

bool domain_contains(DomainKind d, const Point& x) {
    switch (d) {
        case DomainKind::unit_square:
            return x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0;
        case DomainKind::unit_cube:
            return x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0 && x[2] > 0.0 && x[2] < 1.0;
        case DomainKind::lshape:
            return x[0] > -1.0 && x[0] < 1.0 && x[1] > -1.0 && x[1] < 1.0 && !(x[0] >= 0.0 && x[1] <= 0.0);
        case DomainKind::butterfly: return butterfly_domain().inside(x);
        case DomainKind::heart: return heart_phi(x) < 0.0;
    }
    return false;
}

namespace {

// Closed forms, generic in the scalar so jets give exact derivatives.
// 2D outputs: u, v, w = v_x - u_y, p.

struct Smooth2d {
    template <class T>
    static void eval(const T& x, const T& y, T& u, T& v, T& w, T& p) {
        using std::cos;
        using std::sin;
        const T sx = sin(x), cx = cos(x), sy = sin(y), cy = cos(y);
        const T sx2 = sx * sx, sy2 = sy * sy;
        u = sx2 * cy * sy;
        v = -(cx * sx * sy2);
        w = 4.0 * sx2 * sy2 - sx2 - sy2;
        p = cx * cy;
    }
    static Vec3 source(const Point& q) {
        const double sx = std::sin(q[0]), cx = std::cos(q[0]), sy = std::sin(q[1]), cy = std::cos(q[1]);
        return {(8.0 * sx * sx * sy - sx - 2.0 * sy) * cy, (-8.0 * sx * sy * sy + 2.0 * sx - sy) * cx, 0.0};
    }
};

struct Robust {
    template <class T>
    static void eval(const T& x, const T& y, T& u, T& v, T& w, T& p) {
        using std::cos;
        using std::exp;
        using std::sin;
        const T ex = exp(x), sy = sin(y), cy = cos(y);
        u = -(ex * (y * cy + sy));
        v = ex * y * sy;
        w = 2.0 * ex * cy;
        p = 2.0 * ex * sy;
    }
};

struct Singular {
    static constexpr double delta = lshape_delta;
    static constexpr double omega = 1.5 * std::numbers::pi;

    template <class T>
    static void eval(const T& x, const T& y, T& u, T& v, T& w, T& p) {
        using std::atan2;
        using std::cos;
        using std::pow;
        using std::sin;
        const double a = 1.0 + delta, b = 1.0 - delta, cw = std::cos(delta * omega);
        T theta = atan2(y, x);
        if (value_of(theta) < 0.0) theta = theta + 2.0 * std::numbers::pi;
        const T r2 = x * x + y * y;
        const T rd = pow(r2, 0.5 * delta);
        const T rdm1 = pow(r2, 0.5 * (delta - 1.0));
        const T sa = sin(a * theta), ca = cos(a * theta), sb = sin(b * theta), cb = cos(b * theta);
        const T psi = sa * (cw / a) - ca - sb * (cw / b) + cb;
        const T dpsi = ca * cw + a * sa - cb * cw - b * sb;
        // psi_minus = -sin(b t) cos(d w) / b + cos(b t) and its derivative
        const T psim = cb - sb * (cw / b);
        const T dpsim = -(cb * cw) - b * sb;
        const T st = sin(theta), ct = cos(theta);
        u = rd * (a * st * psi + ct * dpsi);
        v = rd * (st * dpsi - a * ct * psi);
        w = -4.0 * delta * rdm1 * psim;
        // (1+d)^2 psi' + psi''' = 4 d psi_minus'; sign fixed so that
        // -Lap u + grad p = 0 holds
        p = (-4.0 * delta / b) * rdm1 * dpsim;
    }

    static double value_of(double t) { return t; }
    static double value_of(const Jet2<2>& t) { return t.value; }
};

// 3D: u[3], w[3] = curl u, p.
struct Smooth3d {
    template <class T>
    static void eval(const T& x, const T& y, const T& z, std::array<T, 3>& u, std::array<T, 3>& w, T& p) {
        const T x2 = x * x, x3 = x2 * x, y2 = y * y, y3 = y2 * y;
        u[0] = x + x2 + x * y + x3 * y;
        u[1] = y + x * y + y2 + x2 * y2;
        u[2] = -2.0 * z - 3.0 * x * z - 3.0 * y * z - 5.0 * x2 * y * z;
        w[0] = -5.0 * x2 * z - 3.0 * z;
        w[1] = 10.0 * x * y * z + 3.0 * z;
        w[2] = -x3 + 2.0 * x * y2 - x + y;
        p = x * y * z + x3 * y3 * z - 5.0 / 32.0;
    }
    static Vec3 source(const Point& q) {
        const double x = q[0], y = q[1], z = q[2];
        const double x2 = x * x, y2 = y * y;
        return {3.0 * x2 * y2 * y * z - 6.0 * x * y + y * z - 2.0,
                3.0 * x2 * x * y2 * z - 2.0 * x2 + x * z - 2.0 * y2 - 2.0,
                x2 * x * y2 * y + x * y + 10.0 * y * z};
    }
};

template <class F>
ExactSolution exact2d() {
    ExactSolution ex;
    ex.values = [](const Point& q) {
        double u, v, w, p;
        F::eval(q[0], q[1], u, v, w, p);
        ExactState s;
        s.u = {u, v, 0.0};
        s.w = {w, 0.0, 0.0};
        s.p = p;
        return s;
    };
    ex.fields = [](const Point& q) {
        const auto in = seed_inputs<2>({q[0], q[1]});
        Jet2<2> u, v, w, p;
        F::eval(in[0], in[1], u, v, w, p);
        FieldSample fs;
        fs.dim = 2;
        fs.vel = {u.value, v.value, 0.0};
        fs.grad_vel[0] = {u.grad[0], u.grad[1], 0.0};
        fs.grad_vel[1] = {v.grad[0], v.grad[1], 0.0};
        fs.vort[0] = w.value;
        fs.grad_vort[0] = {w.grad[0], w.grad[1], 0.0};
        fs.p = p.value;
        fs.grad_p = {p.grad[0], p.grad[1], 0.0};
        return fs;
    };
    return ex;
}

template <class F>
ExactSolution exact3d() {
    ExactSolution ex;
    ex.values = [](const Point& q) {
        std::array<double, 3> u, w;
        ExactState s;
        F::eval(q[0], q[1], q[2], u, w, s.p);
        s.u = u;
        s.w = w;
        return s;
    };
    ex.fields = [](const Point& q) {
        const auto in = seed_inputs<3>({q[0], q[1], q[2]});
        std::array<Jet2<3>, 3> u, w;
        Jet2<3> p;
        F::eval(in[0], in[1], in[2], u, w, p);
        FieldSample fs;
        fs.dim = 3;
        for (std::size_t i = 0; i < 3; ++i) {
            fs.vel[i] = u[i].value;
            fs.vort[i] = w[i].value;
            for (std::size_t j = 0; j < 3; ++j) {
                fs.grad_vel[i][j] = u[i].grad[j];
                fs.grad_vort[i][j] = w[i].grad[j];
            }
        }
        fs.p = p.value;
        fs.grad_p = p.grad;
        return fs;
    };
    return ex;
}

/// Dirichlet data equal to the trace of the exact velocity.
std::function<Vec3(const Point&)> trace_of(const ExactSolution& ex) {
    auto values = ex.values;
    return [values](const Point& q) { return values(q).u; };
}

Vec3 zero_vec(const Point&) { return {0.0, 0.0, 0.0}; }

}  // namespace

StokesProblem smooth2d() {
    StokesProblem p;
    p.name = "smooth2d";
    p.dim = 2;
    p.domain = DomainKind::unit_square;
    p.exact = exact2d<Smooth2d>();
    p.source = &Smooth2d::source;
    p.dirichlet = trace_of(*p.exact);
    return p;
}

StokesProblem smooth3d() {
    StokesProblem p;
    p.name = "smooth3d";
    p.dim = 3;
    p.domain = DomainKind::unit_cube;
    p.exact = exact3d<Smooth3d>();
    p.source = &Smooth3d::source;
    p.dirichlet = trace_of(*p.exact);
    return p;
}

StokesProblem pressure_robust(double viscosity) {
    if (!(viscosity > 0.0)) throw ConfigError("viscosity must be positive");
    StokesProblem p;
    p.name = "pressure_robust";
    p.dim = 2;
    p.viscosity = viscosity;
    p.domain = DomainKind::unit_square;
    p.exact = exact2d<Robust>();
    const double c = 2.0 * (1.0 - viscosity);
    p.source = [c](const Point& q) {
        const double ex = std::exp(q[0]);
        return Vec3{c * ex * std::sin(q[1]), c * ex * std::cos(q[1]), 0.0};
    };
    p.dirichlet = trace_of(*p.exact);
    return p;
}

StokesProblem lshape_smooth() {
    StokesProblem p = pressure_robust(1.0);
    p.name = "lshape_smooth";
    p.domain = DomainKind::lshape;
    p.source = zero_vec;
    return p;
}

StokesProblem lshape_singular() {
    StokesProblem p;
    p.name = "lshape_singular";
    p.dim = 2;
    p.domain = DomainKind::lshape;
    p.exact = exact2d<Singular>();
    p.source = zero_vec;
    p.dirichlet = trace_of(*p.exact);
    p.singularity = Point{0.0, 0.0, 0.0};
    return p;
}

StokesProblem lid_driven(std::size_t dim) {
    if (dim != 2 && dim != 3) throw StructuralError("lid-driven cavity is 2D or 3D");
    StokesProblem p;
    p.name = dim == 2 ? "lid2d" : "lid3d";
    p.dim = dim;
    p.domain = dim == 2 ? DomainKind::unit_square : DomainKind::unit_cube;
    p.source = zero_vec;
    // the lid is y = 1 in 2D and z = 1 in 3D, corners included
    const std::size_t lid_axis = dim - 1;
    p.dirichlet = [lid_axis](const Point& q) {
        return q[lid_axis] == 1.0 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 0.0, 0.0};
    };
    return p;
}

StokesProblem butterfly2d() {
    StokesProblem p = smooth2d();
    p.name = "butterfly2d";
    p.domain = DomainKind::butterfly;
    return p;
}

StokesProblem heart3d() {
    StokesProblem p = smooth3d();
    p.name = "heart3d";
    p.domain = DomainKind::heart;
    return p;
}

const std::vector<std::string>& problem_names() {
    static const std::vector<std::string> names{"smooth2d",       "smooth3d", "pressure_robust",
                                                "lshape_smooth",  "lshape_singular", "lid2d",
                                                "lid3d",          "butterfly2d", "heart3d"};
    return names;
}

StokesProblem problem_by_name(std::string_view name, std::optional<double> viscosity) {
    if (name == "pressure_robust") return pressure_robust(viscosity.value_or(1.0));
    if (viscosity && *viscosity != 1.0)
        throw ConfigError("problem '" + std::string(name) + "' has fixed viscosity 1");
    if (name == "smooth2d") return smooth2d();
    if (name == "smooth3d") return smooth3d();
    if (name == "lshape_smooth") return lshape_smooth();
    if (name == "lshape_singular") return lshape_singular();
    if (name == "lid2d") return lid_driven(2);
    if (name == "lid3d") return lid_driven(3);
    if (name == "butterfly2d") return butterfly2d();
    if (name == "heart3d") return heart3d();
    std::string valid;
    for (const auto& n : problem_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown problem '" + std::string(name) + "'; valid problems: " + valid);
}

namespace {

// fourth-order central stencils, componentwise on Vec3-valued f
template <class F>
Vec3 stencil(const F& f, const Point& x, std::size_t axis, double h, const std::array<double, 5>& c,
             double denom) {
    Vec3 out{};
    for (int k = -2; k <= 2; ++k) {
        if (c[static_cast<std::size_t>(k + 2)] == 0.0) continue;
        Point y = x;
        y[axis] += k * h;
        const Vec3 v = f(y);
        for (std::size_t i = 0; i < 3; ++i) out[i] += c[static_cast<std::size_t>(k + 2)] * v[i];
    }
    for (double& o : out) o /= denom;
    return out;
}

template <class F>
Vec3 d1(const F& f, const Point& x, std::size_t axis, double h) {
    return stencil(f, x, axis, h, {1.0, -8.0, 0.0, 8.0, -1.0}, 12.0 * h);
}

template <class F>
Vec3 d2(const F& f, const Point& x, std::size_t axis, double h) {
    return stencil(f, x, axis, h, {-1.0, 16.0, -30.0, 16.0, -1.0}, 12.0 * h * h);
}

double dist(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

VerifyReport verify_manufactured(const StokesProblem& prob, const VerifyOptions& opt) {
    if (!prob.exact) throw StructuralError("problem '" + prob.name + "' has no exact solution");
    const ExactSolution& ex = *prob.exact;
    const std::size_t d = prob.dim;
    const Box box = domain_box(prob.domain);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    VerifyReport rep;
    auto record = [&](const char* term, const Point& x, double v) {
        v = std::abs(v);
        if (v > rep.worst_value || rep.worst_term.empty()) {
            rep.worst_value = v;
            rep.worst_term = term;
            rep.worst_point = x;
        }
    };

    while (rep.points < opt.n_points) {
        Point x{};
        for (std::size_t a = 0; a < d; ++a) x[a] = box.lo[a] + unif(rng) * box.extent(a);
        if (!domain_contains(prob.domain, x)) continue;
        double h = opt.step;
        if (prob.singularity) {
            const double r = dist(x, *prob.singularity);
            if (r < opt.exclusion_radius) continue;
            // stencil shrinks near the singular point
            h = std::min(h, r / 250.0);
        }
        // keep the stencil inside the domain where the formulas apply
        bool fits = true;
        for (std::size_t a = 0; a < d && fits; ++a) {
            for (double s : {-2.0 * h, 2.0 * h}) {
                Point y = x;
                y[a] += s;
                fits = fits && (domain_contains(prob.domain, y) || !prob.singularity);
            }
        }
        if (!fits) continue;
        ++rep.points;

        auto vel = [&](const Point& y) { return ex.values(y).u; };
        auto pres = [&](const Point& y) { return Vec3{ex.values(y).p, 0.0, 0.0}; };
        const Vec3 f = prob.source(x);
        const ExactState s = ex.values(x);

        std::array<Vec3, 3> grad_u{};  // grad_u[j][i] = d u_i / d x_j
        Vec3 lap{};
        for (std::size_t j = 0; j < d; ++j) {
            grad_u[j] = d1(vel, x, j, h);
            const Vec3 uu = d2(vel, x, j, h);
            for (std::size_t i = 0; i < d; ++i) lap[i] += uu[i];
        }
        for (std::size_t i = 0; i < d; ++i)
            record("momentum", x, -prob.viscosity * lap[i] + d1(pres, x, i, h)[0] - f[i]);
        double div = 0.0;
        for (std::size_t i = 0; i < d; ++i) div += grad_u[i][i];
        record("divergence", x, div);
        if (d == 2) {
            record("vorticity", x, s.w[0] - (grad_u[0][1] - grad_u[1][0]));
        } else {
            const Vec3 curl{grad_u[1][2] - grad_u[2][1], grad_u[2][0] - grad_u[0][2], grad_u[0][1] - grad_u[1][0]};
            for (std::size_t i = 0; i < 3; ++i) record("vorticity", x, s.w[i] - curl[i]);
        }
    }
    rep.passed = rep.worst_value <= opt.tol;
    return rep;
}

double zero_mean(std::vector<double>& values, const std::vector<double>& weights) {
    if (values.size() != weights.size()) throw StructuralError("values and weights differ in length");
    double sw = 0.0, s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        s += values[i] * weights[i];
        sw += weights[i];
    }
    if (!(sw > 0.0)) throw StructuralError("weights must have a positive sum");
    const double mean = s / sw;
    for (double& v : values) v -= mean;
    return mean;
}

}  // namespace vpvnet
