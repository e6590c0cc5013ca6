#include "fd.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/problems.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace vpvnet;

TEST_CASE("smooth2d closed forms") {
    const StokesProblem p = smooth2d();
    CHECK(p.dim == 2);
    CHECK(p.viscosity == 1.0);
    for (double y : {0.0, 0.3, 0.9}) {
        const ExactState s = p.exact->values({0.0, y, 0.0});
        CHECK(s.u[0] == 0.0);
        CHECK(s.u[1] == 0.0);
    }
    // -Lap u + grad p evaluated symbolically at (0.3, 0.7)
    const Vec3 f = p.source({0.3, 0.7, 0.0});
    CHECK(f[0] == doctest::Approx(-0.86723010898636732).epsilon(1e-14));
    CHECK(f[1] == doctest::Approx(-0.98814580102714966).epsilon(1e-14));
}

TEST_CASE("exact velocities are divergence free by finite differences") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (const StokesProblem& p : {smooth2d(), pressure_robust(1.0), smooth3d()}) {
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const Point x{u(rng), u(rng), p.dim == 3 ? u(rng) : 0.0};
            double div = 0.0;
            for (std::size_t a = 0; a < p.dim; ++a) {
                auto ua = [&](const Point& y) { return p.exact->values(y).u[a]; };
                div += fdtest::d1(ua, x, a);
            }
            worst = std::max(worst, std::abs(div));
        }
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("smooth3d pressure has zero mean and g is the trace") {
    const StokesProblem p = smooth3d();
    // midpoint rule on a fine grid, exact for the polynomial up to O(h^2)
    const std::size_t n = 60;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const Point x{(i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n};
                s += p.exact->values(x).p;
            }
    CHECK(std::abs(s / (n * n * n)) < 1e-3);
    // exact: int xyz = 1/8, int x^3 y^3 z = 1/32
    CHECK(1.0 / 8.0 + 1.0 / 32.0 - 5.0 / 32.0 == doctest::Approx(0.0));
    for (double y : {0.1, 0.5})
        for (double z : {0.2, 0.8}) {
            const Point x{0.0, y, z};
            CHECK(p.dirichlet(x) == p.exact->values(x).u);
        }
}

TEST_CASE("pressure-robust source") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const StokesProblem one = pressure_robust(1.0);
    const StokesProblem tiny = pressure_robust(1e-6);
    for (int k = 0; k < 100; ++k) {
        const Point x{u(rng), u(rng), 0.0};
        const Vec3 f = one.source(x);
        CHECK(std::hypot(f[0], f[1]) <= 1e-12);
        const Vec3 g = tiny.source(x);
        const double ex = std::exp(x[0]);
        CHECK(g[0] == doctest::Approx(2 * ex * std::sin(x[1])).epsilon(2e-6));
        CHECK(g[1] == doctest::Approx(2 * ex * std::cos(x[1])).epsilon(2e-6));
    }
    CHECK_THROWS_AS(pressure_robust(0.0), ConfigError);
}

TEST_CASE("singular L-shape solution") {
    const StokesProblem p = lshape_singular();
    // |u| ~ r^delta towards the corner
    const ExactState near = p.exact->values({1e-8, 1e-8, 0.0});
    const ExactState far = p.exact->values({1e-6, 1e-6, 0.0});
    CHECK(std::hypot(near.u[0], near.u[1]) < 2e-4);
    CHECK(std::hypot(near.u[0], near.u[1]) / std::hypot(far.u[0], far.u[1]) ==
          doctest::Approx(std::pow(1e-2, lshape_delta)).epsilon(1e-12));
    CHECK(std::hypot(p.exact->values({1e-10, 1e-10, 0.0}).u[0], p.exact->values({1e-10, 1e-10, 0.0}).u[1]) < 1e-4);
    CHECK(p.source({0.5, 0.5, 0.0}) == Vec3{});
    // edge midpoints away from the corner
    for (const Point& x : {Point{0.5, 0.0, 0.0}, Point{0.0, -0.5, 0.0}}) {
        const Vec3 g = p.dirichlet(x);
        CHECK(std::abs(g[0]) < 1e-5);
        CHECK(std::abs(g[1]) < 1e-5);
    }
    // residuals by finite differences, r > 0.05
    VerifyOptions opt;
    opt.n_points = 200;
    opt.tol = 1e-5;
    const VerifyReport rep = verify_manufactured(p, opt);
    CHECK_MESSAGE(rep.passed, rep.worst_term << " " << rep.worst_value);
}

TEST_CASE("jet exact fields agree with the plain values") {
    for (const StokesProblem& p : {smooth2d(), smooth3d(), pressure_robust(0.01), lshape_singular()}) {
        const Point x = p.dim == 3 ? Point{0.3, 0.6, 0.2} : Point{-0.4, 0.3, 0.0};
        const FieldSample fs = p.exact->fields(x);
        const ExactState s = p.exact->values(x);
        for (std::size_t a = 0; a < 3; ++a) {
            CHECK(fs.vel[a] == doctest::Approx(s.u[a]).epsilon(1e-14));
            CHECK(fs.vort[a] == doctest::Approx(s.w[a]).epsilon(1e-14));
        }
        CHECK(fs.p == doctest::Approx(s.p).epsilon(1e-14));
        for (std::size_t a = 0; a < p.dim; ++a) {
            auto pa = [&](const Point& y) { return p.exact->values(y).p; };
            CHECK(fs.grad_p[a] == doctest::Approx(fdtest::d1(pa, x, a)).epsilon(1e-8));
        }
    }
}

TEST_CASE("verify_manufactured") {
    for (const StokesProblem& p : {smooth2d(), smooth3d(), pressure_robust(1.0), pressure_robust(1e-4),
                                   lshape_smooth(), butterfly2d(), heart3d()}) {
        const VerifyReport rep = verify_manufactured(p, {});
        CHECK_MESSAGE(rep.passed, p.name << ": " << rep.worst_term << " " << rep.worst_value);
        CHECK(rep.points == 100);
    }

    StokesProblem bad = smooth2d();
    auto f = bad.source;
    bad.source = [f](const Point& x) {
        Vec3 v = f(x);
        v[0] += 1e-3;
        return v;
    };
    const VerifyReport rep = verify_manufactured(bad, {});
    CHECK_FALSE(rep.passed);
    CHECK(rep.worst_term == "momentum");

    CHECK_THROWS_AS(verify_manufactured(lid_driven(2), {}), StructuralError);
}

TEST_CASE("lid-driven boundary data") {
    const StokesProblem p = lid_driven(2);
    CHECK(p.dirichlet({0.5, 1.0, 0.0}) == Vec3{1, 0, 0});
    CHECK(p.dirichlet({0.5, 0.0, 0.0}) == Vec3{0, 0, 0});
    CHECK(p.dirichlet({0.0, 1.0, 0.0}) == Vec3{1, 0, 0});
    CHECK(p.dirichlet({0.0, 0.5, 0.0}) == Vec3{0, 0, 0});
    CHECK_FALSE(p.exact.has_value());
    const StokesProblem q = lid_driven(3);
    CHECK(q.dirichlet({0.5, 0.5, 1.0}) == Vec3{1, 0, 0});
    CHECK(q.dirichlet({0.5, 1.0, 0.5}) == Vec3{0, 0, 0});
}

TEST_CASE("problem lookup by name") {
    for (const auto& n : problem_names()) CHECK(problem_by_name(n).name == n);
    CHECK(problem_by_name("pressure_robust", 1e-2).viscosity == 1e-2);
    try {
        problem_by_name("cavity");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("lshape_singular") != std::string::npos);
    }
    CHECK_THROWS_AS(problem_by_name("smooth2d", 0.5), ConfigError);
}

TEST_CASE("zero-mean normalisation is idempotent") {
    std::vector<double> v{1.0, 2.0, 6.0}, w{1.0, 1.0, 2.0};
    const double m = zero_mean(v, w);
    CHECK(m == doctest::Approx(15.0 / 4.0));
    const std::vector<double> once = v;
    CHECK(zero_mean(v, w) == doctest::Approx(0.0).epsilon(1e-15));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(once[i]).epsilon(1e-15));
}
