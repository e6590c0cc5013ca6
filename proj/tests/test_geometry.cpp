#include "vpvnet/errors.hpp"
#include "vpvnet/geometry.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace vpvnet;

namespace {

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double facet_measure(const QuadratureSet& qs) {
    double s = 0.0;
    for (const auto& f : qs.facets) s += f.measure;
    return s;
}

}  // namespace

TEST_CASE("uniform 2x2 grid on the unit square") {
    const QuadratureSet qs = uniform_grid(Box::unit(2), 2);
    REQUIRE(qs.elements.size() == 4);
    CHECK(qs.elements[0].center == Point{0.25, 0.25, 0.0});
    for (const auto& e : qs.elements) {
        CHECK(e.measure == 0.25);
        CHECK(e.size == doctest::Approx(std::sqrt(2.0) * 0.5));
    }
    REQUIRE(qs.facets.size() == 8);
    for (const auto& f : qs.facets) {
        CHECK(f.measure == 0.5);
        CHECK(norm(f.normal) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(qs.mesh_h == 0.5);
}

TEST_CASE("uniform grid tiles the box") {
    for (std::size_t n : {1u, 3u, 7u, 50u}) {
        const QuadratureSet qs = uniform_grid(Box::unit(2), n);
        CHECK(qs.elements.size() == n * n);
        CHECK(qs.facets.size() == 4 * n);
        CHECK(qs.total_measure() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(facet_measure(qs) == doctest::Approx(4.0).epsilon(1e-12));
    }
    const QuadratureSet q3 = uniform_grid(Box::unit(3), 4);
    CHECK(q3.elements.size() == 64);
    CHECK(q3.facets.size() == 6 * 16);
    CHECK(q3.total_measure() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(facet_measure(q3) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(uniform_grid(Box::unit(2), 50).mesh_h == 1.0 / 50.0);
}

TEST_CASE("one-point rule integrates affine functions exactly") {
    Box box;
    box.dim = 2;
    box.lo = {-0.5, 0.2, 0.0};
    box.hi = {1.5, 1.7, 0.0};
    const QuadratureSet qs = uniform_grid(box, 9);
    const double a = 0.3, b = -1.2, c = 2.5;
    double s = 0.0;
    for (const auto& e : qs.elements) s += (a + b * e.center[0] + c * e.center[1]) * e.measure;
    // exact integral over the box
    const double area = 2.0 * 1.5;
    const double exact = area * (a + b * 0.5 + c * 0.95);
    CHECK(std::abs(s - exact) < 1e-12);
}

TEST_CASE("facet midpoints lie on the boundary with outward normals") {
    const QuadratureSet qs = uniform_grid(Box::unit(3), 3);
    for (const auto& f : qs.facets) {
        int on = 0;
        for (std::size_t a = 0; a < 3; ++a) {
            if (f.midpoint[a] == 0.0) {
                ++on;
                CHECK(f.normal[a] == -1.0);
            }
            if (f.midpoint[a] == 1.0) {
                ++on;
                CHECK(f.normal[a] == 1.0);
            }
        }
        CHECK(on == 1);
    }
}

TEST_CASE("degenerate boxes are rejected") {
    Box b = Box::unit(2);
    b.hi[0] = 0.0;
    CHECK_THROWS_AS(uniform_grid(b, 4), StructuralError);
    CHECK_THROWS_AS(uniform_grid(Box::unit(2), 0), StructuralError);
}

TEST_CASE("L-shape grid") {
    const QuadratureSet q1 = lshape_grid(1);
    CHECK(q1.elements.size() == 3);
    CHECK(q1.total_measure() == doctest::Approx(3.0));
    CHECK(q1.facets.size() == 8);

    const QuadratureSet q50 = lshape_grid(50);
    CHECK(q50.elements.size() == 7500);
    CHECK(q50.facets.size() == 400);
    CHECK(q50.total_measure() == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(facet_measure(q50) == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(q50.mesh_h == 1.0 / 50.0);
    for (const auto& e : q50.elements) CHECK_FALSE((e.center[0] > 0.0 && e.center[1] < 0.0));
    // re-entrant edges carry normals pointing into the removed quadrant
    std::size_t reentrant = 0;
    for (const auto& f : q50.facets) {
        if (f.midpoint[1] == 0.0 && f.midpoint[0] > 0.0) {
            CHECK(f.normal[1] == -1.0);
            ++reentrant;
        }
        if (f.midpoint[0] == 0.0 && f.midpoint[1] < 0.0) {
            CHECK(f.normal[0] == 1.0);
            ++reentrant;
        }
    }
    CHECK(reentrant == 100);
}

TEST_CASE("graded spacing") {
    const auto w = graded_spacing(1.0, 50, true, true, default_refinement_ratio);
    double s = 0.0;
    for (double x : w) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    const double lo = *std::min_element(w.begin(), w.end());
    const double hi = *std::max_element(w.begin(), w.end());
    CHECK(lo >= 3e-3);
    CHECK(lo <= 5e-3);
    CHECK(hi >= 4e-2);
    CHECK(hi <= 6e-2);
    // monotone away from each end
    for (std::size_t k = 0; k + 1 < 25; ++k) CHECK(w[k] < w[k + 1]);
    for (std::size_t k = 25; k + 1 < 50; ++k) CHECK(w[k] > w[k + 1]);
    CHECK_THROWS_AS(graded_spacing(1.0, 10, true, true, 1.5), StructuralError);

    const auto one = graded_spacing(2.0, 10, false, true, 0.8);
    for (std::size_t k = 0; k + 1 < 10; ++k) CHECK(one[k] > one[k + 1]);
}

TEST_CASE("corner-refined grid") {
    const std::vector<Point> corners{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    const QuadratureSet qs = refined_grid(Box::unit(2), 50, corners);
    CHECK(qs.elements.size() == 2500);
    CHECK(qs.facets.size() == 200);
    CHECK(qs.total_measure() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(facet_measure(qs) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(qs.mesh_h == 1.0 / 50.0);
    // the corner cells are the smallest
    double smallest = 1.0;
    for (const auto& e : qs.elements) smallest = std::min(smallest, e.measure);
    CHECK(qs.elements.front().measure == doctest::Approx(smallest).epsilon(1e-12));

    const double q200 = std::pow(8.0, -1.0 / 99.0);
    const auto w = graded_spacing(1.0, 200, true, true, q200);
    // max / min = 8 per half as published; the sides come out 1.5e-3 .. 1.2e-2
    const double lo = *std::min_element(w.begin(), w.end());
    const double hi = *std::max_element(w.begin(), w.end());
    CHECK(hi / lo == doctest::Approx(8.0).epsilon(1e-10));
    CHECK(lo > 1.0e-3);
    CHECK(lo < 2.0e-3);
    CHECK(hi > 8.0e-3);
    CHECK(hi < 1.3e-2);
}

TEST_CASE("butterfly domain sampling") {
    const ImplicitDomain dom = butterfly_domain();
    const QuadratureSet qs = implicit_sample(dom, 2500, 200, 1);
    CHECK(qs.elements.size() == 2500);
    CHECK(qs.facets.size() == 200);
    CHECK(qs.meshless);
    for (const auto& e : qs.elements) CHECK(dom.inside(e.center));
    for (const auto& f : qs.facets) {
        // on the parametrised curve
        const double px = f.midpoint[0], py = f.midpoint[1] / 1.4;
        CHECK(std::hypot(px, py) == doctest::Approx(butterfly_radius(std::atan2(py, px))).epsilon(1e-12));
        CHECK(norm(f.normal) == doctest::Approx(1.0).epsilon(1e-12));
        // outward: a small step along the normal leaves the domain
        Point out = f.midpoint, in = f.midpoint;
        for (std::size_t a = 0; a < 2; ++a) {
            out[a] += 1e-6 * f.normal[a];
            in[a] -= 1e-6 * f.normal[a];
        }
        CHECK_FALSE(dom.inside(out));
        CHECK(dom.inside(in));
    }
}

TEST_CASE("heart domain sampling") {
    const ImplicitDomain dom = heart_domain();
    const QuadratureSet qs = implicit_sample(dom, 8000, 2500, 3);
    CHECK(qs.elements.size() == 8000);
    CHECK(qs.facets.size() == 2500);
    for (const auto& e : qs.elements) CHECK(heart_phi(e.center) < 0.0);
    for (const auto& f : qs.facets) {
        CHECK(std::abs(heart_phi(f.midpoint)) < 1e-10);
        CHECK(norm(f.normal) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const QuadratureSet again = implicit_sample(dom, 8000, 2500, 3);
    CHECK(again.facets.back().midpoint == qs.facets.back().midpoint);
    CHECK(again.elements.back().center == qs.elements.back().center);
}

TEST_CASE("heart gradient matches finite differences") {
    const Point x{0.3, -0.2, 0.4};
    const Vec3 g = heart_phi_gradient(x);
    for (std::size_t a = 0; a < 3; ++a) {
        Point p = x, m = x;
        p[a] += 1e-6;
        m[a] -= 1e-6;
        CHECK(g[a] == doctest::Approx((heart_phi(p) - heart_phi(m)) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("masked grid keeps only inside cells") {
    const ImplicitDomain dom = butterfly_domain();
    const QuadratureSet qs = masked_grid(dom.bounds, 40, dom.inside);
    CHECK(!qs.elements.empty());
    CHECK(qs.elements.size() < 1600);
    for (const auto& e : qs.elements) CHECK(dom.inside(e.center));
}

TEST_CASE("point set CSV export") {
    std::ostringstream os;
    write_csv(uniform_grid(Box::unit(2), 2), os);
    const std::string s = os.str();
    CHECK(s.rfind("x,y,weight,kind\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 4 + 8);
    CHECK(s.find(",interior\n") != std::string::npos);
    CHECK(s.find(",boundary\n") != std::string::npos);
}
