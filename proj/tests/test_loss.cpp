#include "fd.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/loss.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace vpvnet;

namespace {

Network random_net(const Architecture& arch, std::uint64_t seed) {
    Network net(arch);
    xavier_init(net, seed);
    Eigen::VectorXd theta = net.get_params().values;
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 0.1);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += n(rng);
    net.set_params(theta);
    return net;
}

FieldProvider exact_provider(const StokesProblem& p) { return p.exact->fields; }

FieldProvider net_provider(const Network& net) {
    return [&net](const Point& x) { return fields(net, x); };
}

void check_close(const LossBreakdown& a, const LossBreakdown& b, double tol) {
    const double s = std::max(1.0, std::abs(b.total));
    CHECK(std::abs(a.momentum - b.momentum) <= tol * s);
    CHECK(std::abs(a.vorticity - b.vorticity) <= tol * s);
    CHECK(std::abs(a.divergence - b.divergence) <= tol * s);
    CHECK(std::abs(a.boundary - b.boundary) <= tol * s);
    CHECK(std::abs(a.total - b.total) <= tol * s);
}

double fd_gradient_error(Network& net, const LossAssembler& la) {
    const Eigen::VectorXd theta = net.get_params().values;
    const LossResult r = la.evaluate(net, theta);
    std::vector<double> got(r.gradient.data(), r.gradient.data() + r.gradient.size()), fd(got.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < got.size(); ++i) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp[static_cast<Eigen::Index>(i)] += h;
        tm[static_cast<Eigen::Index>(i)] -= h;
        net.set_params(tp);
        const double fp = la.evaluate(net, false).breakdown.total;
        net.set_params(tm);
        const double fm = la.evaluate(net, false).breakdown.total;
        fd[i] = (fp - fm) / (2 * h);
    }
    net.set_params(theta);
    return fdtest::rel_err(got, fd);
}

}  // namespace

TEST_CASE("residuals of the zero network are minus the source") {
    const StokesProblem p = smooth2d();
    const Point x{0.3, 0.7, 0.0};
    const Network net(Architecture::standard(2, 4, 8));
    const Residuals r = interior_residuals(fields(net, x), p.source(x), 1.0);
    const Vec3 f = p.source(x);
    CHECK(r.momentum[0] == -f[0]);
    CHECK(r.momentum[1] == -f[1]);
    CHECK(r.vorticity[0] == 0.0);
    CHECK(r.divergence == 0.0);
}

TEST_CASE("exact fields zero the residuals") {
    const StokesProblem s = smooth2d();
    const Point x{0.5, 0.5, 0.0};
    Residuals r = interior_residuals(s.exact->fields(x), s.source(x), 1.0);
    CHECK(std::abs(r.momentum[0]) <= 1e-12);
    CHECK(std::abs(r.momentum[1]) <= 1e-12);
    CHECK(std::abs(r.vorticity[0]) <= 1e-12);

    const StokesProblem pr = pressure_robust(1.0);
    r = interior_residuals(pr.exact->fields({0.2, 0.9, 0.0}), pr.source({0.2, 0.9, 0.0}), 1.0);
    CHECK(std::hypot(r.momentum[0], r.momentum[1]) <= 1e-12);

    const StokesProblem s3 = smooth3d();
    const Point y{0.3, 0.6, 0.1};
    r = interior_residuals(s3.exact->fields(y), s3.source(y), 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(r.momentum[i]) <= 1e-12);
        CHECK(std::abs(r.vorticity[i]) <= 1e-12);
    }
    CHECK(std::abs(r.divergence) <= 1e-12);
}

TEST_CASE("zero network on the 2x2 lid-driven cavity") {
    const StokesProblem p = lid_driven(2);
    const QuadratureSet qs = uniform_grid(Box::unit(2), 2);
    const Network net(Architecture::standard(2, 4, 8));
    const LossResult r = assemble_loss(net, p, qs, {});
    CHECK(r.breakdown.momentum == 0.0);
    CHECK(r.breakdown.vorticity == 0.0);
    CHECK(r.breakdown.boundary == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.breakdown.total == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(assemble_loss(net_provider(net), p, qs, {}).total == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("exact solutions give a vanishing loss") {
    struct Case {
        StokesProblem p;
        QuadratureSet qs;
    };
    const std::vector<Case> cases{{smooth2d(), uniform_grid(Box::unit(2), 20)},
                                  {smooth3d(), uniform_grid(Box::unit(3), 8)},
                                  {pressure_robust(1.0), uniform_grid(Box::unit(2), 20)},
                                  {pressure_robust(1e-4), uniform_grid(Box::unit(2), 20)},
                                  {lshape_singular(), lshape_grid(10)}};
    for (const auto& c : cases) {
        for (BoundaryMode bm : {BoundaryMode::velocity, BoundaryMode::pressure_normal_velocity}) {
            LossConfig cfg;
            cfg.boundary = bm;
            const LossBreakdown b = assemble_loss(exact_provider(c.p), c.p, c.qs, cfg);
            CHECK_MESSAGE(b.total <= 1e-10, c.p.name << " " << to_string(bm) << " " << b.total);
            CHECK(b.total >= 0.0);
        }
    }
}

TEST_CASE("batched assembly matches the pointwise field path") {
    const Network n2 = random_net(Architecture::standard(2, 4, 8), 3);
    const Network n3 = random_net(Architecture::standard(3, 2, 6), 4);
    const QuadratureSet q2 = uniform_grid(Box::unit(2), 7);
    const QuadratureSet q3 = uniform_grid(Box::unit(3), 3);
    for (BoundaryMode bm : {BoundaryMode::velocity, BoundaryMode::pressure_normal_velocity}) {
        LossConfig cfg;
        cfg.boundary = bm;
        cfg.chunk = 10;
        check_close(LossAssembler(smooth2d(), q2, cfg).evaluate(n2).breakdown,
                    assemble_loss(net_provider(n2), smooth2d(), q2, cfg), 1e-12);
        check_close(LossAssembler(smooth3d(), q3, cfg).evaluate(n3).breakdown,
                    assemble_loss(net_provider(n3), smooth3d(), q3, cfg), 1e-12);
    }
    LossConfig ml;
    ml.mode = LossMode::meshless;
    const QuadratureSet pts = implicit_sample(butterfly_domain(), 60, 20, 5);
    check_close(LossAssembler(butterfly2d(), pts, ml).evaluate(n2).breakdown,
                assemble_loss(net_provider(n2), butterfly2d(), pts, ml), 1e-12);
}

TEST_CASE("loss gradient matches central differences") {
    SUBCASE("2D velocity boundary, 4x8 net, 5x5 grid") {
        Network net = random_net(Architecture::standard(2, 4, 8), 11);
        const LossAssembler la(smooth2d(), uniform_grid(Box::unit(2), 5), {});
        CHECK(fd_gradient_error(net, la) < 1e-6);
    }
    SUBCASE("2D pressure-normal-velocity, pressure-robust") {
        Network net = random_net(Architecture::standard(2, 2, 6), 12);
        LossConfig cfg;
        cfg.boundary = BoundaryMode::pressure_normal_velocity;
        const LossAssembler la(pressure_robust(1e-2), uniform_grid(Box::unit(2), 4), cfg);
        CHECK(fd_gradient_error(net, la) < 1e-6);
    }
    SUBCASE("3D") {
        Network net = random_net(Architecture::standard(3, 2, 5), 13);
        const LossAssembler la(smooth3d(), uniform_grid(Box::unit(3), 3), {});
        CHECK(fd_gradient_error(net, la) < 1e-6);
        LossConfig cfg;
        cfg.boundary = BoundaryMode::pressure_normal_velocity;
        const LossAssembler lb(smooth3d(), uniform_grid(Box::unit(3), 2), cfg);
        CHECK(fd_gradient_error(net, lb) < 1e-6);
    }
    SUBCASE("meshless") {
        Network net = random_net(Architecture::standard(2, 2, 6), 14);
        LossConfig cfg;
        cfg.mode = LossMode::meshless;
        cfg.alpha2 = 10.0;
        const LossAssembler la(butterfly2d(), implicit_sample(butterfly_domain(), 30, 10, 2), cfg);
        CHECK(fd_gradient_error(net, la) < 1e-6);
    }
}

TEST_CASE("element order does not change the loss") {
    const Network net = random_net(Architecture::standard(2, 4, 8), 21);
    QuadratureSet qs = uniform_grid(Box::unit(2), 9);
    const double a = LossAssembler(smooth2d(), qs, {}).evaluate(net, false).breakdown.total;
    std::mt19937_64 rng(1);
    std::shuffle(qs.elements.begin(), qs.elements.end(), rng);
    std::shuffle(qs.facets.begin(), qs.facets.end(), rng);
    const double b = LossAssembler(smooth2d(), qs, {}).evaluate(net, false).breakdown.total;
    CHECK(std::abs(a - b) <= 1e-14 * a);
}

TEST_CASE("threaded assembly is bit-identical") {
    const Network net = random_net(Architecture::standard(2, 4, 8), 22);
    const QuadratureSet qs = uniform_grid(Box::unit(2), 12);
    LossConfig one, many;
    one.chunk = many.chunk = 16;
    many.threads = 3;
    const LossResult a = LossAssembler(smooth2d(), qs, one).evaluate(net);
    const LossResult b = LossAssembler(smooth2d(), qs, many).evaluate(net);
    CHECK(a.breakdown.total == b.breakdown.total);
    CHECK(a.gradient == b.gradient);
}

TEST_CASE("pressure gauge leaves momentum and vorticity unchanged") {
    Network net = random_net(Architecture::standard(2, 4, 8), 23);
    const LossAssembler la(smooth2d(), uniform_grid(Box::unit(2), 6), {});
    const LossBreakdown a = la.evaluate(net, false).breakdown;
    net.head().bias[2] += 3.7;
    const LossBreakdown b = la.evaluate(net, false).breakdown;
    CHECK(a.momentum == b.momentum);
    CHECK(a.vorticity == b.vorticity);
    CHECK(a.boundary == b.boundary);
}

TEST_CASE("meshless loss of the zero network") {
    const StokesProblem p = butterfly2d();
    const QuadratureSet pts = implicit_sample(butterfly_domain(), 500, 50, 9);
    const Network net(Architecture::standard(2, 4, 8));
    LossConfig cfg;
    cfg.mode = LossMode::meshless;
    const LossBreakdown b = LossAssembler(p, pts, cfg).evaluate(net, false).breakdown;
    double g2 = 0.0, f2 = 0.0;
    for (const auto& f : pts.facets) {
        const Vec3 g = p.dirichlet(f.midpoint);
        g2 += g[0] * g[0] + g[1] * g[1];
    }
    for (const auto& e : pts.elements) {
        const Vec3 f = p.source(e.center);
        f2 += f[0] * f[0] + f[1] * f[1];
    }
    CHECK(b.vorticity == 0.0);
    CHECK(b.boundary == doctest::Approx(2500.0 * g2).epsilon(1e-13));
    CHECK(b.momentum == doctest::Approx(f2).epsilon(1e-13));

    const Network rn = random_net(Architecture::standard(2, 4, 8), 5);
    const LossBreakdown one = LossAssembler(p, pts, cfg).evaluate(rn, false).breakdown;
    cfg.alpha2 *= 2;
    const LossBreakdown two = LossAssembler(p, pts, cfg).evaluate(rn, false).breakdown;
    CHECK(two.vorticity + two.boundary == 2 * (one.vorticity + one.boundary));
    CHECK(two.momentum == one.momentum);
}

TEST_CASE("loss structural errors") {
    const Network n3(Architecture::standard(3, 2, 4));
    CHECK_THROWS_AS(assemble_loss(n3, smooth2d(), uniform_grid(Box::unit(2), 3), {}), StructuralError);
    QuadratureSet pts = implicit_sample(butterfly_domain(), 20, 5, 1);
    pts.facets.clear();
    LossConfig cfg;
    cfg.mode = LossMode::meshless;
    CHECK_THROWS_AS(LossAssembler(butterfly2d(), pts, cfg), StructuralError);
    cfg.alpha2 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(parse_boundary_mode("normal"), ConfigError);
}

TEST_CASE("loss log CSV") {
    std::vector<LossRecord> log{{0, {1.0, 2.0, 0.0, 3.0, 6.0}}, {1, {0.5, 0.25, 0.0, 0.25, 1.0}}};
    std::ostringstream os;
    write_loss_log(log, os);
    CHECK(os.str() == "iter,momentum,vorticity,divergence,boundary,total\n0,1,2,0,3,6\n1,0.5,0.25,0,0.25,1\n");
}
