// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures (capped at 1).

#include "fd.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace vpvnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path configs;
    fs::path output;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

Network perturbed_net(const Architecture& arch, std::uint64_t seed, double sigma) {
    Network net(arch);
    xavier_init(net, seed);
    Eigen::VectorXd theta = net.get_params().values;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> n(0.0, sigma);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += n(rng);
    net.set_params(theta);
    return net;
}

RunResult run_bundled(const Context& ctx, const std::string& file, const std::string& tag = "") {
    ExperimentConfig cfg = load_config(ctx.configs / file);
    if (!tag.empty()) cfg.output_dir = (cfg.output_dir.empty() ? cfg.name : cfg.output_dir) + "_" + tag;
    return run_experiment(cfg, ctx.output, &std::cerr);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// the replicate with the smallest loss must not have the largest e_u
bool rank_consistent(const RunResult& r) {
    std::size_t lo = 0, worst = 0;
    for (std::size_t i = 1; i < r.replicates.size(); ++i) {
        if (r.replicates[i].report.loss.total < r.replicates[lo].report.loss.total) lo = i;
        if (r.replicates[i].report.error("u") > r.replicates[worst].report.error("u")) worst = i;
    }
    return r.replicates.size() < 2 || lo != worst;
}

Outcome gradient_check(const Context&) {
    std::mt19937_64 rng(2024);
    const std::array<std::pair<std::size_t, std::size_t>, 5> nets{{{2, 4}, {2, 8}, {4, 4}, {4, 8}, {8, 8}}};
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto [layers, width] = nets[rng() % nets.size()];
        const std::size_t n = 2 + rng() % 4;
        const StokesProblem p = trial % 2 ? pressure_robust(1e-4) : smooth2d();
        LossConfig cfg;
        if (rng() % 3 == 0) cfg.boundary = BoundaryMode::pressure_normal_velocity;
        const QuadratureSet qs = uniform_grid(Box::unit(2), n);
        Network net = perturbed_net(Architecture::standard(2, layers, width), rng(), 0.1);
        const LossAssembler la(p, qs, cfg);
        const Eigen::VectorXd theta = net.get_params().values;
        const Eigen::VectorXd g = la.evaluate(net, theta).gradient;
        std::vector<double> a(g.data(), g.data() + g.size()), b(a.size());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            Eigen::VectorXd t = theta;
            t[i] = theta[i] + h;
            const double fp = la.evaluate(net, t).breakdown.total;
            t[i] = theta[i] - h;
            const double fm = la.evaluate(net, t).breakdown.total;
            b[static_cast<std::size_t>(i)] = (fp - fm) / (2 * h);
        }
        worst = std::max(worst, fdtest::rel_err(a, b));
    }
    return {worst < 1e-6, "20 instances, worst relative error " + fmt(worst)};
}

template <std::size_t D>
double jet_error(const Network& net, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::array<double, D> x;
        for (auto& c : x) c = u(rng);
        const auto jets = forward_jets<D>(net, x);
        for (std::size_t o = 0; o < jets.size(); ++o) {
            auto value = [&](const std::array<double, D>& y) { return forward_jets<D>(net, y)[o].value; };
            std::vector<double> a, b;
            for (std::size_t i = 0; i < D; ++i) {
                a.push_back(jets[o].grad[i]);
                b.push_back(fdtest::d1(value, x, i));
            }
            for (std::size_t i = 0; i < D; ++i)
                for (std::size_t j = i; j < D; ++j) {
                    a.push_back(jets[o].h(i, j));
                    b.push_back(fdtest::d2(value, x, i, j));
                }
            worst = std::max(worst, fdtest::rel_err(a, b));
        }
    }
    return worst;
}

Outcome jet_check(const Context&) {
    std::mt19937_64 rng(77);
    const double e2 = jet_error<2>(perturbed_net(Architecture::standard(2, 4, 8), 5, 0.1), rng);
    const double e3 = jet_error<3>(perturbed_net(Architecture::standard(3, 4, 8), 6, 0.1), rng);
    const double worst = std::max(e2, e3);
    return {worst < 1e-6, "100 points each in 2D and 3D, worst relative error " + fmt(worst)};
}

Outcome divergence_check(const Context&) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(1000);
    for (auto& x : pts) x = {u(rng), u(rng), 0.0};
    double worst = 0.0;
    for (std::uint64_t draw = 0; draw < 10; ++draw) {
        const Network net = perturbed_net(Architecture::standard(2, 8, 16), 100 + draw, 0.2);
        for (const auto& s : network_fields(net, pts)) worst = std::max(worst, std::abs(s.divergence()));
        for (std::size_t i = 0; i < pts.size(); i += 50)
            worst = std::max(worst, std::abs(fields(net, pts[i]).divergence()));
    }
    return {worst <= 1e-12, "1000 points x 10 draws, max |u_x + v_y| = " + fmt(worst)};
}

Outcome loss_floor_check(const Context&) {
    struct Case {
        StokesProblem p;
        QuadratureSet qs;
    };
    std::vector<Case> cases;
    cases.push_back({smooth2d(), uniform_grid(Box::unit(2), 20)});
    cases.push_back({smooth3d(), uniform_grid(Box::unit(3), 10)});
    cases.push_back({pressure_robust(1.0), uniform_grid(Box::unit(2), 20)});
    cases.push_back({lshape_singular(), lshape_grid(20)});
    double worst = 0.0;
    std::string detail;
    for (const auto& c : cases) {
        double w = 0.0;
        for (BoundaryMode mode : {BoundaryMode::velocity, BoundaryMode::pressure_normal_velocity}) {
            LossConfig cfg;
            cfg.boundary = mode;
            w = std::max(w, assemble_loss(c.p.exact->fields, c.p, c.qs, cfg).total);
        }
        worst = std::max(worst, w);
        detail += (detail.empty() ? "" : ", ") + c.p.name + " " + fmt(w);
    }
    return {worst <= 1e-10, "exact-field loss: " + detail};
}

std::string error_line(const ErrorReport& m) {
    std::string s;
    for (const auto& e : m.errors) s += (s.empty() ? "" : " ") + ("e_" + e.field + "=" + fmt(e.value));
    return s;
}

Outcome smooth_accuracy_check(const Context& ctx) {
    const RunResult r = run_bundled(ctx, "table1_8x16_50.toml");
    const ErrorReport& m = r.median;
    const bool pass = m.error("u") <= 5e-3 && m.error("v") <= 5e-3 && m.error("p") <= 5e-2;
    return {pass, "smooth2d 8x16 on 50x50, median " + error_line(m) + " (bounds 5e-3, 5e-3, 5e-2); loss/error rank " +
                      (rank_consistent(r) ? "consistent" : "INCONSISTENT")};
}

Outcome robustness_check(const Context& ctx) {
    const RunResult lo = run_bundled(ctx, "table2_nu1e-2_50.toml");
    const RunResult hi = run_bundled(ctx, "table2_nu1e-6_50.toml");
    const double a = lo.median.error("u"), b = hi.median.error("u");
    double div = 0.0;
    for (const RunResult* r : {&lo, &hi})
        for (const auto& rep : r->replicates) div = std::max(div, rep.report.divergence.max);
    const bool pass = b <= 10 * a && a <= 1e-2 && b <= 1e-2 && div <= 1e-12;
    return {pass, "median e_u nu=1e-2: " + fmt(a) + ", nu=1e-6: " + fmt(b) + ", max |div u| " + fmt(div) +
                      "; e_v " + fmt(lo.median.error("v")) + " / " + fmt(hi.median.error("v"))};
}

Outcome singular_check(const Context& ctx) {
    const RunResult r = run_bundled(ctx, "lshape_singular_12x16_50.toml");
    const ErrorReport& m = r.median;
    const bool pass = m.error("u") <= 5e-2 && m.error("v") <= 5e-2;
    return {pass, "lshape_singular 12x16 on 50x50x3, median " + error_line(m) + " (bounds 5e-2 on u, v)"};
}

Outcome optimizer_check(const Context&) {
    // Adam single step against the hand recurrence
    Adam adam(1, AdamConfig{0.1});
    Eigen::VectorXd th = Eigen::VectorXd::Zero(1), g = Eigen::VectorXd::Ones(1);
    adam.step(th, g);
    const double m = 0.1, v = 0.001, mh = m / 0.1, vh = v / 0.001;
    const double expect = -0.1 * mh / (std::sqrt(vh) + 1e-8);
    const double adam_err = std::abs(th[0] - expect);

    Eigen::VectorXd d(2);
    d << 1.0, 10.0;
    LbfgsConfig qc;
    qc.gtol = 1e-12;
    const LbfgsResult q = lbfgs_run(
        Eigen::VectorXd::Ones(2),
        [&](const Eigen::VectorXd& x, Eigen::VectorXd& gr) {
            gr = d.cwiseProduct(x);
            return 0.5 * x.dot(gr);
        },
        qc);

    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LbfgsConfig rc;
    rc.max_iters = 200;
    rc.gtol = 1e-9;
    const LbfgsResult rb = lbfgs_run(
        x0,
        [](const Eigen::VectorXd& x, Eigen::VectorXd& gr) {
            const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
            gr.resize(2);
            gr << -2 * a - 400 * x[0] * b, 200 * b;
            return a * a + 100 * b * b;
        },
        rc);

    const bool pass = adam_err <= 1e-12 && q.theta.norm() < 1e-10 && q.iterations <= 10 && rb.loss < 1e-8 &&
                      rb.iterations <= 200;
    return {pass, "Adam step error " + fmt(adam_err) + "; quadratic |theta| " + fmt(q.theta.norm()) + " in " +
                      std::to_string(q.iterations) + " iterations; Rosenbrock loss " + fmt(rb.loss) + " in " +
                      std::to_string(rb.iterations) + " iterations"};
}

Outcome two_stage_check(const Context&) {
    const StokesProblem p = smooth2d();
    const QuadratureSet qs = uniform_grid(Box::unit(2), 20);
    std::vector<double> both, adam_only;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainSchedule s;
        s.seed = seed;
        s.adam_iters = 1000;
        s.lbfgs_max = 1000;
        Network a(Architecture::standard(2, 4, 8));
        both.push_back(train_two_stage(a, p, qs, {}, s).best.total);
        s.adam_iters = 2000;
        s.lbfgs_max = 0;
        Network b(Architecture::standard(2, 4, 8));
        adam_only.push_back(train_two_stage(b, p, qs, {}, s).best.total);
    }
    const double m2 = median(both), m1 = median(adam_only);
    return {m2 <= m1, "smooth2d 4x8, 2000 iterations, median loss Adam+L-BFGS " + fmt(m2) + " vs Adam only " + fmt(m1)};
}

Outcome lid_check(const Context& ctx) {
    const ExperimentConfig cfg = load_config(ctx.configs / "lid2d_refined50.toml");
    const RunResult r = run_bundled(ctx, "lid2d_refined50.toml");
    const StokesProblem p = build_problem(cfg);
    const QuadratureSet qs = build_quadrature(cfg, p);
    const LossAssembler la(p, qs, cfg.loss);
    const double zero_bd = la.evaluate(Network(build_architecture(cfg, 2)), false).breakdown.boundary;

    // top corner elements: centres nearest (0, 1) and (1, 1)
    std::size_t tl = 0, tr = 0;
    auto dist = [](const Point& a, double x, double y) { return std::hypot(a[0] - x, a[1] - y); };
    for (std::size_t i = 0; i < qs.elements.size(); ++i) {
        if (dist(qs.elements[i].center, 0, 1) < dist(qs.elements[tl].center, 0, 1)) tl = i;
        if (dist(qs.elements[i].center, 1, 1) < dist(qs.elements[tr].center, 1, 1)) tr = i;
    }
    std::vector<Point> centres;
    for (const auto& e : qs.elements) centres.push_back(e.center);

    bool pass = true;
    std::string detail;
    for (std::size_t k = 0; k < r.replicates.size(); ++k) {
        Network net(build_architecture(cfg, 2));
        net.set_params(r.replicates[k].train.best_theta);
        const auto f = network_fields(net, centres);
        std::size_t imax = 0, imin = 0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f[i].p > f[imax].p) imax = i;
            if (f[i].p < f[imin].p) imin = i;
        }
        const bool corners = (imax == tl && imin == tr) || (imax == tr && imin == tl);
        const double div = r.replicates[k].report.divergence.max;
        const double bd = r.replicates[k].train.best.boundary;
        const bool ok = div <= 1e-12 && bd < 1e-2 * zero_bd && corners;
        pass = pass && ok;
        detail += (k ? "; " : "") + std::string("max |div u| ") + fmt(div) + ", boundary " + fmt(bd) + " vs zero-net " +
                  fmt(zero_bd) + ", p extrema " + (corners ? "at the top corners" : "NOT at the top corners");
    }
    return {pass, "lid2d refined 50x50: " + detail};
}

Outcome determinism_check(const Context& ctx) {
    const RunResult a = run_bundled(ctx, "table1_4x8_20.toml", "first");
    const RunResult b = run_bundled(ctx, "table1_4x8_20.toml", "second");
    std::vector<fs::path> files{"report_median.json"};
    for (std::size_t i = 0; i < a.replicates.size(); ++i) files.push_back(fs::path("replicate_" + std::to_string(i)) / "report.json");
    std::size_t same = 0;
    for (const auto& f : files) {
        const std::string x = slurp(a.output / f), y = slurp(b.output / f);
        if (!x.empty() && x == y) ++same;
    }
    return {same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) +
                                      " report files byte-identical across two runs of table1_4x8_20.toml"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::vector<int> only;
    Context ctx;
    ctx.configs = VPVNET_CONFIG_DIR;
    std::string configs = ctx.configs.string(), output = "acceptance_runs";
    app.add_option("-c,--criterion", only, "run only these criteria (1-11)");
    app.add_option("--configs", configs, "bundled config directory");
    app.add_option("-o,--output", output, "output root for training runs");
    CLI11_PARSE(app, argc, argv);
    ctx.configs = configs;
    ctx.output = output;

    const std::vector<std::pair<std::string, Outcome (*)(const Context&)>> criteria{
        {"gradient vs finite differences", gradient_check},
        {"jet derivatives vs finite differences", jet_check},
        {"divergence-free stream-function head", divergence_check},
        {"exact-solution loss floor", loss_floor_check},
        {"smooth2d accuracy", smooth_accuracy_check},
        {"pressure robustness in nu", robustness_check},
        {"singular L-shape accuracy", singular_check},
        {"optimizer units", optimizer_check},
        {"two-stage beats Adam only", two_stage_check},
        {"lid-driven cavity qualitative", lid_check},
        {"report determinism", determinism_check},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream t;
        t.precision(1);
        t << std::fixed << secs;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << " - "
                  << o.detail << " [" << t.str() << " s]" << std::endl;
        if (!o.pass) ++failures;
    }
    return failures ? 1 : 0;
}
