#include "vpvnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace vpvnet {

using Eigen::VectorXd;

NonFiniteGradient::NonFiniteGradient(std::size_t iteration, std::size_t index)
    : NumericDomainError("non-finite gradient at iteration " + std::to_string(iteration) + ", parameter " +
                         std::to_string(index)),
      iteration_(iteration),
      index_(index) {}

namespace {

void check_finite(const VectorXd& g, std::size_t iteration) {
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i])) throw NonFiniteGradient(iteration, static_cast<std::size_t>(i));
}

}  // namespace

Adam::Adam(std::size_t n, const AdamConfig& cfg)
    : cfg_(cfg), m_(VectorXd::Zero(static_cast<Eigen::Index>(n))), v_(VectorXd::Zero(static_cast<Eigen::Index>(n))) {
    if (!(cfg.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
    if (cfg.decay && !(*cfg.decay > 0.0 && *cfg.decay <= 1.0)) throw ConfigError("Adam decay must lie in (0, 1]");
    if (cfg.decay_steps == 0) throw ConfigError("Adam decay_steps must be positive");
}

double Adam::lr_at(std::size_t t) const {
    if (!cfg_.decay || t == 0) return cfg_.lr;
    return cfg_.lr * std::pow(*cfg_.decay, static_cast<double>((t - 1) / cfg_.decay_steps));
}

void Adam::step(VectorXd& theta, const VectorXd& grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size())
        throw StructuralError("Adam: parameter and gradient lengths must match the state");
    check_finite(grad, t_ + 1);
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = lr_at(t_);
    theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
}

std::string to_string(LbfgsStatus s) {
    switch (s) {
        case LbfgsStatus::gradient_tolerance: return "gradient_tolerance";
        case LbfgsStatus::decrease_tolerance: return "decrease_tolerance";
        case LbfgsStatus::max_iterations: return "max_iterations";
        case LbfgsStatus::line_search_failed: return "line_search_failed";
    }
    return "unknown";
}

namespace {

struct Probe {
    double alpha = 0.0, f = 0.0, dphi = 0.0;
    VectorXd x, g;
};

struct LineSearch {
    const Oracle& oracle;
    const LbfgsConfig& cfg;
    const VectorXd& x0;
    const VectorXd& d;
    double f0, d0;
    std::size_t iteration;
    std::size_t evals = 0;

    Probe eval(double alpha) {
        Probe p;
        p.alpha = alpha;
        p.x = x0 + alpha * d;
        p.g.resize(x0.size());
        p.f = oracle(p.x, p.g);
        ++evals;
        if (std::isfinite(p.f)) {
            check_finite(p.g, iteration);
            p.dphi = p.g.dot(d);
        } else {
            p.f = std::numeric_limits<double>::infinity();
            p.dphi = std::numeric_limits<double>::quiet_NaN();
        }
        return p;
    }

    bool armijo_fails(const Probe& p) const { return !(p.f <= f0 + cfg.c1 * p.alpha * d0); }
    bool curvature_holds(const Probe& p) const { return std::abs(p.dphi) <= -cfg.c2 * d0; }

    // minimiser of the cubic through lo and hi, kept away from the ends
    static double interpolate(const Probe& lo, const Probe& hi) {
        const double a = lo.alpha, b = hi.alpha;
        double t = 0.5 * (a + b);
        if (std::isfinite(hi.f) && std::isfinite(hi.dphi)) {
            const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
            const double disc = d1 * d1 - lo.dphi * hi.dphi;
            if (disc >= 0.0) {
                const double d2 = std::copysign(std::sqrt(disc), b - a);
                const double den = hi.dphi - lo.dphi + 2.0 * d2;
                if (den != 0.0) {
                    const double c = b - (b - a) * (hi.dphi + d2 - d1) / den;
                    if (std::isfinite(c)) t = c;
                }
            }
        }
        const double lo_end = std::min(a, b), hi_end = std::max(a, b), w = hi_end - lo_end;
        if (!(t > lo_end + 0.1 * w && t < hi_end - 0.1 * w)) t = 0.5 * (a + b);
        return t;
    }

    std::optional<Probe> zoom(Probe lo, Probe hi) {
        while (evals < cfg.max_line_search) {
            if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) return std::nullopt;
            Probe p = eval(interpolate(lo, hi));
            if (armijo_fails(p) || p.f >= lo.f) {
                hi = std::move(p);
            } else {
                if (curvature_holds(p)) return p;
                if (p.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(p);
            }
        }
        return std::nullopt;
    }

    std::optional<Probe> run(double alpha) {
        Probe prev;
        prev.alpha = 0.0;
        prev.f = f0;
        prev.dphi = d0;
        for (std::size_t i = 0; evals < cfg.max_line_search; ++i) {
            Probe p = eval(alpha);
            if (armijo_fails(p) || (i > 0 && p.f >= prev.f)) return zoom(std::move(prev), std::move(p));
            if (curvature_holds(p)) return p;
            if (p.dphi >= 0.0) return zoom(std::move(p), std::move(prev));
            prev = std::move(p);
            alpha *= 2.0;
        }
        return std::nullopt;
    }
};

}  // namespace

LbfgsResult lbfgs_run(const VectorXd& theta0, const Oracle& oracle, const LbfgsConfig& cfg, const IterCallback& on_iter) {
    if (cfg.history == 0) throw ConfigError("L-BFGS history must be positive");
    LbfgsResult res;
    VectorXd x = theta0, g(theta0.size());
    double f = oracle(x, g);
    res.evaluations = 1;
    if (!std::isfinite(f)) throw NumericDomainError("L-BFGS: non-finite loss at the initial point");
    check_finite(g, 0);
    res.theta = x;
    res.loss = f;

    std::deque<VectorXd> S, Y;
    std::deque<double> rho;
    bool retry = false;  // next direction is the steepest-descent retry

    if (g.lpNorm<Eigen::Infinity>() <= cfg.gtol) {
        res.status = LbfgsStatus::gradient_tolerance;
        return res;
    }
    std::size_t k = 0;
    res.status = LbfgsStatus::max_iterations;
    while (k < cfg.max_iters) {
        // two-loop recursion
        VectorXd d = -g;
        if (!S.empty()) {
            std::vector<double> a(S.size());
            for (std::size_t i = S.size(); i-- > 0;) {
                a[i] = rho[i] * S[i].dot(d);
                d -= a[i] * Y[i];
            }
            d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
            for (std::size_t i = 0; i < S.size(); ++i) {
                const double b = rho[i] * Y[i].dot(d);
                d += (a[i] - b) * S[i];
            }
        }
        double d0 = g.dot(d);
        if (!(d0 < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            d = -g;
            d0 = -g.squaredNorm();
        }
        const double alpha0 = S.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
        LineSearch ls{oracle, cfg, x, d, f, d0, k + 1};
        std::optional<Probe> p = ls.run(alpha0);
        res.evaluations += ls.evals;
        if (!p) {
            if (retry || S.empty()) {
                res.status = LbfgsStatus::line_search_failed;
                break;
            }
            S.clear();
            Y.clear();
            rho.clear();
            retry = true;
            continue;
        }
        retry = false;

        VectorXd s = p->x - x, y = p->g - g;
        const double sy = s.dot(y), yy = y.squaredNorm();
        if (sy > std::numeric_limits<double>::epsilon() * yy && sy > 0.0) {
            if (S.size() == cfg.history) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
        }
        const double f_prev = f;
        x = std::move(p->x);
        g = std::move(p->g);
        f = p->f;
        ++k;
        res.iterations = k;
        if (f < res.loss) {
            res.loss = f;
            res.theta = x;
        }
        if (on_iter) on_iter(k, x, f);
        if (g.lpNorm<Eigen::Infinity>() <= cfg.gtol) {
            res.status = LbfgsStatus::gradient_tolerance;
            break;
        }
        if (f_prev - f <= cfg.ftol * std::max(std::abs(f_prev), std::abs(f))) {
            res.status = LbfgsStatus::decrease_tolerance;
            break;
        }
    }
    return res;
}

TrainResult train_two_stage(Network& net, const StokesProblem& prob, const QuadratureSet& qs, const LossConfig& cfg,
                            const TrainSchedule& schedule) {
    const LossAssembler la(prob, qs, cfg);
    if (schedule.initialize) xavier_init(net, schedule.seed);
    VectorXd theta = net.get_params().values;

    TrainResult out;
    std::size_t iter = 0;
    auto record = [&](const LossBreakdown& b, const VectorXd& x) {
        out.log.push_back({iter++, b});
        if (out.best_theta.size() == 0 || b.total < out.best.total) {
            out.best = b;
            out.best_theta = x;
        }
    };

    try {
        AdamConfig ac;
        ac.lr = schedule.lr;
        ac.decay = schedule.decay;
        ac.decay_steps = schedule.decay_steps;
        Adam adam(theta.size() > 0 ? static_cast<std::size_t>(theta.size()) : 0, ac);
        for (std::size_t i = 0; i < schedule.adam_iters; ++i) {
            const LossResult r = la.evaluate(net, theta);
            ++out.evaluations;
            record(r.breakdown, theta);
            adam.step(theta, r.gradient);
            ++out.adam_steps;
        }
        if (schedule.lbfgs_max > 0) {
            LbfgsConfig lc;
            lc.history = schedule.lbfgs_history;
            lc.max_iters = schedule.lbfgs_max;
            lc.gtol = schedule.gtol;
            lc.ftol = schedule.ftol;
            LossBreakdown last;
            bool first = true;
            auto oracle = [&](const VectorXd& x, VectorXd& g) {
                const LossResult r = la.evaluate(net, x);
                ++out.evaluations;
                g = r.gradient;
                last = r.breakdown;
                if (first) {
                    record(last, x);
                    first = false;
                }
                return r.breakdown.total;
            };
            auto on_iter = [&](std::size_t, const VectorXd& x, double) { record(last, x); };
            const LbfgsResult lr = lbfgs_run(theta, oracle, lc, on_iter);
            out.lbfgs_iterations = lr.iterations;
            out.lbfgs_status = lr.status;
        } else {
            net.set_params(theta);
            const LossResult r = la.evaluate(net, false);
            ++out.evaluations;
            record(r.breakdown, theta);
        }
    } catch (const std::exception& e) {
        throw TrainingAborted(e.what(), out.log);
    }
    net.set_params(out.best_theta);
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) throw StructuralError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace vpvnet
