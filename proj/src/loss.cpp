#include "vpvnet/loss.hpp"

#include "vpvnet/batch.hpp"
#include "vpvnet/errors.hpp"

#include <cmath>
#include <ostream>
#include <exception>
#include <mutex>
#include <thread>

namespace vpvnet {

using Eigen::Index;

std::string to_string(BoundaryMode m) {
    return m == BoundaryMode::velocity ? "velocity" : "pressure_normal_velocity";
}
std::string to_string(LossMode m) { return m == LossMode::mesh ? "mesh" : "meshless"; }
std::string to_string(VorticityWeight m) { return m == VorticityWeight::h_minus_2 ? "h_minus_2" : "unit"; }

BoundaryMode parse_boundary_mode(std::string_view s) {
    if (s == "velocity") return BoundaryMode::velocity;
    if (s == "pressure_normal_velocity") return BoundaryMode::pressure_normal_velocity;
    throw ConfigError("unknown boundary mode '" + std::string(s) + "' (velocity | pressure_normal_velocity)");
}
LossMode parse_loss_mode(std::string_view s) {
    if (s == "mesh") return LossMode::mesh;
    if (s == "meshless") return LossMode::meshless;
    throw ConfigError("unknown loss mode '" + std::string(s) + "' (mesh | meshless)");
}
VorticityWeight parse_vorticity_weight(std::string_view s) {
    if (s == "h_minus_2") return VorticityWeight::h_minus_2;
    if (s == "unit") return VorticityWeight::unit;
    throw ConfigError("unknown vorticity weight '" + std::string(s) + "' (h_minus_2 | unit)");
}

void LossConfig::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(alpha2 > 0.0) || !std::isfinite(alpha2)) throw ConfigError("alpha2 must be positive");
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (chunk == 0) throw ConfigError("chunk must be at least 1");
}

Residuals interior_residuals(const FieldSample& fs, const Vec3& f, double nu) {
    Residuals r;
    const auto& gu = fs.grad_vel;
    const auto& gw = fs.grad_vort;
    if (fs.dim == 2) {
        r.momentum[0] = fs.grad_p[0] + nu * gw[0][1] - f[0];
        r.momentum[1] = fs.grad_p[1] - nu * gw[0][0] - f[1];
        r.vorticity[0] = nu * (fs.vort[0] + gu[0][1] - gu[1][0]);
        r.divergence = 0.0;
        return r;
    }
    const Vec3 curl_w{gw[2][1] - gw[1][2], gw[0][2] - gw[2][0], gw[1][0] - gw[0][1]};
    const Vec3 curl_u{gu[2][1] - gu[1][2], gu[0][2] - gu[2][0], gu[1][0] - gu[0][1]};
    for (std::size_t i = 0; i < 3; ++i) {
        r.momentum[i] = nu * curl_w[i] + fs.grad_p[i] - f[i];
        r.vorticity[i] = nu * (fs.vort[i] - curl_u[i]);
    }
    r.divergence = fs.divergence();
    return r;
}

namespace {

struct Weights {
    std::vector<double> mom, vort, div, bd;
};

void check_inputs(std::size_t net_dim, const StokesProblem& prob, const QuadratureSet& qs, const LossConfig& cfg) {
    cfg.validate();
    if (net_dim != prob.dim) throw StructuralError("network and problem dimensions differ");
    if (qs.dim != prob.dim) throw StructuralError("quadrature and problem dimensions differ");
    if (cfg.mode == LossMode::meshless && qs.facets.empty())
        throw StructuralError("meshless loss needs boundary samples");
    if (qs.elements.empty()) throw StructuralError("quadrature set has no interior points");
}

bool unit_vorticity(const LossConfig& cfg) {
    return cfg.vorticity_weight == VorticityWeight::unit || cfg.boundary == BoundaryMode::pressure_normal_velocity;
}

Weights make_weights(const QuadratureSet& qs, const LossConfig& cfg) {
    Weights w;
    const double d = static_cast<double>(qs.dim);
    for (const auto& e : qs.elements) {
        if (cfg.mode == LossMode::meshless) {
            w.mom.push_back(1.0);
            w.vort.push_back(cfg.alpha2);
            w.div.push_back(cfg.alpha2);
            continue;
        }
        const double h = cfg.per_element_h ? std::pow(e.measure, 1.0 / d) : qs.mesh_h;
        const double h2 = 1.0 / (h * h);
        w.mom.push_back(e.measure);
        w.vort.push_back(unit_vorticity(cfg) ? e.measure : h2 * e.measure);
        w.div.push_back(h2 * e.measure);
    }
    for (const auto& f : qs.facets) {
        if (cfg.mode == LossMode::meshless)
            w.bd.push_back(cfg.alpha2);
        else
            w.bd.push_back(cfg.alpha * f.measure / f.size);
    }
    return w;
}

double boundary_pressure(const StokesProblem& prob, const Point& x) {
    return prob.exact ? prob.exact->values(x).p : 0.0;
}

double dot(const Vec3& a, const Vec3& b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
}

void finish(LossBreakdown& b) { b.total = b.momentum + b.vorticity + b.divergence + b.boundary; }

}  // namespace

LossBreakdown assemble_loss(const FieldProvider& fields, const StokesProblem& prob, const QuadratureSet& qs,
                            const LossConfig& cfg) {
    check_inputs(prob.dim, prob, qs, cfg);
    const Weights w = make_weights(qs, cfg);
    const std::size_t d = prob.dim;
    LossBreakdown b;
    for (std::size_t k = 0; k < qs.elements.size(); ++k) {
        const Point& x = qs.elements[k].center;
        const FieldSample fs = fields(x);
        if (fs.dim != d) throw StructuralError("field sample dimension differs from the problem");
        const Residuals r = interior_residuals(fs, prob.source(x), prob.viscosity);
        b.momentum += w.mom[k] * dot(r.momentum, r.momentum, d);
        b.vorticity += w.vort[k] * dot(r.vorticity, r.vorticity, d == 2 ? 1 : 3);
        if (d == 3) b.divergence += w.div[k] * r.divergence * r.divergence;
    }
    for (std::size_t k = 0; k < qs.facets.size(); ++k) {
        const BoundaryFacet& f = qs.facets[k];
        const FieldSample fs = fields(f.midpoint);
        const Vec3 g = prob.dirichlet(f.midpoint);
        double s = 0.0;
        if (cfg.boundary == BoundaryMode::velocity) {
            for (std::size_t i = 0; i < d; ++i) s += (fs.vel[i] - g[i]) * (fs.vel[i] - g[i]);
        } else {
            const double un = dot(fs.vel, f.normal, d) - dot(g, f.normal, d);
            const double dp = fs.p - boundary_pressure(prob, f.midpoint);
            s = un * un + dp * dp;
        }
        b.boundary += w.bd[k] * s;
    }
    finish(b);
    return b;
}

LossAssembler::LossAssembler(const StokesProblem& prob, const QuadratureSet& qs, const LossConfig& cfg)
    : dim_(prob.dim), nu_(prob.viscosity), cfg_(cfg) {
    check_inputs(prob.dim, prob, qs, cfg);
    const Weights w = make_weights(qs, cfg);
    const Index d = static_cast<Index>(dim_);
    const Index ni = static_cast<Index>(qs.elements.size());
    const Index nb = static_cast<Index>(qs.facets.size());

    x_int_.resize(d, ni);
    f_int_.resize(d, ni);
    w_mom_.resize(ni);
    w_vort_.resize(ni);
    w_div_.resize(ni);
    for (Index k = 0; k < ni; ++k) {
        const Point& x = qs.elements[static_cast<std::size_t>(k)].center;
        const Vec3 f = prob.source(x);
        for (Index a = 0; a < d; ++a) {
            x_int_(a, k) = x[static_cast<std::size_t>(a)];
            f_int_(a, k) = f[static_cast<std::size_t>(a)];
        }
        w_mom_[k] = w.mom[static_cast<std::size_t>(k)];
        w_vort_[k] = w.vort[static_cast<std::size_t>(k)];
        w_div_[k] = w.div[static_cast<std::size_t>(k)];
    }

    x_bd_.resize(d, nb);
    g_bd_.resize(d, nb);
    n_bd_.resize(d, nb);
    p0_bd_.resize(nb);
    w_bd_.resize(nb);
    for (Index k = 0; k < nb; ++k) {
        const BoundaryFacet& f = qs.facets[static_cast<std::size_t>(k)];
        const Vec3 g = prob.dirichlet(f.midpoint);
        for (Index a = 0; a < d; ++a) {
            const auto i = static_cast<std::size_t>(a);
            x_bd_(a, k) = f.midpoint[i];
            g_bd_(a, k) = g[i];
            n_bd_(a, k) = f.normal[i];
        }
        p0_bd_[k] = cfg.boundary == BoundaryMode::pressure_normal_velocity ? boundary_pressure(prob, f.midpoint) : 0.0;
        w_bd_[k] = w.bd[static_cast<std::size_t>(k)];
    }
}

// Interior. 2D head rows (psi, w, p) as Laplacian jets, components
// [v, d_x, d_y, lap]; 3D head rows (u1 u2 u3 w1 w2 w3 p) at
// order 1, components [v, d_x, d_y, d_z].
void LossAssembler::interior_chunk(BatchEvaluator& ev, Index begin, Index end, bool grad, Partial& out) const {
    const Index n = end - begin;
    ev.forward(x_int_.middleCols(begin, n), dim_ == 2 ? jet_laplacian : 1);
    const Eigen::MatrixXd& H = ev.head();
    auto at = [&](Index row, Index comp, Index k) { return H(row, comp * n + k); };
    Eigen::MatrixXd A;
    if (grad) A.setZero(H.rows(), H.cols());
    auto adj = [&](Index row, Index comp, Index k) -> double& { return A(row, comp * n + k); };
    const double nu = nu_;

    if (dim_ == 2) {
        for (Index k = 0; k < n; ++k) {
            const Index q = begin + k;
            const double r1 = at(2, 1, k) + nu * at(1, 2, k) - f_int_(0, q);
            const double r2 = at(2, 2, k) - nu * at(1, 1, k) - f_int_(1, q);
            const double r3 = nu * (at(1, 0, k) + at(0, 3, k));
            const double wm = w_mom_[q], wv = w_vort_[q];
            out.b.momentum += wm * (r1 * r1 + r2 * r2);
            out.b.vorticity += wv * r3 * r3;
            if (!grad) continue;
            const double a1 = 2 * wm * r1, a2 = 2 * wm * r2, a3 = 2 * wv * r3 * nu;
            adj(2, 1, k) += a1;
            adj(1, 2, k) += nu * a1;
            adj(2, 2, k) += a2;
            adj(1, 1, k) -= nu * a2;
            adj(1, 0, k) += a3;
            adj(0, 3, k) += a3;
        }
    } else {
        // d(row i)/d x_j is component 1 + j
        auto dd = [&](Index row, Index j, Index k) { return at(row, 1 + j, k); };
        auto dadj = [&](Index row, Index j, Index k) -> double& { return adj(row, 1 + j, k); };
        // curl component i = d_b v_c - d_c v_b with (i, b, c) cyclic
        static constexpr Index cyc[3][2] = {{1, 2}, {2, 0}, {0, 1}};
        for (Index k = 0; k < n; ++k) {
            const Index q = begin + k;
            const double wm = w_mom_[q], wv = w_vort_[q], wd = w_div_[q];
            double rm[3], rv[3];
            for (Index i = 0; i < 3; ++i) {
                const Index b = cyc[i][0], c = cyc[i][1];
                const double curl_w = dd(3 + c, b, k) - dd(3 + b, c, k);
                const double curl_u = dd(c, b, k) - dd(b, c, k);
                rm[i] = nu * curl_w + dd(6, i, k) - f_int_(i, q);
                rv[i] = nu * (at(3 + i, 0, k) - curl_u);
            }
            const double div = dd(0, 0, k) + dd(1, 1, k) + dd(2, 2, k);
            out.b.momentum += wm * (rm[0] * rm[0] + rm[1] * rm[1] + rm[2] * rm[2]);
            out.b.vorticity += wv * (rv[0] * rv[0] + rv[1] * rv[1] + rv[2] * rv[2]);
            out.b.divergence += wd * div * div;
            if (!grad) continue;
            for (Index i = 0; i < 3; ++i) {
                const Index b = cyc[i][0], c = cyc[i][1];
                const double am = 2 * wm * rm[i], av = 2 * wv * rv[i] * nu;
                dadj(3 + c, b, k) += nu * am;
                dadj(3 + b, c, k) -= nu * am;
                dadj(6, i, k) += am;
                adj(3 + i, 0, k) += av;
                dadj(c, b, k) -= av;
                dadj(b, c, k) += av;
            }
            const double ad = 2 * wd * div;
            for (Index i = 0; i < 3; ++i) dadj(i, i, k) += ad;
        }
    }
    if (grad) ev.backward(A, out.grad);
}

// Boundary. 2D at order 1 (u = psi_y, v = -psi_x); 3D at order 0.
void LossAssembler::boundary_chunk(BatchEvaluator& ev, Index begin, Index end, bool grad, Partial& out) const {
    const Index n = end - begin;
    ev.forward(x_bd_.middleCols(begin, n), dim_ == 2 ? 1 : 0);
    const Eigen::MatrixXd& H = ev.head();
    Eigen::MatrixXd A;
    if (grad) A.setZero(H.rows(), H.cols());
    const Index d = static_cast<Index>(dim_);
    const Index prow = dim_ == 2 ? 2 : 6;
    const bool pnv = cfg_.boundary == BoundaryMode::pressure_normal_velocity;

    for (Index k = 0; k < n; ++k) {
        const Index q = begin + k;
        double u[3];
        if (dim_ == 2) {
            u[0] = H(0, 2 * n + k);
            u[1] = -H(0, 1 * n + k);
        } else {
            for (Index i = 0; i < 3; ++i) u[i] = H(i, k);
        }
        const double wb = w_bd_[q];
        double ubar[3] = {0.0, 0.0, 0.0};
        if (!pnv) {
            double s = 0.0;
            for (Index i = 0; i < d; ++i) {
                const double e = u[i] - g_bd_(i, q);
                s += e * e;
                ubar[i] = 2 * wb * e;
            }
            out.b.boundary += wb * s;
        } else {
            double un = 0.0;
            for (Index i = 0; i < d; ++i) un += (u[i] - g_bd_(i, q)) * n_bd_(i, q);
            const double dp = H(prow, k) - p0_bd_[q];
            out.b.boundary += wb * (un * un + dp * dp);
            for (Index i = 0; i < d; ++i) ubar[i] = 2 * wb * un * n_bd_(i, q);
            if (grad) A(prow, k) += 2 * wb * dp;
        }
        if (!grad) continue;
        if (dim_ == 2) {
            A(0, 2 * n + k) += ubar[0];
            A(0, 1 * n + k) -= ubar[1];
        } else {
            for (Index i = 0; i < 3; ++i) A(i, k) += ubar[i];
        }
    }
    if (grad) ev.backward(A, out.grad);
}

LossAssembler::~LossAssembler() = default;
LossAssembler::LossAssembler(LossAssembler&&) noexcept = default;

LossResult LossAssembler::evaluate(const Network& net, bool with_gradient) const {
    if (net.dim() != dim_) throw StructuralError("network and problem dimensions differ");
    const Index np = static_cast<Index>(net.parameter_count());
    const Index chunk = static_cast<Index>(cfg_.chunk);

    // fixed chunk list: interior chunks then boundary chunks
    struct Job {
        bool interior;
        Index begin, end;
    };
    std::vector<Job> jobs;
    for (Index b = 0; b < x_int_.cols(); b += chunk) jobs.push_back({true, b, std::min(b + chunk, x_int_.cols())});
    for (Index b = 0; b < x_bd_.cols(); b += chunk) jobs.push_back({false, b, std::min(b + chunk, x_bd_.cols())});

    const std::size_t nt = std::max<std::size_t>(1, std::min(cfg_.threads, jobs.size()));
    if (evals_.size() < 2 * nt) evals_.resize(2 * nt);
    for (auto& e : evals_) {
        if (!e)
            e = std::make_unique<BatchEvaluator>(net);
        else
            e->bind(net);
    }

    std::vector<Partial> parts(jobs.size());
    auto run = [&](std::size_t j, std::size_t worker) {
        Partial& p = parts[j];
        if (with_gradient) p.grad = Eigen::VectorXd::Zero(np);
        if (jobs[j].interior)
            interior_chunk(*evals_[2 * worker], jobs[j].begin, jobs[j].end, with_gradient, p);
        else
            boundary_chunk(*evals_[2 * worker + 1], jobs[j].begin, jobs[j].end, with_gradient, p);
    };

    if (nt == 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) run(j, 0);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr err;
        std::mutex m;
        for (std::size_t t = 0; t < nt; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t j = t; j < jobs.size(); j += nt) run(j, t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!err) err = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    }

    LossResult res;
    if (with_gradient) res.gradient = Eigen::VectorXd::Zero(np);
    for (const Partial& p : parts) {
        res.breakdown.momentum += p.b.momentum;
        res.breakdown.vorticity += p.b.vorticity;
        res.breakdown.divergence += p.b.divergence;
        res.breakdown.boundary += p.b.boundary;
        if (with_gradient) res.gradient += p.grad;
    }
    finish(res.breakdown);
    return res;
}

LossResult LossAssembler::evaluate(Network& net, const Eigen::VectorXd& theta) const {
    net.set_params(theta);
    return evaluate(static_cast<const Network&>(net), true);
}

LossResult assemble_loss(const Network& net, const StokesProblem& prob, const QuadratureSet& qs,
                         const LossConfig& cfg) {
    if (net.dim() != prob.dim) throw StructuralError("network and problem dimensions differ");
    return LossAssembler(prob, qs, cfg).evaluate(net, true);
}

void write_loss_log(const std::vector<LossRecord>& log, std::ostream& os) {
    os << "iter,momentum,vorticity,divergence,boundary,total\n";
    const auto old = os.precision(17);
    for (const auto& r : log) {
        const LossBreakdown& b = r.loss;
        os << r.iter << ',' << b.momentum << ',' << b.vorticity << ',' << b.divergence << ',' << b.boundary << ','
           << b.total << '\n';
    }
    os.precision(old);
}

}  // namespace vpvnet
