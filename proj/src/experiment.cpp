#include "vpvnet/experiment.hpp"

#include "vpvnet/batch.hpp"
#include "vpvnet/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

namespace vpvnet {

namespace fs = std::filesystem;
using Eigen::Index;
using json = nlohmann::ordered_json;

std::string to_string(GridKind g) {
    switch (g) {
        case GridKind::uniform: return "uniform";
        case GridKind::refined: return "refined";
        case GridKind::lshape: return "lshape";
        case GridKind::meshless: return "meshless";
    }
    return "uniform";
}

GridKind parse_grid_kind(std::string_view s) {
    if (s == "uniform") return GridKind::uniform;
    if (s == "refined") return GridKind::refined;
    if (s == "lshape") return GridKind::lshape;
    if (s == "meshless") return GridKind::meshless;
    throw ConfigError("unknown grid '" + std::string(s) + "' (uniform | refined | lshape | meshless)");
}

std::string to_string(ErrorNorm n) { return n == ErrorNorm::relative ? "relative" : "absolute"; }

ErrorNorm parse_error_norm(std::string_view s) {
    if (s == "relative") return ErrorNorm::relative;
    if (s == "absolute") return ErrorNorm::absolute;
    throw ConfigError("unknown error norm '" + std::string(s) + "' (relative | absolute)");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return to_toml(*this) == to_toml(o); }

// ---------------------------------------------------------------- config file

namespace {

using Array = std::vector<double>;
using Value = std::variant<std::string, double, bool, Array>;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& s, std::size_t line) {
    std::string t;
    for (char c : s)
        if (c != '_') t += c;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError("line " + std::to_string(line) + ": cannot read value '" + s + "'");
    return v;
}

Value parse_value(const std::string& s, std::size_t line) {
    if (s.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') throw ConfigError("line " + std::to_string(line) + ": unterminated string");
        return s.substr(1, s.size() - 2);
    }
    if (s == "true") return true;
    if (s == "false") return false;
    if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated array");
        Array a;
        std::stringstream ss(s.substr(1, s.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) a.push_back(parse_number(item, line));
        }
        return a;
    }
    return parse_number(s, line);
}

// strip a # comment that is not inside a string
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

struct Table {
    std::map<std::string, std::pair<Value, std::size_t>> values;  // key -> (value, line)
    std::map<std::string, bool> used;

    bool has(const std::string& k) const { return values.count(k) > 0; }

    const Value& raw(const std::string& k) {
        used[k] = true;
        return values.at(k).first;
    }
    std::string where(const std::string& k) const { return "'" + k + "' (line " + std::to_string(values.at(k).second) + ")"; }

    std::string str(const std::string& k) {
        const Value& v = raw(k);
        if (!std::holds_alternative<std::string>(v)) throw ConfigError(where(k) + " must be a string");
        return std::get<std::string>(v);
    }
    double num(const std::string& k) {
        const Value& v = raw(k);
        if (!std::holds_alternative<double>(v)) throw ConfigError(where(k) + " must be a number");
        return std::get<double>(v);
    }
    std::uint64_t count(const std::string& k) {
        const double v = num(k);
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) throw ConfigError(where(k) + " must be a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }
    bool flag(const std::string& k) {
        const Value& v = raw(k);
        if (!std::holds_alternative<bool>(v)) throw ConfigError(where(k) + " must be true or false");
        return std::get<bool>(v);
    }
    Array arr(const std::string& k) {
        const Value& v = raw(k);
        if (!std::holds_alternative<Array>(v)) throw ConfigError(where(k) + " must be an array");
        return std::get<Array>(v);
    }
};

Table parse_table(std::string_view text) {
    Table t;
    std::string section;
    std::stringstream ss{std::string(text)};
    std::string line;
    std::size_t no = 0;
    while (std::getline(ss, line)) {
        ++no;
        const std::string s = trim(strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("line " + std::to_string(no) + ": malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
        const std::string key = trim(s.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (t.values.count(full)) throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + full + "'");
        t.values[full] = {parse_value(trim(s.substr(eq + 1)), no), no};
    }
    return t;
}

std::string num_str(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    std::string s = os.str();
    return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    Table t = parse_table(text);
    ExperimentConfig c;
    auto opt = [&](const std::string& k, auto&& set) {
        if (t.has(k)) set(k);
    };
    opt("name", [&](auto& k) { c.name = t.str(k); });
    opt("replicates", [&](auto& k) { c.replicates = t.count(k); });
    opt("seeds", [&](auto& k) {
        for (double v : t.arr(k)) {
            if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError("seeds must be non-negative integers");
            c.seeds.push_back(static_cast<std::uint64_t>(v));
        }
    });
    opt("eval_n", [&](auto& k) { c.eval_n = t.count(k); });
    opt("error_norm", [&](auto& k) { c.error_norm = parse_error_norm(t.str(k)); });
    opt("output_dir", [&](auto& k) { c.output_dir = t.str(k); });

    opt("problem.name", [&](auto& k) { c.problem = t.str(k); });
    opt("problem.viscosity", [&](auto& k) { c.viscosity = t.num(k); });

    opt("network.hidden_layers", [&](auto& k) { c.hidden_layers = t.count(k); });
    opt("network.width", [&](auto& k) { c.width = t.count(k); });
    opt("network.activation", [&](auto& k) { c.activation = parse_activation(t.str(k)); });

    opt("geometry.grid", [&](auto& k) { c.grid = parse_grid_kind(t.str(k)); });
    opt("geometry.n", [&](auto& k) { c.n = t.count(k); });
    opt("geometry.refine_ratio", [&](auto& k) { c.refine_ratio = t.num(k); });
    opt("geometry.interior_points", [&](auto& k) { c.interior_points = t.count(k); });
    opt("geometry.boundary_points", [&](auto& k) { c.boundary_points = t.count(k); });
    opt("geometry.sample_seed", [&](auto& k) { c.sample_seed = t.count(k); });

    opt("loss.mode", [&](auto& k) { c.loss.mode = parse_loss_mode(t.str(k)); });
    opt("loss.boundary", [&](auto& k) { c.loss.boundary = parse_boundary_mode(t.str(k)); });
    opt("loss.alpha", [&](auto& k) { c.loss.alpha = t.num(k); });
    opt("loss.alpha2", [&](auto& k) { c.loss.alpha2 = t.num(k); });
    opt("loss.vorticity_weight", [&](auto& k) { c.loss.vorticity_weight = parse_vorticity_weight(t.str(k)); });
    opt("loss.per_element_h", [&](auto& k) { c.loss.per_element_h = t.flag(k); });
    opt("loss.threads", [&](auto& k) { c.loss.threads = t.count(k); });
    opt("loss.chunk", [&](auto& k) { c.loss.chunk = t.count(k); });

    opt("schedule.adam_iters", [&](auto& k) { c.schedule.adam_iters = t.count(k); });
    opt("schedule.lbfgs_max", [&](auto& k) { c.schedule.lbfgs_max = t.count(k); });
    opt("schedule.lr", [&](auto& k) { c.schedule.lr = t.num(k); });
    opt("schedule.decay", [&](auto& k) { c.schedule.decay = t.num(k); });
    opt("schedule.decay_steps", [&](auto& k) { c.schedule.decay_steps = t.count(k); });
    opt("schedule.seed", [&](auto& k) { c.schedule.seed = t.count(k); });
    opt("schedule.lbfgs_history", [&](auto& k) { c.schedule.lbfgs_history = t.count(k); });
    opt("schedule.gtol", [&](auto& k) { c.schedule.gtol = t.num(k); });
    opt("schedule.ftol", [&](auto& k) { c.schedule.ftol = t.num(k); });

    opt("export.csv", [&](auto& k) { c.export_csv = t.flag(k); });
    opt("export.vtk", [&](auto& k) { c.export_vtk = t.flag(k); });
    opt("export.n", [&](auto& k) { c.export_n = t.count(k); });

    for (const auto& [k, v] : t.values)
        if (!t.used.count(k)) throw ConfigError("unknown key " + t.where(k));
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_toml(const ExperimentConfig& c) {
    std::ostringstream o;
    auto q = [](const std::string& s) { return "\"" + s + "\""; };
    o << "name = " << q(c.name) << "\n";
    o << "replicates = " << c.replicates << "\n";
    if (!c.seeds.empty()) {
        o << "seeds = [";
        for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : "") << c.seeds[i];
        o << "]\n";
    }
    o << "eval_n = " << c.eval_n << "\n";
    o << "error_norm = " << q(to_string(c.error_norm)) << "\n";
    if (!c.output_dir.empty()) o << "output_dir = " << q(c.output_dir) << "\n";
    o << "\n[problem]\nname = " << q(c.problem) << "\n";
    if (c.viscosity) o << "viscosity = " << num_str(*c.viscosity) << "\n";
    o << "\n[network]\nhidden_layers = " << c.hidden_layers << "\nwidth = " << c.width
      << "\nactivation = " << q(to_string(c.activation)) << "\n";
    o << "\n[geometry]\ngrid = " << q(to_string(c.grid)) << "\nn = " << c.n
      << "\nrefine_ratio = " << num_str(c.refine_ratio) << "\ninterior_points = " << c.interior_points
      << "\nboundary_points = " << c.boundary_points << "\nsample_seed = " << c.sample_seed << "\n";
    o << "\n[loss]\nmode = " << q(to_string(c.loss.mode)) << "\nboundary = " << q(to_string(c.loss.boundary))
      << "\nalpha = " << num_str(c.loss.alpha) << "\nalpha2 = " << num_str(c.loss.alpha2)
      << "\nvorticity_weight = " << q(to_string(c.loss.vorticity_weight))
      << "\nper_element_h = " << (c.loss.per_element_h ? "true" : "false") << "\nthreads = " << c.loss.threads
      << "\nchunk = " << c.loss.chunk << "\n";
    const TrainSchedule& s = c.schedule;
    o << "\n[schedule]\nadam_iters = " << s.adam_iters << "\nlbfgs_max = " << s.lbfgs_max
      << "\nlr = " << num_str(s.lr) << "\n";
    if (s.decay) o << "decay = " << num_str(*s.decay) << "\n";
    o << "decay_steps = " << s.decay_steps << "\nseed = " << s.seed << "\nlbfgs_history = " << s.lbfgs_history
      << "\ngtol = " << num_str(s.gtol) << "\nftol = " << num_str(s.ftol) << "\n";
    o << "\n[export]\ncsv = " << (c.export_csv ? "true" : "false") << "\nvtk = " << (c.export_vtk ? "true" : "false")
      << "\nn = " << c.export_n << "\n";
    return o.str();
}

StokesProblem build_problem(const ExperimentConfig& cfg) { return problem_by_name(cfg.problem, cfg.viscosity); }

Architecture build_architecture(const ExperimentConfig& cfg, std::size_t dim) {
    Architecture a = Architecture::standard(dim, cfg.hidden_layers, cfg.width, cfg.activation);
    try {
        a.validate();
    } catch (const StructuralError& e) {
        throw ConfigError(std::string("[network] ") + e.what());
    }
    return a;
}

void validate(const ExperimentConfig& cfg) {
    const StokesProblem p = build_problem(cfg);
    build_architecture(cfg, p.dim);
    cfg.loss.validate();
    if (cfg.replicates == 0) throw ConfigError("replicates must be at least 1");
    if (!cfg.seeds.empty() && cfg.seeds.size() != cfg.replicates)
        throw ConfigError("seeds must list one seed per replicate");
    const bool meshless_domain = p.domain == DomainKind::butterfly || p.domain == DomainKind::heart;
    switch (cfg.grid) {
        case GridKind::uniform:
        case GridKind::refined:
            if (p.domain != DomainKind::unit_square && p.domain != DomainKind::unit_cube)
                throw ConfigError("grid '" + to_string(cfg.grid) + "' needs a box domain; " + p.name + " lives on " +
                                  to_string(p.domain));
            break;
        case GridKind::lshape:
            if (p.domain != DomainKind::lshape) throw ConfigError("grid 'lshape' needs an L-shape problem");
            break;
        case GridKind::meshless:
            if (!meshless_domain) throw ConfigError("grid 'meshless' needs the butterfly or heart domain");
            if (cfg.interior_points == 0 || cfg.boundary_points == 0)
                throw ConfigError("meshless sampling needs interior and boundary points");
            break;
    }
    if (meshless_domain && cfg.grid != GridKind::meshless)
        throw ConfigError(p.name + " is sampled as a point cloud; use grid = \"meshless\"");
    if ((cfg.grid == GridKind::meshless) != (cfg.loss.mode == LossMode::meshless))
        throw ConfigError("loss mode 'meshless' goes with grid 'meshless' and only with it");
    if (cfg.grid != GridKind::meshless && cfg.n == 0) throw ConfigError("geometry.n must be positive");
    if (cfg.grid == GridKind::refined && !(cfg.refine_ratio > 0.0 && cfg.refine_ratio < 1.0))
        throw ConfigError("refine_ratio must lie in (0, 1)");
    if (!(cfg.schedule.lr > 0.0)) throw ConfigError("schedule.lr must be positive");
    if (cfg.schedule.decay && !(*cfg.schedule.decay > 0.0 && *cfg.schedule.decay <= 1.0))
        throw ConfigError("schedule.decay must lie in (0, 1]");
    if (cfg.schedule.lbfgs_history == 0) throw ConfigError("schedule.lbfgs_history must be positive");
}

QuadratureSet build_quadrature(const ExperimentConfig& cfg, const StokesProblem& prob) {
    const Box box = domain_box(prob.domain);
    switch (cfg.grid) {
        case GridKind::uniform: return uniform_grid(box, cfg.n);
        case GridKind::refined: {
            std::vector<Point> corners;
            for (unsigned m = 0; m < (1u << prob.dim); ++m) {
                Point c{};
                for (std::size_t a = 0; a < prob.dim; ++a) c[a] = (m >> a) & 1u ? box.hi[a] : box.lo[a];
                corners.push_back(c);
            }
            return refined_grid(box, cfg.n, corners, cfg.refine_ratio);
        }
        case GridKind::lshape: return lshape_grid(cfg.n);
        case GridKind::meshless: {
            const ImplicitDomain dom = prob.domain == DomainKind::butterfly ? butterfly_domain() : heart_domain();
            return implicit_sample(dom, cfg.interior_points, cfg.boundary_points, cfg.sample_seed);
        }
    }
    throw ConfigError("unknown grid");
}

std::vector<std::uint64_t> replicate_seeds(const ExperimentConfig& cfg) {
    if (!cfg.seeds.empty()) return cfg.seeds;
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < cfg.replicates; ++i) s.push_back(cfg.schedule.seed + i);
    return s;
}

// ---------------------------------------------------------------- evaluation

EvalGrid evaluation_grid(const StokesProblem& prob, std::size_t n) {
    if (n == 0) n = prob.dim == 3 ? 40 : 100;
    QuadratureSet qs;
    switch (prob.domain) {
        case DomainKind::unit_square:
        case DomainKind::unit_cube: qs = uniform_grid(domain_box(prob.domain), n); break;
        case DomainKind::lshape: qs = lshape_grid(std::max<std::size_t>(1, n / 2)); break;
        case DomainKind::butterfly:
        case DomainKind::heart: {
            const DomainKind d = prob.domain;
            qs = masked_grid(domain_box(d), n, [d](const Point& x) { return domain_contains(d, x); });
            break;
        }
    }
    EvalGrid g;
    g.dim = prob.dim;
    for (const auto& e : qs.elements) {
        g.points.push_back(e.center);
        g.weights.push_back(e.measure);
    }
    return g;
}

std::vector<FieldSample> network_fields(const Network& net, const std::vector<Point>& points) {
    const std::size_t d = net.dim();
    const int order = d == 2 ? 2 : 1;
    const std::size_t chunk = 512;
    std::vector<FieldSample> out;
    out.reserve(points.size());
    BatchEvaluator ev(net);
    for (std::size_t b = 0; b < points.size(); b += chunk) {
        const std::size_t e = std::min(points.size(), b + chunk);
        const Index n = static_cast<Index>(e - b);
        Eigen::MatrixXd X(static_cast<Index>(d), n);
        for (Index k = 0; k < n; ++k)
            for (std::size_t a = 0; a < d; ++a) X(static_cast<Index>(a), k) = points[b + static_cast<std::size_t>(k)][a];
        ev.forward(X, order);
        const Eigen::MatrixXd& H = ev.head();
        auto at = [&](Index row, Index comp, Index k) { return H(row, comp * n + k); };
        for (Index k = 0; k < n; ++k) {
            FieldSample fs;
            fs.dim = d;
            if (d == 2) {
                // psi components: v, x, y, xx, xy, yy
                fs.vel = {at(0, 2, k), -at(0, 1, k), 0.0};
                fs.grad_vel[0] = {at(0, 4, k), at(0, 5, k), 0.0};
                fs.grad_vel[1] = {-at(0, 3, k), -at(0, 4, k), 0.0};
                fs.vort[0] = at(1, 0, k);
                fs.grad_vort[0] = {at(1, 1, k), at(1, 2, k), 0.0};
                fs.p = at(2, 0, k);
                fs.grad_p = {at(2, 1, k), at(2, 2, k), 0.0};
            } else {
                for (Index i = 0; i < 3; ++i) {
                    const auto ii = static_cast<std::size_t>(i);
                    fs.vel[ii] = at(i, 0, k);
                    fs.vort[ii] = at(3 + i, 0, k);
                    for (Index j = 0; j < 3; ++j) {
                        fs.grad_vel[ii][static_cast<std::size_t>(j)] = at(i, 1 + j, k);
                        fs.grad_vort[ii][static_cast<std::size_t>(j)] = at(3 + i, 1 + j, k);
                    }
                    fs.grad_p[ii] = at(6, 1 + i, k);
                }
                fs.p = at(6, 0, k);
            }
            out.push_back(fs);
        }
    }
    return out;
}

DivergenceStats divergence_report(const std::vector<FieldSample>& samples, const std::vector<double>& weights) {
    if (samples.size() != weights.size()) throw StructuralError("divergence_report: sample and weight counts differ");
    DivergenceStats s;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i].divergence();
        s.max = std::max(s.max, std::abs(d));
        num += d * d * weights[i];
        den += weights[i];
    }
    s.l2 = den > 0.0 ? std::sqrt(num / den) : 0.0;
    return s;
}

DivergenceStats divergence_report(const Network& net, const EvalGrid& grid) {
    return divergence_report(network_fields(net, grid.points), grid.weights);
}

double ErrorReport::error(std::string_view field) const {
    for (const auto& e : errors)
        if (e.field == field) return e.value;
    throw StructuralError("no error for field '" + std::string(field) + "'");
}

std::vector<FieldError> l2_error(const std::vector<FieldSample>& approx, const ExactSolution& exact,
                                 const EvalGrid& grid, bool mean_shift_pressure, ErrorNorm norm) {
    if (approx.size() != grid.points.size()) throw StructuralError("l2_error: sample and point counts differ");
    const std::size_t d = grid.dim;
    const std::size_t n = approx.size();
    std::vector<std::vector<double>> a(d + 1, std::vector<double>(n)), e(d + 1, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const ExactState s = exact.values(grid.points[i]);
        for (std::size_t c = 0; c < d; ++c) {
            a[c][i] = approx[i].vel[c];
            e[c][i] = s.u[c];
        }
        a[d][i] = approx[i].p;
        e[d][i] = s.p;
    }
    if (mean_shift_pressure) {
        zero_mean(a[d], grid.weights);
        zero_mean(e[d], grid.weights);
    }
    static const char* names2[] = {"u", "v", "p"};
    static const char* names3[] = {"u", "v", "u3", "p"};
    std::vector<FieldError> out;
    for (std::size_t c = 0; c <= d; ++c) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = a[c][i] - e[c][i];
            num += diff * diff * grid.weights[i];
            den += e[c][i] * e[c][i] * grid.weights[i];
        }
        FieldError fe;
        fe.field = d == 2 ? names2[c] : names3[c];
        if (norm == ErrorNorm::absolute || den == 0.0) {
            fe.value = std::sqrt(num);
            fe.absolute = true;
        } else {
            fe.value = std::sqrt(num / den);
        }
        out.push_back(fe);
    }
    return out;
}

ErrorReport make_report(const Network& net, const StokesProblem& prob, const EvalGrid& grid, ErrorNorm norm,
                        const LossBreakdown& loss) {
    ErrorReport r;
    r.problem = prob.name;
    r.network = net.arch().descriptor();
    r.dim = prob.dim;
    r.norm = norm;
    const std::vector<FieldSample> samples = network_fields(net, grid.points);
    if (prob.exact) r.errors = l2_error(samples, *prob.exact, grid, true, norm);
    r.divergence = divergence_report(samples, grid.weights);
    r.loss = loss;
    return r;
}

ErrorReport median_report(const std::vector<ErrorReport>& reps) {
    if (reps.empty()) throw StructuralError("median_report: no replicates");
    ErrorReport m = reps.front();
    m.seed.reset();
    m.median = true;
    m.replicates = reps.size();
    auto med = [&](auto get) {
        std::vector<double> v;
        for (const auto& r : reps) v.push_back(get(r));
        return median(v);
    };
    for (std::size_t i = 0; i < m.errors.size(); ++i) {
        m.errors[i].value = med([&](const ErrorReport& r) { return r.errors.at(i).value; });
        bool abs = false;
        for (const auto& r : reps) abs = abs || r.errors.at(i).absolute;
        m.errors[i].absolute = abs;
    }
    m.divergence.max = med([](const ErrorReport& r) { return r.divergence.max; });
    m.divergence.l2 = med([](const ErrorReport& r) { return r.divergence.l2; });
    m.loss.momentum = med([](const ErrorReport& r) { return r.loss.momentum; });
    m.loss.vorticity = med([](const ErrorReport& r) { return r.loss.vorticity; });
    m.loss.divergence = med([](const ErrorReport& r) { return r.loss.divergence; });
    m.loss.boundary = med([](const ErrorReport& r) { return r.loss.boundary; });
    m.loss.total = med([](const ErrorReport& r) { return r.loss.total; });
    return m;
}

std::string to_json(const ErrorReport& r) {
    json j;
    j["problem"] = r.problem;
    j["network"] = r.network;
    j["dim"] = r.dim;
    j["norm"] = to_string(r.norm);
    json errs = json::object();
    for (const auto& e : r.errors) errs["e_" + e.field] = {{"value", e.value}, {"absolute", e.absolute}};
    j["errors"] = errs;
    j["divergence"] = {{"max", r.divergence.max}, {"l2", r.divergence.l2}};
    j["loss"] = {{"momentum", r.loss.momentum},
                 {"vorticity", r.loss.vorticity},
                 {"divergence", r.loss.divergence},
                 {"boundary", r.loss.boundary},
                 {"total", r.loss.total}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    j["median"] = r.median;
    j["replicates"] = r.replicates;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- exports

ExportGrid export_grid(const Box& box, std::size_t n) {
    if (n == 0) throw StructuralError("export grid needs n >= 1");
    ExportGrid g;
    g.dim = box.dim;
    for (std::size_t a = 0; a < 3; ++a) g.dims[a] = a < box.dim ? n : 1;
    for (std::size_t k = 0; k < g.dims[2]; ++k)
        for (std::size_t j = 0; j < g.dims[1]; ++j)
            for (std::size_t i = 0; i < g.dims[0]; ++i) {
                const std::size_t idx[3] = {i, j, k};
                Point x{};
                for (std::size_t a = 0; a < box.dim; ++a)
                    x[a] = box.lo[a] + (box.hi[a] - box.lo[a]) * (static_cast<double>(idx[a]) + 0.5) / static_cast<double>(n);
                g.points.push_back(x);
                g.inside.push_back(true);
            }
    return g;
}

ExportGrid export_grid(const StokesProblem& prob, std::size_t n) {
    ExportGrid g = export_grid(domain_box(prob.domain), n);
    for (std::size_t i = 0; i < g.points.size(); ++i) g.inside[i] = domain_contains(prob.domain, g.points[i]);
    return g;
}

void write_fields_csv(const Network& net, const ExportGrid& grid, std::ostream& os) {
    const std::vector<FieldSample> f = network_fields(net, grid.points);
    const bool three = grid.dim == 3;
    os << (three ? "x,y,z,u,v,u3,p,w1,w2,w3,div\n" : "x,y,u,v,p,w,div\n");
    const auto old = os.precision(17);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!grid.inside[i]) continue;
        const Point& x = grid.points[i];
        for (std::size_t a = 0; a < grid.dim; ++a) os << x[a] << ',';
        for (std::size_t a = 0; a < grid.dim; ++a) os << f[i].vel[a] << ',';
        os << f[i].p << ',';
        for (std::size_t a = 0; a < (three ? 3u : 1u); ++a) os << f[i].vort[a] << ',';
        os << f[i].divergence() << '\n';
    }
    os.precision(old);
}

void write_fields_vtk(const Network& net, const ExportGrid& grid, std::ostream& os) {
    const std::vector<FieldSample> f = network_fields(net, grid.points);
    const std::size_t n = f.size();
    const bool three = grid.dim == 3;
    const auto old = os.precision(17);
    os << "# vtk DataFile Version 3.0\n"
       << "vpvnet fields " << net.arch().descriptor() << "\n"
       << "ASCII\nDATASET STRUCTURED_GRID\n"
       << "DIMENSIONS " << grid.dims[0] << ' ' << grid.dims[1] << ' ' << grid.dims[2] << "\n"
       << "POINTS " << n << " double\n";
    for (const Point& x : grid.points) os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
    os << "POINT_DATA " << n << "\nVECTORS velocity double\n";
    for (const auto& s : f) os << s.vel[0] << ' ' << s.vel[1] << ' ' << s.vel[2] << '\n';
    os << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
    for (const auto& s : f) os << s.p << '\n';
    if (three) {
        os << "VECTORS vorticity double\n";
        for (const auto& s : f) os << s.vort[0] << ' ' << s.vort[1] << ' ' << s.vort[2] << '\n';
    } else {
        os << "SCALARS vorticity double 1\nLOOKUP_TABLE default\n";
        for (const auto& s : f) os << s.vort[0] << '\n';
    }
    os << "SCALARS divergence double 1\nLOOKUP_TABLE default\n";
    for (const auto& s : f) os << s.divergence() << '\n';
    os << "SCALARS inside int 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < n; ++i) os << (grid.inside[i] ? 1 : 0) << '\n';
    os.precision(old);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char magic[4] = {'V', 'P', 'V', 'N'};
constexpr std::uint32_t checkpoint_version = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

std::uint64_t get_u(std::istream& is, int bytes, const fs::path& path) {
    unsigned char b[8] = {};
    if (!is.read(reinterpret_cast<char*>(b), bytes)) throw IoError("truncated checkpoint " + path.string());
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    json h;
    h["format"] = "vpvnet-checkpoint";
    h["architecture"] = {{"dim", ck.arch.dim},
                         {"hidden_layers", ck.arch.hidden_layers},
                         {"width", ck.arch.width},
                         {"activation", to_string(ck.arch.activation)},
                         {"head", to_string(ck.arch.head)}};
    h["problem"] = ck.problem;
    h["viscosity"] = ck.viscosity;
    h["seed"] = ck.seed;
    h["config"] = ck.config;
    const std::string header = h.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(magic, 4);
    put_u32(os, checkpoint_version);
    put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_u64(os, static_cast<std::uint64_t>(ck.params.size()));
    for (Index i = 0; i < ck.params.size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(ck.params[i]));
    if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint " + path.string());
    char m[4];
    if (!is.read(m, 4) || !std::equal(m, m + 4, magic)) throw IoError(path.string() + " is not a vpvnet checkpoint");
    const auto version = get_u(is, 4, path);
    if (version != checkpoint_version) throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto hlen = get_u(is, 8, path);
    if (hlen > (1u << 24)) throw IoError("corrupt checkpoint header length");
    std::string header(hlen, '\0');
    if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw IoError("truncated checkpoint header");
    Checkpoint ck;
    try {
        const json h = json::parse(header);
        const json& a = h.at("architecture");
        ck.arch.dim = a.at("dim").get<std::size_t>();
        ck.arch.hidden_layers = a.at("hidden_layers").get<std::size_t>();
        ck.arch.width = a.at("width").get<std::size_t>();
        ck.arch.activation = parse_activation(a.at("activation").get<std::string>());
        ck.arch.head = parse_head_mode(a.at("head").get<std::string>());
        ck.problem = h.at("problem").get<std::string>();
        ck.viscosity = h.at("viscosity").get<double>();
        ck.seed = h.at("seed").get<std::uint64_t>();
        ck.config = h.at("config").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint header: " + std::string(e.what()));
    }
    const auto n = get_u(is, 8, path);
    if (n > (1u << 28)) throw IoError("corrupt checkpoint parameter count");
    ck.params.resize(static_cast<Index>(n));
    for (Index i = 0; i < ck.params.size(); ++i) ck.params[i] = std::bit_cast<double>(get_u(is, 8, path));
    return ck;
}

Network network_from_checkpoint(const Checkpoint& ck) {
    Network net(ck.arch);
    if (static_cast<std::size_t>(ck.params.size()) != net.parameter_count())
        throw IoError("checkpoint parameter count does not match its architecture");
    net.set_params(ck.params);
    return net;
}

// ---------------------------------------------------------------- runs

fs::path output_root() {
    if (const char* r = std::getenv("VPVNET_OUTPUT_ROOT"); r && *r) return r;
    return "runs";
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    os << s;
    if (!os) throw IoError("failed writing " + p.string());
}

template <class F>
void write_with(const fs::path& p, F&& f) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    f(os);
    if (!os) throw IoError("failed writing " + p.string());
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& root, std::ostream* progress) {
    validate(cfg);
    const StokesProblem prob = build_problem(cfg);
    const QuadratureSet qs = build_quadrature(cfg, prob);
    const Architecture arch = build_architecture(cfg, prob.dim);
    const EvalGrid grid = evaluation_grid(prob, cfg.eval_n);
    const std::size_t export_n = cfg.export_n ? cfg.export_n : (cfg.eval_n ? cfg.eval_n : (prob.dim == 3 ? 40 : 100));

    RunResult res;
    res.output = root / (cfg.output_dir.empty() ? cfg.name : cfg.output_dir);
    std::error_code ec;
    fs::create_directories(res.output, ec);
    if (ec) throw IoError("cannot create " + res.output.string() + ": " + ec.message());
    write_text(res.output / "config.toml", to_toml(cfg));

    const auto seeds = replicate_seeds(cfg);
    std::vector<ErrorReport> reports;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const fs::path dir = res.output / ("replicate_" + std::to_string(i));
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

        ReplicateResult rep;
        rep.seed = seeds[i];
        Network net(arch);
        TrainSchedule sched = cfg.schedule;
        sched.seed = seeds[i];
        sched.initialize = true;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rep.train = train_two_stage(net, prob, qs, cfg.loss, sched);
        } catch (const TrainingAborted& e) {
            write_with(dir / "loss.csv", [&](std::ostream& os) { write_loss_log(e.log(), os); });
            throw;
        }
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.report = make_report(net, prob, grid, cfg.error_norm, rep.train.best);
        rep.report.seed = seeds[i];

        write_text(dir / "report.json", to_json(rep.report));
        json timing = {{"seconds", rep.seconds},
                       {"evaluations", rep.train.evaluations},
                       {"adam_steps", rep.train.adam_steps},
                       {"lbfgs_iterations", rep.train.lbfgs_iterations},
                       {"lbfgs_status", rep.train.lbfgs_status ? to_string(*rep.train.lbfgs_status) : "none"}};
        write_text(dir / "timing.json", timing.dump(2) + "\n");
        write_with(dir / "loss.csv", [&](std::ostream& os) { write_loss_log(rep.train.log, os); });
        Checkpoint ck{arch, prob.name, prob.viscosity, seeds[i], to_toml(cfg), rep.train.best_theta};
        save_checkpoint(dir / "checkpoint.vpvn", ck);
        const ExportGrid eg = export_grid(prob, export_n);
        if (cfg.export_csv) write_with(dir / "fields.csv", [&](std::ostream& os) { write_fields_csv(net, eg, os); });
        if (cfg.export_vtk) write_with(dir / "fields.vtk", [&](std::ostream& os) { write_fields_vtk(net, eg, os); });

        if (progress) {
            *progress << cfg.name << " replicate " << i << " seed " << seeds[i] << ": loss " << rep.train.best.total;
            for (const auto& e : rep.report.errors) *progress << " e_" << e.field << " " << e.value;
            *progress << " max|div| " << rep.report.divergence.max << " (" << rep.seconds << " s)\n";
        }
        reports.push_back(rep.report);
        res.replicates.push_back(std::move(rep));
    }
    res.median = median_report(reports);
    write_text(res.output / "report_median.json", to_json(res.median));
    return res;
}

}  // namespace vpvnet
