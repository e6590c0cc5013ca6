// vpvnet command line: run configs, verify exact solutions, export and
// evaluate checkpoints.

#include "vpvnet/errors.hpp"
#include "vpvnet/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace vpvnet;
namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config, const std::string& output, bool quiet) {
    const ExperimentConfig cfg = load_config(config);
    validate(cfg);
    const fs::path root = output.empty() ? output_root() : fs::path(output);
    const RunResult r = run_experiment(cfg, root, quiet ? nullptr : &std::cerr);
    std::cout << to_json(r.median);
    std::cerr << "wrote " << r.output.string() << "\n";
    return 0;
}

int cmd_verify(const std::string& name, std::optional<double> nu, std::size_t points) {
    const StokesProblem p = problem_by_name(name, nu);
    if (!p.exact) {
        std::cout << p.name << ": no exact solution to verify\n";
        return 0;
    }
    VerifyOptions opt;
    opt.n_points = points;
    const VerifyReport r = verify_manufactured(p, opt);
    std::cout << p.name << " nu=" << p.viscosity << ": " << (r.passed ? "ok" : "FAILED") << ", " << r.points
              << " points, worst " << r.worst_term << " residual " << r.worst_value << " at (" << r.worst_point[0]
              << ", " << r.worst_point[1];
    if (p.dim == 3) std::cout << ", " << r.worst_point[2];
    std::cout << ")\n";
    return r.passed ? 0 : 1;
}

int cmd_export(const std::string& path, std::size_t n, const std::string& format, const std::string& out) {
    if (format != "csv" && format != "vtk") throw ConfigError("export format must be csv or vtk");
    const Checkpoint ck = load_checkpoint(path);
    const Network net = network_from_checkpoint(ck);
    const StokesProblem p = problem_by_name(ck.problem, ck.problem == "pressure_robust"
                                                            ? std::optional<double>(ck.viscosity)
                                                            : std::nullopt);
    const ExportGrid g = export_grid(p, n);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::binary);
        if (!file) throw IoError("cannot write " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    if (format == "csv")
        write_fields_csv(net, g, os);
    else
        write_fields_vtk(net, g, os);
    if (!os) throw IoError("failed writing fields");
    return 0;
}

int cmd_errors(const std::string& path, const std::string& name, std::optional<double> nu, std::size_t eval_n,
               const std::string& norm) {
    const Checkpoint ck = load_checkpoint(path);
    const Network net = network_from_checkpoint(ck);
    const StokesProblem p = problem_by_name(name, nu);
    if (p.dim != net.dim()) throw ConfigError("checkpoint is " + std::to_string(net.dim()) + "D but " + p.name + " is " +
                                              std::to_string(p.dim) + "D");
    LossBreakdown loss;
    // the training quadrature comes from the stored config when there is one
    try {
        ExperimentConfig cfg = parse_config(ck.config);
        cfg.problem = name;
        cfg.viscosity = nu;
        validate(cfg);
        loss = LossAssembler(p, build_quadrature(cfg, p), cfg.loss).evaluate(net, false).breakdown;
    } catch (const ConfigError&) {
        loss = LossAssembler(p, uniform_grid(domain_box(p.domain), 20), {}).evaluate(net, false).breakdown;
    }
    ErrorReport r = make_report(net, p, evaluation_grid(p, eval_n), parse_error_norm(norm), loss);
    r.seed = ck.seed;
    std::cout << to_json(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"velocity-pressure-vorticity network Stokes solver"};
    app.require_subcommand(1);

    std::string config, output, ckpt, problem, format, out, norm = "relative";
    std::optional<double> nu;
    std::size_t points = 100, n = 100, eval_n = 0;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "train every replicate of a config");
    run->add_option("config", config, "experiment config file")->required();
    run->add_option("-o,--output", output, "output root (default $VPVNET_OUTPUT_ROOT or ./runs)");
    run->add_flag("-q,--quiet", quiet, "no per-replicate progress");

    auto* verify = app.add_subcommand("verify", "check an exact solution against its PDE");
    verify->add_option("problem", problem, "problem name")->required();
    verify->add_option("--nu", nu, "viscosity (pressure_robust only)");
    verify->add_option("--points", points, "sample points");

    auto* exp = app.add_subcommand("export", "sample a checkpoint on an n^d lattice");
    exp->add_option("checkpoint", ckpt)->required();
    exp->add_option("n", n, "cells per axis")->required();
    exp->add_option("format", format, "csv or vtk")->required()->check(CLI::IsMember({"csv", "vtk"}));
    exp->add_option("-o,--output", out, "output file (default stdout)");

    auto* errs = app.add_subcommand("errors", "L2 errors of a checkpoint against an exact solution");
    errs->add_option("checkpoint", ckpt)->required();
    errs->add_option("problem", problem)->required();
    errs->add_option("--nu", nu, "viscosity (pressure_robust only)");
    errs->add_option("--eval-n", eval_n, "evaluation grid cells per axis");
    errs->add_option("--norm", norm, "relative or absolute");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(config, output, quiet);
        if (*verify) return cmd_verify(problem, nu, points);
        if (*exp) return cmd_export(ckpt, n, format, out);
        if (*errs) return cmd_errors(ckpt, problem, nu, eval_n, norm);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingAborted& e) {
        std::cerr << "training aborted after " << e.log().size() << " evaluations: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
