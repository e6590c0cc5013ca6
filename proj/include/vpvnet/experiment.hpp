#pragma once

// Config-driven experiments: build problem, point set and network from a
// key-value file, train replicates, report errors and export fields.

#include "vpvnet/fields.hpp"
#include "vpvnet/geometry.hpp"
#include "vpvnet/loss.hpp"
#include "vpvnet/network.hpp"
#include "vpvnet/optim.hpp"
#include "vpvnet/problems.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vpvnet {

enum class GridKind { uniform, refined, lshape, meshless };
std::string to_string(GridKind g);
GridKind parse_grid_kind(std::string_view s);

enum class ErrorNorm { relative, absolute };
std::string to_string(ErrorNorm n);
ErrorNorm parse_error_norm(std::string_view s);

struct ExperimentConfig {
    std::string name = "experiment";
    std::string problem = "smooth2d";
    std::optional<double> viscosity;

    std::size_t hidden_layers = 8;
    std::size_t width = 16;
    Activation activation = Activation::sin;

    GridKind grid = GridKind::uniform;
    std::size_t n = 50;  // cells per unit length side (L-shape: per unit square)
    double refine_ratio = default_refinement_ratio;
    std::size_t interior_points = 2500;
    std::size_t boundary_points = 200;
    std::uint64_t sample_seed = 1;

    LossConfig loss;
    TrainSchedule schedule;

    std::size_t replicates = 3;
    /// Replicate seeds; schedule.seed + i when empty.
    std::vector<std::uint64_t> seeds;

    std::size_t eval_n = 0;  // 0: 100 in 2D, 40 in 3D
    ErrorNorm error_norm = ErrorNorm::relative;

    bool export_csv = true;
    bool export_vtk = true;
    std::size_t export_n = 0;  // 0: eval_n
    std::string output_dir;    // relative to the output root; empty: name

    bool operator==(const ExperimentConfig&) const;
};

/// Parses the TOML subset used by the bundled configs: [section] headers,
/// key = value with strings, numbers, booleans and flat arrays, # comments.
/// Unknown keys and type errors throw ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_toml(const ExperimentConfig& cfg);
/// Resolves every name and range; throws ConfigError.
void validate(const ExperimentConfig& cfg);

StokesProblem build_problem(const ExperimentConfig& cfg);
Architecture build_architecture(const ExperimentConfig& cfg, std::size_t dim);
QuadratureSet build_quadrature(const ExperimentConfig& cfg, const StokesProblem& prob);
std::vector<std::uint64_t> replicate_seeds(const ExperimentConfig& cfg);

/// Weighted evaluation points inside the problem domain.
struct EvalGrid {
    std::size_t dim = 2;
    std::vector<Point> points;
    std::vector<double> weights;
};
/// n x n (x n) cell centres of the bounding box, restricted to the domain.
/// The L-shape uses n/2 cells per unit square, i.e. the same spacing.
EvalGrid evaluation_grid(const StokesProblem& prob, std::size_t n);

/// Network fields at many points through the batched evaluator.
std::vector<FieldSample> network_fields(const Network& net, const std::vector<Point>& points);

struct DivergenceStats {
    double max = 0.0;
    double l2 = 0.0;  // sqrt(sum div^2 w / sum w)
};
DivergenceStats divergence_report(const std::vector<FieldSample>& fs, const std::vector<double>& weights);
DivergenceStats divergence_report(const Network& net, const EvalGrid& grid);

struct FieldError {
    std::string field;  // u, v, u3, p
    double value = 0.0;
    bool absolute = false;  // exact norm was zero, or the absolute norm was asked for
};

struct ErrorReport {
    std::string problem;
    std::string network;  // "8x16"
    std::size_t dim = 2;
    ErrorNorm norm = ErrorNorm::relative;
    std::vector<FieldError> errors;  // empty when no exact solution
    DivergenceStats divergence;
    LossBreakdown loss;
    std::optional<std::uint64_t> seed;
    bool median = false;
    std::size_t replicates = 1;

    double error(std::string_view field) const;
};

/// Discrete L2 errors of sampled fields against the exact solution. The
/// pressure is mean-shifted on both sides when mean_shift_pressure is set.
std::vector<FieldError> l2_error(const std::vector<FieldSample>& approx, const ExactSolution& exact,
                                 const EvalGrid& grid, bool mean_shift_pressure = true,
                                 ErrorNorm norm = ErrorNorm::relative);

/// Errors, divergence and loss of a trained network.
ErrorReport make_report(const Network& net, const StokesProblem& prob, const EvalGrid& grid, ErrorNorm norm,
                        const LossBreakdown& loss);

/// Elementwise median over replicate reports.
ErrorReport median_report(const std::vector<ErrorReport>& reps);

std::string to_json(const ErrorReport& r);

// Exports on an n x n (x n) lattice of cell centres over the bounding box.
struct ExportGrid {
    std::size_t dim = 2;
    std::array<std::size_t, 3> dims{1, 1, 1};
    std::vector<Point> points;  // x fastest
    std::vector<bool> inside;
};
ExportGrid export_grid(const StokesProblem& prob, std::size_t n);
ExportGrid export_grid(const Box& box, std::size_t n);

/// Columns x,y[,z],u,v[,u3],p,w (2D) or w1,w2,w3 (3D),div. Rows outside
/// the domain are skipped.
void write_fields_csv(const Network& net, const ExportGrid& grid, std::ostream& os);
/// Legacy ASCII STRUCTURED_GRID with point data velocity, pressure,
/// vorticity, divergence and inside.
void write_fields_vtk(const Network& net, const ExportGrid& grid, std::ostream& os);

// Checkpoints: "VPVN", u32 version, u64 header length, JSON header,
// u64 parameter count, f64 parameters; little-endian.
struct Checkpoint {
    Architecture arch;
    std::string problem;
    double viscosity = 1.0;
    std::uint64_t seed = 0;
    std::string config;  // the run's config file text
    Eigen::VectorXd params;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Network network_from_checkpoint(const Checkpoint& ck);

struct ReplicateResult {
    std::uint64_t seed = 0;
    ErrorReport report;
    TrainResult train;
    double seconds = 0.0;
};

struct RunResult {
    std::vector<ReplicateResult> replicates;
    ErrorReport median;
    std::filesystem::path output;
};

/// Output root: $VPVNET_OUTPUT_ROOT, else ./runs.
std::filesystem::path output_root();

/// Trains every replicate and writes, under root / output_dir:
/// replicate_<i>/{report.json, timing.json, loss.csv, checkpoint.vpvn,
/// fields.csv, fields.vtk} and report_median.json.
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& root,
                         std::ostream* progress = nullptr);

}  // namespace vpvnet
