#pragma once

// Discrete least-squares functional of the first-order
// velocity-vorticity-pressure system.
//
// Mesh mode (one-point rules on a grid):
//   sum_D |r_mom|^2 |D| + sum_D h^-2 |r_vort|^2 |D| [+ sum_D h^-2 r_div^2 |D| in 3D]
//   + alpha sum_e h_e^-1 |boundary residual|^2 |e|
// where r_vort already carries the factor nu.
// Meshless mode (point clouds): plain sums, with the vorticity, divergence
// and boundary sums multiplied by alpha2.

#include "vpvnet/fields.hpp"
#include "vpvnet/geometry.hpp"
#include "vpvnet/network.hpp"
#include "vpvnet/problems.hpp"

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace vpvnet {

enum class BoundaryMode { velocity, pressure_normal_velocity };
enum class LossMode { mesh, meshless };
enum class VorticityWeight { h_minus_2, unit };

std::string to_string(BoundaryMode m);
std::string to_string(LossMode m);
std::string to_string(VorticityWeight m);
BoundaryMode parse_boundary_mode(std::string_view s);
LossMode parse_loss_mode(std::string_view s);
VorticityWeight parse_vorticity_weight(std::string_view s);

struct LossConfig {
    BoundaryMode boundary = BoundaryMode::velocity;
    double alpha = 1.0;
    double alpha2 = 2500.0;
    LossMode mode = LossMode::mesh;
    VorticityWeight vorticity_weight = VorticityWeight::h_minus_2;
    /// Use each element's own side length in h^-2 instead of the grid's.
    bool per_element_h = false;
    /// Worker threads for assembly; results do not depend on this.
    std::size_t threads = 1;
    /// Points per evaluation chunk; fixes the reduction order.
    std::size_t chunk = 256;

    void validate() const;
};

/// Weighted contributions; total is their sum.
struct LossBreakdown {
    double momentum = 0.0;
    double vorticity = 0.0;
    double divergence = 0.0;
    double boundary = 0.0;
    double total = 0.0;
};

struct Residuals {
    Vec3 momentum{};
    Vec3 vorticity{};  // 2D: vorticity[0]
    double divergence = 0.0;
};

/// 2D: (p_x + nu w_y - f1, p_y - nu w_x - f2), nu (w + u_y - v_x), 0.
/// 3D: nu curl w + grad p - f, nu (w - curl u), div u.
Residuals interior_residuals(const FieldSample& fs, const Vec3& f, double nu);

using FieldProvider = std::function<FieldSample(const Point&)>;

/// Loss value from any field provider (network or exact solution).
LossBreakdown assemble_loss(const FieldProvider& fields, const StokesProblem& prob, const QuadratureSet& qs,
                            const LossConfig& cfg);

struct LossResult {
    LossBreakdown breakdown;
    Eigen::VectorXd gradient;  // d total / d theta, layout order
};

class BatchEvaluator;

/// Loss of a network with its parameter gradient, for a fixed problem and
/// point set. Sources, boundary data and weights are evaluated once.
/// Evaluation buffers are reused, so one assembler serves one caller at a time.
class LossAssembler {
public:
    LossAssembler(const StokesProblem& prob, const QuadratureSet& qs, const LossConfig& cfg);
    ~LossAssembler();
    LossAssembler(LossAssembler&&) noexcept;

    LossResult evaluate(const Network& net, bool with_gradient = true) const;
    /// Loss and gradient at parameters theta (net is overwritten).
    LossResult evaluate(Network& net, const Eigen::VectorXd& theta) const;

    std::size_t dim() const { return dim_; }
    std::size_t interior_count() const { return static_cast<std::size_t>(x_int_.cols()); }
    std::size_t boundary_count() const { return static_cast<std::size_t>(x_bd_.cols()); }

private:
    struct Partial {
        LossBreakdown b;
        Eigen::VectorXd grad;
    };
    void interior_chunk(BatchEvaluator& ev, Eigen::Index begin, Eigen::Index end, bool grad, Partial& out) const;
    void boundary_chunk(BatchEvaluator& ev, Eigen::Index begin, Eigen::Index end, bool grad, Partial& out) const;

    std::size_t dim_;
    double nu_;
    LossConfig cfg_;
    // interior: points, source, weights for momentum / vorticity / divergence
    Eigen::MatrixXd x_int_, f_int_;
    Eigen::VectorXd w_mom_, w_vort_, w_div_;
    // boundary: points, data, normals, pressure data, weights
    Eigen::MatrixXd x_bd_, g_bd_, n_bd_;
    Eigen::VectorXd p0_bd_, w_bd_;
    // per worker: interior and boundary evaluators
    mutable std::vector<std::unique_ptr<BatchEvaluator>> evals_;
};

/// One-shot convenience wrapper around LossAssembler.
LossResult assemble_loss(const Network& net, const StokesProblem& prob, const QuadratureSet& qs,
                         const LossConfig& cfg);

struct LossRecord {
    std::size_t iter = 0;
    LossBreakdown loss;
};

/// Columns: iter,momentum,vorticity,divergence,boundary,total.
void write_loss_log(const std::vector<LossRecord>& log, std::ostream& os);

}  // namespace vpvnet
