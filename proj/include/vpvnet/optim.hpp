#pragma once

// Training: Adam on the flat parameter vector, then limited-memory BFGS.

#include "vpvnet/errors.hpp"
#include "vpvnet/loss.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vpvnet {

/// Non-finite gradient entry met by an optimizer.
class NonFiniteGradient : public NumericDomainError {
public:
    NonFiniteGradient(std::size_t iteration, std::size_t index);
    std::size_t iteration() const { return iteration_; }
    std::size_t index() const { return index_; }

private:
    std::size_t iteration_, index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// lr * decay^floor((t - 1) / decay_steps) when set.
    std::optional<double> decay;
    std::size_t decay_steps = 100;
};

class Adam {
public:
    Adam(std::size_t n, const AdamConfig& cfg = {});

    /// One step with bias correction. Throws NonFiniteGradient before
    /// touching any state.
    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

    std::size_t t() const { return t_; }
    const Eigen::VectorXd& m() const { return m_; }
    const Eigen::VectorXd& v() const { return v_; }
    /// Learning rate used by step number t (1-based).
    double lr_at(std::size_t t) const;

private:
    AdamConfig cfg_;
    Eigen::VectorXd m_, v_;
    std::size_t t_ = 0;
};

struct LbfgsConfig {
    std::size_t history = 50;
    std::size_t max_iters = 5000;
    /// Stop when max |g| falls to this.
    double gtol = 1e-10;
    /// Stop when (f_prev - f) <= ftol * max(|f_prev|, |f|).
    double ftol = 2.220446049250313e-16;
    double c1 = 1e-4;
    double c2 = 0.9;
    std::size_t max_line_search = 40;
};

enum class LbfgsStatus { gradient_tolerance, decrease_tolerance, max_iterations, line_search_failed };
std::string to_string(LbfgsStatus s);

/// f(theta), writing the gradient into grad (already sized).
using Oracle = std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd& grad)>;
/// Called after each accepted iterate: (iteration, theta, loss).
using IterCallback = std::function<void(std::size_t, const Eigen::VectorXd&, double)>;

struct LbfgsResult {
    Eigen::VectorXd theta;  // best iterate
    double loss = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    LbfgsStatus status = LbfgsStatus::max_iterations;
};

/// Two-loop recursion with a strong Wolfe line search. A failed line search
/// restarts once from steepest descent; a second failure ends the run.
LbfgsResult lbfgs_run(const Eigen::VectorXd& theta0, const Oracle& oracle, const LbfgsConfig& cfg = {},
                      const IterCallback& on_iter = {});

struct TrainSchedule {
    std::size_t adam_iters = 2000;
    std::size_t lbfgs_max = 5000;
    double lr = 1e-3;
    std::optional<double> decay;
    std::size_t decay_steps = 100;
    std::uint64_t seed = 0;
    std::size_t lbfgs_history = 50;
    double gtol = 1e-10;
    double ftol = 2.220446049250313e-16;
    /// Xavier-initialise from seed; otherwise start from the network as given.
    bool initialize = true;
};

struct TrainResult {
    Eigen::VectorXd best_theta;
    LossBreakdown best;
    std::vector<LossRecord> log;
    std::size_t adam_steps = 0;
    std::size_t lbfgs_iterations = 0;
    std::size_t evaluations = 0;
    std::optional<LbfgsStatus> lbfgs_status;
};

/// Optimizer failure with the loss log up to that point.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(const std::string& what, std::vector<LossRecord> log)
        : std::runtime_error(what), log_(std::move(log)) {}
    const std::vector<LossRecord>& log() const { return log_; }

private:
    std::vector<LossRecord> log_;
};

/// Adam for adam_iters full-batch steps, then L-BFGS for at most lbfgs_max
/// iterations. Leaves the best parameters seen in net.
TrainResult train_two_stage(Network& net, const StokesProblem& prob, const QuadratureSet& qs, const LossConfig& cfg,
                            const TrainSchedule& schedule);

double median(std::vector<double> v);

}  // namespace vpvnet
