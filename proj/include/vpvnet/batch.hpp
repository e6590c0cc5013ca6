#pragma once

// Batched jet evaluation of a Network over many points, with a matching
// reverse pass.
//
// Activations are stored as width x (C * N) matrices: C column blocks of N
// points each, one block per jet component in Jet2 order (value, gradient,
// packed Hessian). Jets may be truncated: order 0 carries values only,
// order 1 adds gradients, order 2 adds Hessians. A linear layer then acts on
// all components with a single matrix product and the activation applies the
// truncated chain rule elementwise. The jet_laplacian truncation keeps value,
// gradient and the Laplacian in place of the Hessian.

#include "vpvnet/network.hpp"

#include <Eigen/Core>

#include <vector>

namespace vpvnet {

/// Value, gradient and Laplacian; the Laplacian is component 1 + dim.
inline constexpr int jet_laplacian = 3;

/// Number of jet components carried at `order` in `dim` inputs.
std::size_t jet_components(std::size_t dim, int order);

class BatchEvaluator {
public:
    /// Keeps a reference; the network must outlive the evaluator and stay
    /// unchanged between forward() and backward().
    explicit BatchEvaluator(const Network& net);

    /// Point at another network of the same architecture, keeping buffers.
    void bind(const Network& net);

    /// points: dim x N, one column per point.
    void forward(const Eigen::MatrixXd& points, int order);

    /// Raw head jets, outputs x (C * N). Column c * N + n is component c of
    /// point n.
    const Eigen::MatrixXd& head() const { return head_out_; }
    std::size_t point_count() const { return n_; }
    std::size_t components() const { return c_; }
    int order() const { return order_; }

    /// Accumulates d(loss)/d(theta) into grad (layout order) given
    /// d(loss)/d(head) with the shape of head().
    void backward(const Eigen::MatrixXd& head_adjoint, Eigen::VectorXd& grad) const;

private:
    struct ActCache {
        // derivatives at the value block, width x N; sin keeps f0 and f1 only
        Eigen::ArrayXXd f0, f1, f2, f3;
    };
    struct BlockCache {
        Eigen::MatrixXd z1, a1, z2, out;
        ActCache act1, act2;
    };
    const Eigen::MatrixXd& block_input(std::size_t b) const { return b == 0 ? seed_ : blocks_[b - 1].out; }

    void activate(const Eigen::MatrixXd& z, Eigen::MatrixXd& a, ActCache& cache) const;
    void activate_adjoint(const Eigen::MatrixXd& z, const Eigen::MatrixXd& abar, const ActCache& cache,
                          Eigen::MatrixXd& zbar) const;
    void linear(const LinearLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
    void transposed(const LinearLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const;
    void linear_adjoint(const LinearLayer& layer, std::size_t offset, const Eigen::MatrixXd& in,
                        const Eigen::MatrixXd& outbar, Eigen::VectorXd& grad) const;

    const Network* net_;
    std::vector<std::size_t> offsets_;  // flat offset of each linear layer
    std::vector<BlockCache> blocks_;
    Eigen::MatrixXd seed_;  // input jets
    Eigen::MatrixXd head_out_;
    mutable Eigen::MatrixXd tbar_, zbar_, abar_;
    std::size_t n_ = 0;
    std::size_t c_ = 0;
    int order_ = 0;
};

}  // namespace vpvnet
