#pragma once

// ResNet approximation of (velocity, vorticity, pressure).
//
// Architecture "N_L x N_N": N_L hidden layers of width N_N grouped into
// N_L / 2 residual blocks
//
//     t = act(W2 act(W1 s + b1) + b2) + shortcut(s)
//
// The first block reads the d spatial coordinates directly (W1 is N_N x d)
// and its shortcut zero-pads s into R^{N_N}; every later block uses the
// identity shortcut. A linear head maps the last block output to the raw
// outputs: (psi, w, p) for the 2D stream-function head, whose velocity
// (psi_y, -psi_x) is divergence-free by construction, or
// (u1, u2, u3, w1, w2, w3, p) for the direct 3D head.

#include "vpvnet/fields.hpp"
#include "vpvnet/jet.hpp"
#include "vpvnet/params.hpp"
#include "vpvnet/tape.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vpvnet {

enum class Activation { sin, tanh, sigmoid };

enum class HeadMode { stream_function_2d, direct_3d };

std::string to_string(Activation a);
std::string to_string(HeadMode h);
Activation parse_activation(std::string_view name);
HeadMode parse_head_mode(std::string_view name);

struct Architecture {
    std::size_t dim = 2;
    std::size_t hidden_layers = 4;  // N_L, even
    std::size_t width = 8;          // N_N
    Activation activation = Activation::sin;
    HeadMode head = HeadMode::stream_function_2d;

    /// Head matching the dimension: stream function in 2D, direct in 3D.
    static Architecture standard(std::size_t dim, std::size_t hidden_layers, std::size_t width,
                                 Activation act = Activation::sin);

    std::size_t blocks() const { return hidden_layers / 2; }
    std::size_t outputs() const { return head == HeadMode::stream_function_2d ? 3 : 7; }
    /// "N_L x N_N", e.g. "8x16".
    std::string descriptor() const;
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

using WeightMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LinearLayer {
    WeightMatrix weight;  // out x in
    Eigen::VectorXd bias;

    LinearLayer() = default;
    LinearLayer(std::size_t in, std::size_t out)
        : weight(WeightMatrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
          bias(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))) {}

    std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

struct ResNetBlock {
    LinearLayer first;
    LinearLayer second;
};

class Network {
public:
    /// All parameters zero.
    explicit Network(const Architecture& arch);

    const Architecture& arch() const { return arch_; }
    std::size_t dim() const { return arch_.dim; }

    std::vector<ResNetBlock>& blocks() { return blocks_; }
    const std::vector<ResNetBlock>& blocks() const { return blocks_; }
    LinearLayer& head() { return head_; }
    const LinearLayer& head() const { return head_; }

    /// Linear layers in forward order: block0.first, block0.second, ..., head.
    std::vector<const LinearLayer*> layers() const;
    std::vector<LinearLayer*> layers();

    ParamLayout layout() const;
    std::size_t parameter_count() const;

    ParamVector get_params() const;
    /// Throws StructuralError on length or layout mismatch.
    void set_params(const ParamVector& p);
    void set_params(const Eigen::VectorXd& values);

private:
    Architecture arch_;
    std::vector<ResNetBlock> blocks_;
    LinearLayer head_;
};

/// Weights drawn from a normal with standard deviation 1/fan_in, truncated at
/// two standard deviations (resampled); biases zero. Deterministic in the seed.
void xavier_init(Network& net, std::uint64_t seed);

/// Raw head outputs with first and second spatial derivatives at x.
template <std::size_t D>
std::vector<Jet2<D>> forward_jets(const Network& net, const std::array<double, D>& x);

/// Same evaluation recorded on a tape; parameters are registered as leaves
/// with their flat layout indices.
template <std::size_t D>
std::vector<typename Tape<D>::Var> forward_jets(const Network& net, Tape<D>& tape,
                                                const std::array<double, D>& x);

/// Physical fields (u, w, p and first derivatives) from raw head jets.
template <std::size_t D>
FieldSample fields_from_head(HeadMode mode, const std::vector<Jet2<D>>& head);
template <>
FieldSample fields_from_head<2>(HeadMode mode, const std::vector<Jet2<2>>& head);
template <>
FieldSample fields_from_head<3>(HeadMode mode, const std::vector<Jet2<3>>& head);

/// Evaluate the network at x and assemble its FieldSample.
FieldSample fields(const Network& net, const Point& x);

}  // namespace vpvnet
