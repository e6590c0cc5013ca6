#pragma once

// Reverse-mode tape whose nodes carry order-2 spatial jets.
//
// Each node stores its Jet2 value and the local data needed to pull an
// adjoint jet back onto its operands. Sweeping the tape once in reverse
// yields d(loss)/d(theta) for every parameter leaf, where the loss may depend
// on spatial derivatives carried inside the jets ("Taylor-forward over
// reverse").

#include "vpvnet/jet.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace vpvnet {

enum class OpKind : std::uint8_t {
    constant,
    parameter,
    add,
    sub,
    mul,
    neg,
    scale,
    unary,  // sin, cos, tanh, sigmoid, exp, pow, reciprocal
    component,
};

enum class UnaryFn : std::uint8_t { sin, cos, tanh, sigmoid, exp, pow, reciprocal };

template <std::size_t D>
class Tape {
public:
    using JetT = Jet2<D>;
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    /// Handle to a tape node. Only valid on the tape that created it.
    class Var {
    public:
        Var() = default;
        std::size_t index() const { return index_; }
        Tape* tape() const { return tape_; }
        const JetT& jet() const;

        friend Var operator+(Var a, Var b) { return a.tape_->add(a, b); }
        friend Var operator-(Var a, Var b) { return a.tape_->sub(a, b); }
        friend Var operator*(Var a, Var b) { return a.tape_->mul(a, b); }
        friend Var operator/(Var a, Var b) { return a.tape_->div(a, b); }
        friend Var operator-(Var a) { return a.tape_->neg(a); }
        friend Var operator*(double s, Var a) { return a.tape_->scale(a, s); }
        friend Var operator*(Var a, double s) { return a.tape_->scale(a, s); }
        friend Var operator+(Var a, double s) { return a.tape_->add_scalar(a, s); }
        friend Var operator-(Var a, double s) { return a.tape_->add_scalar(a, -s); }

    private:
        friend class Tape;
        Var(Tape* t, std::size_t i) : tape_(t), index_(i) {}
        Tape* tape_ = nullptr;
        std::size_t index_ = npos;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(const JetT& value);
    /// Parameter leaf theta[param_index] = value.
    Var parameter(std::size_t param_index, double value);
    /// Seeded input coordinates at x.
    std::array<Var, D> inputs(const std::array<double, D>& x);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    /// Recorded as a reciprocal node followed by a product.
    Var div(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var sin(Var a) { return unary(UnaryFn::sin, a); }
    Var cos(Var a) { return unary(UnaryFn::cos, a); }
    Var tanh(Var a) { return unary(UnaryFn::tanh, a); }
    Var sigmoid(Var a) { return unary(UnaryFn::sigmoid, a); }
    Var exp(Var a) { return unary(UnaryFn::exp, a); }
    Var pow(Var a, double c);
    Var unary(UnaryFn fn, Var a, double param = 0.0);

    /// Scalar extraction: a node whose value is a chosen component of a.
    /// The result is a constant-in-space jet (no spatial derivatives).
    Var component(Var a, std::size_t c);

    const JetT& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }
    std::size_t parameter_count() const { return n_params_; }

    /// d(loss.value)/d(theta) for parameter indices [0, n_params). When
    /// n_params is npos the largest registered index + 1 is used.
    std::vector<double> backward(Var loss, std::size_t n_params = npos) const;

    /// Nodes visited by the most recent backward sweep.
    std::size_t last_sweep_visits() const { return last_visits_; }

    void clear();

private:
    struct Node {
        OpKind kind;
        std::size_t a = npos;
        std::size_t b = npos;
        JetT value{};
        // unary: derivatives 1..3 at the operand value; scale: f1 = s
        double f1 = 0.0, f2 = 0.0, f3 = 0.0;
        // parameter index or picked component
        std::size_t aux = 0;
    };

    std::size_t check(Var v) const;
    Var push(Node n);

    std::vector<Node> nodes_;
    std::size_t n_params_ = 0;
    mutable std::size_t last_visits_ = 0;
};

extern template class Tape<2>;
extern template class Tape<3>;

using Tape2 = Tape<2>;
using Tape3 = Tape<3>;

}  // namespace vpvnet
