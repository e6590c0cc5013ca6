#include "vpvnet/tape.hpp"

#include "vpvnet/scalar_funcs.hpp"

#include <algorithm>
#include <string>

namespace vpvnet {

namespace {

template <std::size_t D>
using Adjoint = std::array<double, Jet2<D>::n_components>;

constexpr std::size_t hess_offset(std::size_t d) { return 1 + d; }

/// Pulls the adjoint of y = phi(a) back onto a, given phi' phi'' phi''' at a.value.
template <std::size_t D>
void pull_unary(const Adjoint<D>& ybar, const Jet2<D>& a, double f1, double f2, double f3,
                Adjoint<D>& abar) {
    constexpr std::size_t H = hess_offset(D);
    abar[0] += ybar[0] * f1;
    for (std::size_t i = 0; i < D; ++i) {
        abar[0] += ybar[1 + i] * f2 * a.grad[i];
        abar[1 + i] += ybar[1 + i] * f1;
    }
    for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t j = i; j < D; ++j) {
            const double yb = ybar[H + packed_index(D, i, j)];
            if (yb == 0.0) continue;
            abar[0] += yb * (f3 * a.grad[i] * a.grad[j] + f2 * a.h(i, j));
            abar[1 + i] += yb * f2 * a.grad[j];
            abar[1 + j] += yb * f2 * a.grad[i];
            abar[H + packed_index(D, i, j)] += yb * f1;
        }
    }
}

/// Pulls the adjoint of y = a * b back onto a (call twice with roles swapped).
template <std::size_t D>
void pull_mul(const Adjoint<D>& ybar, const Jet2<D>& b, Adjoint<D>& abar) {
    constexpr std::size_t H = hess_offset(D);
    abar[0] += ybar[0] * b.value;
    for (std::size_t i = 0; i < D; ++i) {
        abar[0] += ybar[1 + i] * b.grad[i];
        abar[1 + i] += ybar[1 + i] * b.value;
    }
    for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t j = i; j < D; ++j) {
            const double yb = ybar[H + packed_index(D, i, j)];
            if (yb == 0.0) continue;
            abar[0] += yb * b.h(i, j);
            abar[1 + i] += yb * b.grad[j];
            abar[1 + j] += yb * b.grad[i];
            abar[H + packed_index(D, i, j)] += yb * b.value;
        }
    }
}

}  // namespace

template <std::size_t D>
const typename Tape<D>::JetT& Tape<D>::Var::jet() const {
    if (tape_ == nullptr) throw StructuralError("tape variable is not bound to a tape");
    return tape_->value(*this);
}

template <std::size_t D>
std::size_t Tape<D>::check(Var v) const {
    if (v.tape_ != this || v.index_ >= nodes_.size())
        throw StructuralError("dangling tape reference (node " + std::to_string(v.index_) + ")");
    return v.index_;
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::constant(const JetT& value) {
    Node n{OpKind::constant};
    n.value = value;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::parameter(std::size_t param_index, double value) {
    Node n{OpKind::parameter};
    n.value = JetT(value);
    n.aux = param_index;
    n_params_ = std::max(n_params_, param_index + 1);
    return push(n);
}

template <std::size_t D>
std::array<typename Tape<D>::Var, D> Tape<D>::inputs(const std::array<double, D>& x) {
    std::array<Var, D> out;
    const auto seeds = seed_inputs<D>(x);
    for (std::size_t i = 0; i < D; ++i) out[i] = constant(seeds[i]);
    return out;
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::add(Var a, Var b) {
    Node n{OpKind::add, check(a), check(b)};
    n.value = nodes_[n.a].value + nodes_[n.b].value;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::sub(Var a, Var b) {
    Node n{OpKind::sub, check(a), check(b)};
    n.value = nodes_[n.a].value - nodes_[n.b].value;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::mul(Var a, Var b) {
    Node n{OpKind::mul, check(a), check(b)};
    n.value = nodes_[n.a].value * nodes_[n.b].value;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::div(Var a, Var b) {
    check(a);
    return mul(a, unary(UnaryFn::reciprocal, b));
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::neg(Var a) {
    Node n{OpKind::neg, check(a)};
    n.value = -nodes_[n.a].value;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::scale(Var a, double s) {
    Node n{OpKind::scale, check(a)};
    n.value = vpvnet::scale(nodes_[n.a].value, s);
    n.f1 = s;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::add_scalar(Var a, double s) {
    return add(a, constant(JetT(s)));
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::pow(Var a, double c) {
    return unary(UnaryFn::pow, a, c);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::unary(UnaryFn fn, Var a, double param) {
    Node n{OpKind::unary, check(a)};
    const JetT& x = nodes_[n.a].value;
    Taylor3 t{};
    switch (fn) {
        case UnaryFn::sin: t = sin_taylor(x.value); break;
        case UnaryFn::cos: t = cos_taylor(x.value); break;
        case UnaryFn::tanh: t = tanh_taylor(x.value); break;
        case UnaryFn::sigmoid: t = sigmoid_taylor(x.value); break;
        case UnaryFn::exp: t = exp_taylor(x.value); break;
        case UnaryFn::pow:
            if (!(x.value > 0.0)) throw NumericDomainError("pow requires a positive base");
            t = pow_taylor(x.value, param);
            break;
        case UnaryFn::reciprocal:
            if (x.value == 0.0) throw NumericDomainError("division by a zero value");
            t = reciprocal_taylor(x.value);
            break;
    }
    n.value = compose(x, t.f0, t.f1, t.f2);
    n.f1 = t.f1;
    n.f2 = t.f2;
    n.f3 = t.f3;
    return push(n);
}

template <std::size_t D>
typename Tape<D>::Var Tape<D>::component(Var a, std::size_t c) {
    if (c >= JetT::n_components) throw StructuralError("jet component out of range");
    Node n{OpKind::component, check(a)};
    n.value = JetT(nodes_[n.a].value.component(c));
    n.aux = c;
    return push(n);
}

template <std::size_t D>
const typename Tape<D>::JetT& Tape<D>::value(Var v) const {
    return nodes_[check(v)].value;
}

template <std::size_t D>
void Tape<D>::clear() {
    nodes_.clear();
    n_params_ = 0;
}

template <std::size_t D>
std::vector<double> Tape<D>::backward(Var loss, std::size_t n_params) const {
    const std::size_t root = check(loss);
    if (n_params == npos) n_params = n_params_;
    std::vector<double> grad(n_params, 0.0);
    std::vector<Adjoint<D>> adj(root + 1, Adjoint<D>{});
    adj[root][0] = 1.0;
    last_visits_ = 0;

    for (std::size_t k = root + 1; k-- > 0;) {
        ++last_visits_;
        const Node& n = nodes_[k];
        const Adjoint<D>& y = adj[k];
        switch (n.kind) {
            case OpKind::constant: break;
            case OpKind::parameter:
                if (n.aux >= n_params)
                    throw StructuralError("parameter index " + std::to_string(n.aux) +
                                          " exceeds gradient length");
                grad[n.aux] += y[0];
                break;
            case OpKind::add:
                for (std::size_t c = 0; c < y.size(); ++c) {
                    adj[n.a][c] += y[c];
                    adj[n.b][c] += y[c];
                }
                break;
            case OpKind::sub:
                for (std::size_t c = 0; c < y.size(); ++c) {
                    adj[n.a][c] += y[c];
                    adj[n.b][c] -= y[c];
                }
                break;
            case OpKind::neg:
                for (std::size_t c = 0; c < y.size(); ++c) adj[n.a][c] -= y[c];
                break;
            case OpKind::scale:
                for (std::size_t c = 0; c < y.size(); ++c) adj[n.a][c] += n.f1 * y[c];
                break;
            case OpKind::mul:
                pull_mul<D>(y, nodes_[n.b].value, adj[n.a]);
                pull_mul<D>(y, nodes_[n.a].value, adj[n.b]);
                break;
            case OpKind::unary:
                pull_unary<D>(y, nodes_[n.a].value, n.f1, n.f2, n.f3, adj[n.a]);
                break;
            case OpKind::component:
                adj[n.a][n.aux] += y[0];
                break;
        }
    }
    return grad;
}

template class Tape<2>;
template class Tape<3>;

}  // namespace vpvnet
