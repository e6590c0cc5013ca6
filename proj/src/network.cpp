#include "vpvnet/network.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/scalar_funcs.hpp"

#include <random>
#include <sstream>

namespace vpvnet {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::sin: return "sin";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

std::string to_string(HeadMode h) {
    return h == HeadMode::stream_function_2d ? "stream_function_2d" : "direct_3d";
}

Activation parse_activation(std::string_view name) {
    if (name == "sin") return Activation::sin;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + std::string(name) + "' (valid: sin, tanh, sigmoid)");
}

HeadMode parse_head_mode(std::string_view name) {
    if (name == "stream_function_2d") return HeadMode::stream_function_2d;
    if (name == "direct_3d") return HeadMode::direct_3d;
    throw ConfigError("unknown head mode '" + std::string(name) +
                      "' (valid: stream_function_2d, direct_3d)");
}

Architecture Architecture::standard(std::size_t dim, std::size_t hidden_layers, std::size_t width,
                                    Activation act) {
    Architecture a;
    a.dim = dim;
    a.hidden_layers = hidden_layers;
    a.width = width;
    a.activation = act;
    a.head = dim == 2 ? HeadMode::stream_function_2d : HeadMode::direct_3d;
    return a;
}

std::string Architecture::descriptor() const {
    std::ostringstream os;
    os << hidden_layers << "x" << width;
    return os.str();
}

void Architecture::validate() const {
    if (dim != 2 && dim != 3) throw StructuralError("network dimension must be 2 or 3");
    if (hidden_layers < 2 || hidden_layers % 2 != 0)
        throw StructuralError("hidden layer count must be a positive even number (two per block)");
    if (width < dim) throw StructuralError("network width must be at least the input dimension");
    if (head == HeadMode::stream_function_2d && dim != 2)
        throw StructuralError("the stream-function head is two-dimensional");
    if (head == HeadMode::direct_3d && dim != 3)
        throw StructuralError("the direct head is three-dimensional");
}

Network::Network(const Architecture& arch) : arch_(arch) {
    arch_.validate();
    const std::size_t m = arch_.width;
    blocks_.reserve(arch_.blocks());
    for (std::size_t b = 0; b < arch_.blocks(); ++b) {
        blocks_.push_back({LinearLayer(b == 0 ? arch_.dim : m, m), LinearLayer(m, m)});
    }
    head_ = LinearLayer(m, arch_.outputs());
}

std::vector<const LinearLayer*> Network::layers() const {
    std::vector<const LinearLayer*> out;
    for (const auto& b : blocks_) {
        out.push_back(&b.first);
        out.push_back(&b.second);
    }
    out.push_back(&head_);
    return out;
}

std::vector<LinearLayer*> Network::layers() {
    std::vector<LinearLayer*> out;
    for (auto& b : blocks_) {
        out.push_back(&b.first);
        out.push_back(&b.second);
    }
    out.push_back(&head_);
    return out;
}

ParamLayout Network::layout() const {
    ParamLayout l;
    std::size_t offset = 0;
    std::size_t ordinal = 0;
    for (const LinearLayer* layer : layers()) {
        l.slots.push_back({ordinal, TensorKind::weight, layer->out(), layer->in(), offset});
        offset += layer->out() * layer->in();
        l.slots.push_back({ordinal, TensorKind::bias, layer->out(), 1, offset});
        offset += layer->out();
        ++ordinal;
    }
    return l;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const LinearLayer* layer : layers()) n += layer->out() * (layer->in() + 1);
    return n;
}

ParamVector Network::get_params() const {
    ParamVector p;
    p.layout = layout();
    p.values.resize(static_cast<Eigen::Index>(p.layout.size()));
    Eigen::Index k = 0;
    for (const LinearLayer* layer : layers()) {
        // row-major weight storage matches the layout order
        const Eigen::Index nw = layer->weight.size();
        p.values.segment(k, nw) = Eigen::Map<const Eigen::VectorXd>(layer->weight.data(), nw);
        k += nw;
        p.values.segment(k, layer->bias.size()) = layer->bias;
        k += layer->bias.size();
    }
    return p;
}

void Network::set_params(const ParamVector& p) {
    if (!(p.layout == layout())) throw StructuralError("parameter layout does not match the network");
    set_params(p.values);
}

void Network::set_params(const Eigen::VectorXd& values) {
    if (static_cast<std::size_t>(values.size()) != parameter_count())
        throw StructuralError("parameter vector length " + std::to_string(values.size()) +
                              " does not match network parameter count " +
                              std::to_string(parameter_count()));
    Eigen::Index k = 0;
    for (LinearLayer* layer : layers()) {
        const Eigen::Index nw = layer->weight.size();
        Eigen::Map<Eigen::VectorXd>(layer->weight.data(), nw) = values.segment(k, nw);
        k += nw;
        layer->bias = values.segment(k, layer->bias.size());
        k += layer->bias.size();
    }
}

bool ParamLayout::operator==(const ParamLayout& other) const {
    if (slots.size() != other.slots.size()) return false;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& a = slots[i];
        const auto& b = other.slots[i];
        if (a.layer != b.layer || a.kind != b.kind || a.rows != b.rows || a.cols != b.cols ||
            a.offset != b.offset)
            return false;
    }
    return true;
}

void xavier_init(Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (LinearLayer* layer : net.layers()) {
        const double stddev = 1.0 / static_cast<double>(layer->in());
        for (Eigen::Index r = 0; r < layer->weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer->weight.cols(); ++c) {
                double z = normal(rng);
                while (std::abs(z) > 2.0) z = normal(rng);
                layer->weight(r, c) = stddev * z;
            }
        }
        layer->bias.setZero();
    }
}

namespace {

template <std::size_t D>
Jet2<D> activate(Activation a, const Jet2<D>& z) {
    Taylor3 t{};
    switch (a) {
        case Activation::sin: t = sin_taylor(z.value); break;
        case Activation::tanh: t = tanh_taylor(z.value); break;
        case Activation::sigmoid: t = sigmoid_taylor(z.value); break;
    }
    return compose(z, t.f0, t.f1, t.f2);
}

template <std::size_t D>
std::vector<Jet2<D>> apply_linear(const LinearLayer& layer, const std::vector<Jet2<D>>& s) {
    std::vector<Jet2<D>> out(layer.out());
    for (std::size_t r = 0; r < layer.out(); ++r) {
        Jet2<D> acc(layer.bias(static_cast<Eigen::Index>(r)));
        for (std::size_t c = 0; c < layer.in(); ++c) {
            const double w = layer.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            acc.value += w * s[c].value;
            for (std::size_t i = 0; i < D; ++i) acc.grad[i] += w * s[c].grad[i];
            for (std::size_t k = 0; k < Jet2<D>::n_hess; ++k) acc.hess[k] += w * s[c].hess[k];
        }
        out[r] = acc;
    }
    return out;
}

UnaryFn unary_for(Activation a) {
    switch (a) {
        case Activation::sin: return UnaryFn::sin;
        case Activation::tanh: return UnaryFn::tanh;
        case Activation::sigmoid: return UnaryFn::sigmoid;
    }
    return UnaryFn::sin;
}

}  // namespace

template <std::size_t D>
std::vector<Jet2<D>> forward_jets(const Network& net, const std::array<double, D>& x) {
    if (net.dim() != D) throw StructuralError("point dimension does not match the network");
    const auto seeds = seed_inputs<D>(x);
    std::vector<Jet2<D>> s(seeds.begin(), seeds.end());
    const Activation act = net.arch().activation;
    for (const ResNetBlock& block : net.blocks()) {
        auto a1 = apply_linear(block.first, s);
        for (auto& j : a1) j = activate(act, j);
        auto t = apply_linear(block.second, a1);
        for (auto& j : t) j = activate(act, j);
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = t[i] + s[i];
        s = std::move(t);
    }
    return apply_linear(net.head(), s);
}

template <std::size_t D>
std::vector<typename Tape<D>::Var> forward_jets(const Network& net, Tape<D>& tape,
                                                const std::array<double, D>& x) {
    using Var = typename Tape<D>::Var;
    if (net.dim() != D) throw StructuralError("point dimension does not match the network");
    const auto in = tape.inputs(x);
    std::vector<Var> s(in.begin(), in.end());
    std::size_t offset = 0;

    auto linear = [&](const LinearLayer& layer, const std::vector<Var>& input) {
        std::vector<Var> out(layer.out());
        const std::size_t bias_offset = offset + layer.out() * layer.in();
        for (std::size_t r = 0; r < layer.out(); ++r) {
            Var acc = tape.parameter(bias_offset + r, layer.bias(static_cast<Eigen::Index>(r)));
            for (std::size_t c = 0; c < layer.in(); ++c) {
                const Var w = tape.parameter(
                    offset + r * layer.in() + c,
                    layer.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
                acc = acc + w * input[c];
            }
            out[r] = acc;
        }
        offset = bias_offset + layer.out();
        return out;
    };

    const UnaryFn fn = unary_for(net.arch().activation);
    for (const ResNetBlock& block : net.blocks()) {
        auto a1 = linear(block.first, s);
        for (auto& v : a1) v = tape.unary(fn, v);
        auto t = linear(block.second, a1);
        for (auto& v : t) v = tape.unary(fn, v);
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = t[i] + s[i];
        s = std::move(t);
    }
    return linear(net.head(), s);
}

template <>
FieldSample fields_from_head<2>(HeadMode mode, const std::vector<Jet2<2>>& head) {
    if (mode != HeadMode::stream_function_2d || head.size() != 3)
        throw StructuralError("2D fields require the stream-function head (psi, w, p)");
    const Jet2<2>& psi = head[0];
    const Jet2<2>& w = head[1];
    const Jet2<2>& p = head[2];
    FieldSample fs;
    fs.dim = 2;
    fs.vel = {psi.grad[1], -psi.grad[0], 0.0};
    fs.grad_vel[0] = {psi.h(0, 1), psi.h(1, 1), 0.0};
    fs.grad_vel[1] = {-psi.h(0, 0), -psi.h(0, 1), 0.0};
    fs.vort[0] = w.value;
    fs.grad_vort[0] = {w.grad[0], w.grad[1], 0.0};
    fs.p = p.value;
    fs.grad_p = {p.grad[0], p.grad[1], 0.0};
    return fs;
}

template <>
FieldSample fields_from_head<3>(HeadMode mode, const std::vector<Jet2<3>>& head) {
    if (mode != HeadMode::direct_3d || head.size() != 7)
        throw StructuralError("3D fields require the direct head (u1 u2 u3 w1 w2 w3 p)");
    FieldSample fs;
    fs.dim = 3;
    for (std::size_t i = 0; i < 3; ++i) {
        fs.vel[i] = head[i].value;
        fs.vort[i] = head[3 + i].value;
        for (std::size_t j = 0; j < 3; ++j) {
            fs.grad_vel[i][j] = head[i].grad[j];
            fs.grad_vort[i][j] = head[3 + i].grad[j];
        }
    }
    fs.p = head[6].value;
    fs.grad_p = head[6].grad;
    return fs;
}

FieldSample fields(const Network& net, const Point& x) {
    if (net.dim() == 2) return fields_from_head<2>(net.arch().head, forward_jets<2>(net, {x[0], x[1]}));
    return fields_from_head<3>(net.arch().head, forward_jets<3>(net, {x[0], x[1], x[2]}));
}

template std::vector<Jet2<2>> forward_jets<2>(const Network&, const std::array<double, 2>&);
template std::vector<Jet2<3>> forward_jets<3>(const Network&, const std::array<double, 3>&);
template std::vector<Tape<2>::Var> forward_jets<2>(const Network&, Tape<2>&, const std::array<double, 2>&);
template std::vector<Tape<3>::Var> forward_jets<3>(const Network&, Tape<3>&, const std::array<double, 3>&);

}  // namespace vpvnet
