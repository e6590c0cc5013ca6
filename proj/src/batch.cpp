#include "vpvnet/batch.hpp"

#include "vpvnet/errors.hpp"
#include "vpvnet/scalar_funcs.hpp"

#include <cmath>
#include <type_traits>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace vpvnet {

std::size_t jet_components(std::size_t dim, int order) {
    switch (order) {
        case 0: return 1;
        case 1: return 1 + dim;
        case 2: return 1 + dim + packed_size(dim);
        case jet_laplacian: return 2 + dim;
        default: throw StructuralError("jet order must be 0, 1, 2 or jet_laplacian");
    }
}

BatchEvaluator::BatchEvaluator(const Network& net) : net_(&net) { bind(net); }

void BatchEvaluator::bind(const Network& net) {
    net_ = &net;
    offsets_.clear();
    std::size_t offset = 0;
    for (const LinearLayer* layer : net.layers()) {
        offsets_.push_back(offset);
        offset += layer->out() * (layer->in() + 1);
    }
}

namespace {

using Eigen::Index;

Taylor3 taylor(Activation a, double z) {
    switch (a) {
        case Activation::sin: return sin_taylor(z);
        case Activation::tanh: return tanh_taylor(z);
        case Activation::sigmoid: return sigmoid_taylor(z);
    }
    return {};
}

// sin and cos of one value by Cody-Waite reduction by pi/2 and the fdlibm
// kernels, branch free so loops over it vectorize. Valid for |x| <= 1e5.
inline void sincos_reduced(double z, double& s, double& c) {
    constexpr double inv_pio2 = 6.36619772367581382433e-01;
    constexpr double pio2_1 = 1.57079632673412561417e+00;
    constexpr double pio2_2 = 6.07710050630396597660e-11;
    constexpr double pio2_3 = 2.02226624871116645580e-21;
    constexpr double shift = 6755399441055744.0;  // 1.5 * 2^52, rounds to an integer
    const double k = (z * inv_pio2 + shift) - shift;
    const double r = ((z - k * pio2_1) - k * pio2_2) - k * pio2_3;
    const double r2 = r * r;
    const double ps =
        r2 * (8.33333333332248946124e-03 +
              r2 * (-1.98412698298579493134e-04 +
                    r2 * (2.75573137070700676789e-06 +
                          r2 * (-2.50507602534068634195e-08 + r2 * 1.58969099521155010221e-10))));
    const double sv = r + r * r2 * (-1.66666666666666324348e-01 + ps);
    const double pc =
        r2 * (4.16666666666666019037e-02 +
              r2 * (-1.38888888888741095749e-03 +
                    r2 * (2.48015872894767294178e-05 +
                          r2 * (-2.75573143513906633035e-07 +
                                r2 * (2.08757232129817482790e-09 + r2 * -1.13596475577881948265e-11)))));
    const double hz = 0.5 * r2;
    const double w = 1.0 - hz;
    const double cv = w + (((1.0 - w) - hz) + r2 * pc);
    const double q = k - 4.0 * std::floor(k * 0.25);  // quadrant 0..3
    const bool odd = q == 1.0 || q == 3.0;
    const double a = odd ? cv : sv;
    const double b = odd ? sv : cv;
    s = q >= 2.0 ? -a : a;
    c = (q == 1.0 || q == 2.0) ? -b : b;
}

// Activation jets. z and a hold 1 + D (+ packed Hessian or Laplacian)
// blocks of E values. f0..f3 are the activation derivatives at the value
// block; for sin only f0 and f1 are stored (f2 = -f0, f3 = -f1).
template <class T>
struct ActPtrsT {
    T* f0;
    T* f1;
    T* f2;
    T* f3;
};
using ActPtrs = ActPtrsT<double>;
using ActView = ActPtrsT<const double>;

template <std::size_t D, int Order>
inline void chain_forward(const double* z, double* a, std::size_t E, std::size_t e, double v, double d1, double d2) {
    a[e] = v;
    if constexpr (Order >= 1)
        #pragma GCC unroll 4
        for (std::size_t i = 0; i < D; ++i) a[(1 + i) * E + e] = d1 * z[(1 + i) * E + e];
    if constexpr (Order == 2)
        #pragma GCC unroll 4
        for (std::size_t i = 0; i < D; ++i)
            #pragma GCC unroll 4
            for (std::size_t j = i; j < D; ++j) {
                const std::size_t c = 1 + D + packed_index(D, i, j);
                a[c * E + e] = d2 * z[(1 + i) * E + e] * z[(1 + j) * E + e] + d1 * z[c * E + e];
            }
    if constexpr (Order == jet_laplacian) {
        double g2 = 0.0;
        #pragma GCC unroll 4
        for (std::size_t i = 0; i < D; ++i) g2 += z[(1 + i) * E + e] * z[(1 + i) * E + e];
        a[(1 + D) * E + e] = d2 * g2 + d1 * z[(1 + D) * E + e];
    }
}

template <std::size_t D, int Order>
void activate_sin(const double* __restrict z, double* __restrict a, ActPtrs f, std::size_t E) {
    double* __restrict f0 = f.f0;
    double* __restrict f1 = f.f1;
    // sincos in its own loop, which vectorizes; the chain rule in a second
    for (std::size_t e = 0; e < E; ++e) sincos_reduced(z[e], f0[e], f1[e]);
    for (std::size_t e = 0; e < E; ++e)
        if (!(std::abs(z[e]) <= 1e5)) {
            f0[e] = std::sin(z[e]);
            f1[e] = std::cos(z[e]);
        }
    for (std::size_t e = 0; e < E; ++e) chain_forward<D, Order>(z, a, E, e, f0[e], f1[e], -f0[e]);
}

template <std::size_t D, int Order>
void activate_generic(Activation act, const double* z, double* a, ActPtrs f, std::size_t E) {
    for (std::size_t e = 0; e < E; ++e) {
        const Taylor3 t = taylor(act, z[e]);
        f.f1[e] = t.f1;
        f.f2[e] = t.f2;
        f.f3[e] = t.f3;
        chain_forward<D, Order>(z, a, E, e, t.f0, t.f1, t.f2);
    }
}

template <std::size_t D, int Order, bool Sine>
void adjoint_kernel(const double* __restrict z, const double* __restrict ab, double* __restrict zb, ActView f,
                    std::size_t E) {
    const double* __restrict fp0 = f.f0;
    const double* __restrict fp1 = f.f1;
    const double* __restrict fp2 = f.f2;
    const double* __restrict fp3 = f.f3;
    for (std::size_t e = 0; e < E; ++e) {
        const double f1 = fp1[e];
        const double f2 = Sine ? -fp0[e] : fp2[e];
        double acc = ab[e] * f1;
        if constexpr (Order >= 1)
            #pragma GCC unroll 4
            for (std::size_t i = 0; i < D; ++i) {
                acc += ab[(1 + i) * E + e] * f2 * z[(1 + i) * E + e];
                zb[(1 + i) * E + e] = ab[(1 + i) * E + e] * f1;
            }
        if constexpr (Order == 2) {
            const double f3 = Sine ? -f1 : fp3[e];
            #pragma GCC unroll 4
            for (std::size_t i = 0; i < D; ++i)
                #pragma GCC unroll 4
                for (std::size_t j = i; j < D; ++j) {
                    const std::size_t c = 1 + D + packed_index(D, i, j);
                    const double yb = ab[c * E + e];
                    const double zi = z[(1 + i) * E + e], zj = z[(1 + j) * E + e];
                    acc += yb * (f3 * zi * zj + f2 * z[c * E + e]);
                    zb[(1 + i) * E + e] += yb * f2 * zj;
                    zb[(1 + j) * E + e] += yb * f2 * zi;
                    zb[c * E + e] = yb * f1;
                }
        }
        if constexpr (Order == jet_laplacian) {
            const double f3 = Sine ? -f1 : fp3[e];
            const double lb = ab[(1 + D) * E + e];
            double g2 = 0.0;
            #pragma GCC unroll 4
            for (std::size_t i = 0; i < D; ++i) {
                const double zi = z[(1 + i) * E + e];
                g2 += zi * zi;
                zb[(1 + i) * E + e] += 2.0 * lb * f2 * zi;
            }
            acc += lb * (f3 * g2 + f2 * z[(1 + D) * E + e]);
            zb[(1 + D) * E + e] = lb * f1;
        }
        zb[e] = acc;
    }
}

template <std::size_t D, int Order>
void adjoint(bool sine, const double* z, const double* ab, double* zb, ActView f, std::size_t E) {
    if (sine)
        adjoint_kernel<D, Order, true>(z, ab, zb, f, E);
    else
        adjoint_kernel<D, Order, false>(z, ab, zb, f, E);
}

template <class F>
void dispatch(std::size_t d, int order, F&& f) {
    auto by_order = [&](auto dim) {
        switch (order) {
            case 0: f(dim, std::integral_constant<int, 0>{}); return;
            case 1: f(dim, std::integral_constant<int, 1>{}); return;
            case 2: f(dim, std::integral_constant<int, 2>{}); return;
            default: f(dim, std::integral_constant<int, jet_laplacian>{}); return;
        }
    };
    if (d == 2)
        by_order(std::integral_constant<std::size_t, 2>{});
    else if (d == 3)
        by_order(std::integral_constant<std::size_t, 3>{});
    else
        throw StructuralError("batched evaluation supports 2D and 3D networks");
}

// Square layers of width 8 V: y = w x with w column-major, x and y width x n
// column-major. GCC vector types, lowered to whatever SIMD the target has.
typedef double v8 __attribute__((vector_size(64), aligned(8)));

template <int V>
void square_product(const double* __restrict w, const double* __restrict x, double* __restrict y, Index n) {
    constexpr int W = 8 * V;
    v8 wc[W][V];
    for (int k = 0; k < W; ++k)
        for (int v = 0; v < V; ++v) wc[k][v] = *reinterpret_cast<const v8*>(w + W * k + 8 * v);
    Index j = 0;
    for (; j + 4 <= n; j += 4) {
        v8 acc[4][V] = {};
        const double* xj = x + W * j;
        for (int k = 0; k < W; ++k)
            for (int c = 0; c < 4; ++c) {
                const double b = xj[W * c + k];
                for (int v = 0; v < V; ++v) acc[c][v] += wc[k][v] * b;
            }
        for (int c = 0; c < 4; ++c)
            for (int v = 0; v < V; ++v) *reinterpret_cast<v8*>(y + W * (j + c) + 8 * v) = acc[c][v];
    }
    for (; j < n; ++j) {
        v8 acc[V] = {};
        for (int k = 0; k < W; ++k)
            for (int v = 0; v < V; ++v) acc[v] += wc[k][v] * x[W * j + k];
        for (int v = 0; v < V; ++v) *reinterpret_cast<v8*>(y + W * j + 8 * v) = acc[v];
    }
}

// g += y x^T for y, x width x n; g column-major width x width.
template <int V>
void square_outer(const double* __restrict y, const double* __restrict x, double* __restrict g, Index n) {
    constexpr int W = 8 * V;
    v8 acc[W][V] = {};
    for (Index j = 0; j < n; ++j) {
        v8 yj[V];
        for (int v = 0; v < V; ++v) yj[v] = *reinterpret_cast<const v8*>(y + W * j + 8 * v);
        for (int k = 0; k < W; ++k) {
            const double b = x[W * j + k];
            for (int v = 0; v < V; ++v) acc[k][v] += yj[v] * b;
        }
    }
    for (int k = 0; k < W; ++k)
        for (int v = 0; v < V; ++v) *reinterpret_cast<v8*>(g + W * k + 8 * v) += acc[k][v];
}

#ifdef __AVX512F__
// width 16 with AVX-512: two registers per column, accumulators kept in registers
template <>
void square_product<2>(const double* __restrict w, const double* __restrict x, double* __restrict y, Index n) {
    __m512d lo[16], hi[16];
    for (int k = 0; k < 16; ++k) {
        lo[k] = _mm512_loadu_pd(w + 16 * k);
        hi[k] = _mm512_loadu_pd(w + 16 * k + 8);
    }
    Index j = 0;
    for (; j + 4 <= n; j += 4) {
        __m512d a[4][2];
        for (int c = 0; c < 4; ++c) a[c][0] = a[c][1] = _mm512_setzero_pd();
        const double* xj = x + 16 * j;
        for (int k = 0; k < 16; ++k)
            for (int c = 0; c < 4; ++c) {
                const __m512d b = _mm512_set1_pd(xj[16 * c + k]);
                a[c][0] = _mm512_fmadd_pd(lo[k], b, a[c][0]);
                a[c][1] = _mm512_fmadd_pd(hi[k], b, a[c][1]);
            }
        for (int c = 0; c < 4; ++c) {
            _mm512_storeu_pd(y + 16 * (j + c), a[c][0]);
            _mm512_storeu_pd(y + 16 * (j + c) + 8, a[c][1]);
        }
    }
    for (; j < n; ++j) {
        __m512d a0 = _mm512_setzero_pd(), a1 = _mm512_setzero_pd();
        for (int k = 0; k < 16; ++k) {
            const __m512d b = _mm512_set1_pd(x[16 * j + k]);
            a0 = _mm512_fmadd_pd(lo[k], b, a0);
            a1 = _mm512_fmadd_pd(hi[k], b, a1);
        }
        _mm512_storeu_pd(y + 16 * j, a0);
        _mm512_storeu_pd(y + 16 * j + 8, a1);
    }
}

template <>
void square_outer<2>(const double* __restrict y, const double* __restrict x, double* __restrict g, Index n) {
    __m512d lo[16], hi[16];
    for (int k = 0; k < 16; ++k) lo[k] = hi[k] = _mm512_setzero_pd();
    for (Index j = 0; j < n; ++j) {
        const __m512d yl = _mm512_loadu_pd(y + 16 * j), yh = _mm512_loadu_pd(y + 16 * j + 8);
        for (int k = 0; k < 16; ++k) {
            const __m512d b = _mm512_set1_pd(x[16 * j + k]);
            lo[k] = _mm512_fmadd_pd(yl, b, lo[k]);
            hi[k] = _mm512_fmadd_pd(yh, b, hi[k]);
        }
    }
    for (int k = 0; k < 16; ++k) {
        _mm512_storeu_pd(g + 16 * k, _mm512_add_pd(_mm512_loadu_pd(g + 16 * k), lo[k]));
        _mm512_storeu_pd(g + 16 * k + 8, _mm512_add_pd(_mm512_loadu_pd(g + 16 * k + 8), hi[k]));
    }
}
#endif

// vector kernels handle square layers of width 8 or 16
int square_blocks(Index rows, Index cols) {
    if (rows != cols) return 0;
    return rows == 8 ? 1 : rows == 16 ? 2 : 0;
}

void product(int blocks, const double* w, const double* x, double* y, Index n) {
    if (blocks == 1)
        square_product<1>(w, x, y, n);
    else
        square_product<2>(w, x, y, n);
}

}  // namespace

void BatchEvaluator::linear(const LinearLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const {
    const int blocks = square_blocks(layer.weight.rows(), layer.weight.cols());
    if (blocks) {
        out.resize(in.rows(), in.cols());
        const Eigen::MatrixXd w = layer.weight;  // column-major copy
        product(blocks, w.data(), in.data(), out.data(), in.cols());
    } else {
        out.noalias() = layer.weight * in;
    }
    out.leftCols(static_cast<Index>(n_)).colwise() += layer.bias;
}

// in^T outbar-style products against W^T: the row-major weight storage is
// W^T column-major.
void BatchEvaluator::transposed(const LinearLayer& layer, const Eigen::MatrixXd& in, Eigen::MatrixXd& out) const {
    const int blocks = square_blocks(layer.weight.rows(), layer.weight.cols());
    if (blocks) {
        out.resize(in.rows(), in.cols());
        product(blocks, layer.weight.data(), in.data(), out.data(), in.cols());
    } else {
        out.noalias() = layer.weight.transpose() * in;
    }
}

void BatchEvaluator::linear_adjoint(const LinearLayer& layer, std::size_t offset, const Eigen::MatrixXd& in,
                                    const Eigen::MatrixXd& outbar, Eigen::VectorXd& grad) const {
    const Index rows = static_cast<Index>(layer.out());
    const Index cols = static_cast<Index>(layer.in());
    const int blocks = square_blocks(rows, cols);
    // row-major dW(i, k) = sum_j outbar(i, j) in(k, j) is column-major sum_j in outbar^T
    if (blocks == 1)
        square_outer<1>(in.data(), outbar.data(), grad.data() + offset, in.cols());
    else if (blocks == 2)
        square_outer<2>(in.data(), outbar.data(), grad.data() + offset, in.cols());
    else {
        Eigen::Map<WeightMatrix> gw(grad.data() + offset, rows, cols);
        gw.noalias() += outbar * in.transpose();
    }
    grad.segment(static_cast<Index>(offset) + rows * cols, rows) +=
        outbar.leftCols(static_cast<Index>(n_)).rowwise().sum();
}

void BatchEvaluator::activate(const Eigen::MatrixXd& z, Eigen::MatrixXd& a, ActCache& cache) const {
    const Index rows = z.rows();
    const Index n = static_cast<Index>(n_);
    const std::size_t E = static_cast<std::size_t>(rows * n);
    const Activation act = net_->arch().activation;
    const bool sine = act == Activation::sin;
    a.resize(rows, z.cols());
    cache.f1.resize(rows, n);
    if (sine) {
        cache.f0.resize(rows, n);
    } else {
        cache.f2.resize(rows, n);
        cache.f3.resize(rows, n);
    }
    const ActPtrs f{cache.f0.data(), cache.f1.data(), cache.f2.data(), cache.f3.data()};
    dispatch(net_->dim(), order_, [&](auto dim, auto order) {
        if (sine)
            activate_sin<decltype(dim)::value, decltype(order)::value>(z.data(), a.data(), f, E);
        else
            activate_generic<decltype(dim)::value, decltype(order)::value>(act, z.data(), a.data(), f, E);
    });
}

void BatchEvaluator::activate_adjoint(const Eigen::MatrixXd& z, const Eigen::MatrixXd& abar,
                                      const ActCache& cache, Eigen::MatrixXd& zbar) const {
    const std::size_t E = static_cast<std::size_t>(z.rows()) * n_;
    zbar.resize(z.rows(), z.cols());
    const bool sine = net_->arch().activation == Activation::sin;
    const ActView f{cache.f0.data(), cache.f1.data(), cache.f2.data(), cache.f3.data()};
    dispatch(net_->dim(), order_, [&](auto dim, auto order) {
        adjoint<decltype(dim)::value, decltype(order)::value>(sine, z.data(), abar.data(), zbar.data(), f, E);
    });
}

void BatchEvaluator::forward(const Eigen::MatrixXd& points, int order) {
    const std::size_t d = net_->dim();
    if (static_cast<std::size_t>(points.rows()) != d)
        throw StructuralError("point matrix rows must equal the network dimension");
    order_ = order;
    c_ = jet_components(d, order);
    n_ = static_cast<std::size_t>(points.cols());
    const Index n = static_cast<Index>(n_);

    seed_.resize(static_cast<Index>(d), static_cast<Index>(c_) * n);
    seed_.setZero();
    seed_.leftCols(n) = points;
    if (order >= 1)
        for (std::size_t i = 0; i < d; ++i) seed_.block(static_cast<Index>(i), static_cast<Index>(1 + i) * n, 1, n).setOnes();

    blocks_.resize(net_->blocks().size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const ResNetBlock& blk = net_->blocks()[b];
        BlockCache& cache = blocks_[b];
        const Eigen::MatrixXd& in = block_input(b);
        linear(blk.first, in, cache.z1);
        activate(cache.z1, cache.a1, cache.act1);
        linear(blk.second, cache.a1, cache.z2);
        activate(cache.z2, cache.out, cache.act2);
        // identity shortcut; the first block zero-pads its d-dimensional input
        cache.out.topRows(in.rows()) += in;
    }
    linear(net_->head(), blocks_.back().out, head_out_);
}

void BatchEvaluator::backward(const Eigen::MatrixXd& head_adjoint, Eigen::VectorXd& grad) const {
    if (head_adjoint.rows() != head_out_.rows() || head_adjoint.cols() != head_out_.cols())
        throw StructuralError("head adjoint shape does not match the last forward pass");
    if (static_cast<std::size_t>(grad.size()) != net_->parameter_count())
        throw StructuralError("gradient length does not match the network parameter count");

    const std::size_t n_layers = offsets_.size();
    linear_adjoint(net_->head(), offsets_[n_layers - 1], blocks_.back().out, head_adjoint, grad);
    transposed(net_->head(), head_adjoint, tbar_);

    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const ResNetBlock& blk = net_->blocks()[b];
        const BlockCache& cache = blocks_[b];
        activate_adjoint(cache.z2, tbar_, cache.act2, zbar_);
        linear_adjoint(blk.second, offsets_[2 * b + 1], cache.a1, zbar_, grad);
        transposed(blk.second, zbar_, abar_);
        activate_adjoint(cache.z1, abar_, cache.act1, zbar_);
        linear_adjoint(blk.first, offsets_[2 * b], block_input(b), zbar_, grad);
        if (b == 0) break;
        // shortcut adjoint plus the residual branch
        transposed(blk.first, zbar_, abar_);
        tbar_ += abar_;
    }
}

}  // namespace vpvnet
