#pragma once

// Dense-tensor arithmetic with tape-based reverse-mode differentiation.
// Only the operation set the model needs: matmul, broadcast elementwise,
// layernorm, reductions, softmax, and a few gather/assemble kernels.
// Templated on the scalar type: float for training, double for the
// finite-difference verification suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace loco {

inline int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int s : shape) n *= s;
    return n;
}

template <class Real>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<Real>> data;
    std::shared_ptr<std::vector<Real>> grad;  // allocated iff requires_grad
    bool requires_grad = false;

    TensorT() = default;

    int numel() const { return data ? static_cast<int>(data->size()) : 0; }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rows() const { return ndim() >= 1 ? shape[0] : 1; }
    int cols() const { return ndim() >= 2 ? shape[1] : 1; }

    Real* ptr() { return data->data(); }
    const Real* ptr() const { return data->data(); }
    Real& operator[](int i) { return (*data)[static_cast<size_t>(i)]; }
    Real operator[](int i) const { return (*data)[static_cast<size_t>(i)]; }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), Real(0));
    }

    static TensorT zeros(std::vector<int> shape) {
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<Real>>(static_cast<size_t>(shape_numel(t.shape)), Real(0));
        return t;
    }

    static TensorT from(std::vector<int> shape, std::vector<Real> values) {
        if (shape_numel(shape) != static_cast<int>(values.size()))
            throw std::invalid_argument("tensor: shape/data size mismatch");
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<Real>>(std::move(values));
        return t;
    }

    static TensorT scalar(Real v) { return from({1}, {v}); }

    // Learnable leaf with a persistent gradient buffer.
    static TensorT param(std::vector<int> shape, std::vector<Real> values) {
        TensorT t = from(std::move(shape), std::move(values));
        t.requires_grad = true;
        t.grad = std::make_shared<std::vector<Real>>(t.data->size(), Real(0));
        return t;
    }

    static TensorT param_zeros(std::vector<int> shape) {
        TensorT t = zeros(std::move(shape));
        t.requires_grad = true;
        t.grad = std::make_shared<std::vector<Real>>(t.data->size(), Real(0));
        return t;
    }
};

template <class Real>
TensorT<Real> gaussian_param(std::vector<int> shape, Real std, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, double(std));
    std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = Real(dist(rng));
    return TensorT<Real>::param(std::move(shape), std::move(v));
}

template <class Real>
inline void check_finite(const TensorT<Real>& t, const char* where) {
    for (Real v : *t.data)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value produced by ") + where);
}

// Records backward closures in forward order; backward() replays in reverse.
template <class Real>
class TapeT {
  public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    size_t size() const { return nodes_.size(); }

    void backward(TensorT<Real>& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar");
        if (consumed_)
            throw std::runtime_error("backward: tape already consumed");
        if (!loss.grad)
            throw std::invalid_argument("backward: loss does not require grad");
        consumed_ = true;
        (*loss.grad)[0] = Real(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

  private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

namespace detail {

template <class Real>
inline TensorT<Real> make_output(TapeT<Real>* tape, std::vector<int> shape, bool needs_grad) {
    TensorT<Real> out = TensorT<Real>::zeros(std::move(shape));
    if (tape && needs_grad) {
        out.requires_grad = true;
        out.grad = std::make_shared<std::vector<Real>>(out.data->size(), Real(0));
    }
    return out;
}

template <class Real>
inline bool tracked(TapeT<Real>* tape, const TensorT<Real>& t) {
    return tape != nullptr && t.requires_grad;
}

// Strides for broadcasting b against a result shape; broadcast dims get stride 0.
inline std::vector<int64_t> bcast_strides(const std::vector<int>& shape,
                                          const std::vector<int>& out_shape) {
    const int od = static_cast<int>(out_shape.size());
    const int sd = static_cast<int>(shape.size());
    std::vector<int64_t> strides(static_cast<size_t>(od), 0);
    int64_t s = 1;
    for (int i = sd - 1; i >= 0; --i) {
        const int oi = od - (sd - i);
        const int dim = shape[static_cast<size_t>(i)];
        const int odim = out_shape[static_cast<size_t>(oi)];
        if (dim != odim && dim != 1)
            throw std::invalid_argument("broadcast: incompatible shapes");
        strides[static_cast<size_t>(oi)] = (dim == 1 && odim != 1) ? 0 : s;
        s *= dim;
    }
    return strides;
}

inline std::vector<int> bcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
    const int od = std::max(static_cast<int>(a.size()), static_cast<int>(b.size()));
    std::vector<int> out(static_cast<size_t>(od), 1);
    for (int i = 0; i < od; ++i) {
        const int ai = static_cast<int>(a.size()) - od + i;
        const int bi = static_cast<int>(b.size()) - od + i;
        const int av = ai >= 0 ? a[static_cast<size_t>(ai)] : 1;
        const int bv = bi >= 0 ? b[static_cast<size_t>(bi)] : 1;
        if (av != bv && av != 1 && bv != 1)
            throw std::invalid_argument("broadcast: incompatible shapes");
        out[static_cast<size_t>(i)] = std::max(av, bv);
    }
    return out;
}

// Walk every linear index of out_shape together with the (possibly broadcast)
// source offsets of a and b.
template <class Fn>
inline void bcast_iterate(const std::vector<int>& out_shape,
                          const std::vector<int64_t>& sa,
                          const std::vector<int64_t>& sb, Fn&& fn) {
    const int nd = static_cast<int>(out_shape.size());
    const int64_t n = shape_numel(out_shape);
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t lin = 0; lin < n; ++lin) {
        fn(lin, oa, ob);
        for (int d = nd - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)]++;
            oa += sa[static_cast<size_t>(d)];
            ob += sb[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
            oa -= int64_t(idx[static_cast<size_t>(d)]) * sa[static_cast<size_t>(d)];
            ob -= int64_t(idx[static_cast<size_t>(d)]) * sb[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul

template <class Real>
TensorT<Real> matmul(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: shape mismatch");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, {m, n}, ng);
    const Real* pa = a.ptr();
    const Real* pb = b.ptr();
    Real* po = out.ptr();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const Real av = pa[i * k + kk];
            const Real* brow = pb + kk * n;
            Real* orow = po + i * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite(out, "matmul");
    if (ng) {
        tape->record([a, b, out, m, k, n]() {
            const Real* go = out.grad->data();
            if (a.grad) {
                Real* ga = a.grad->data();
                const Real* pb2 = b.ptr();
#pragma omp parallel for schedule(static)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const Real g = go[i * n + j];
                        for (int kk = 0; kk < k; ++kk) ga[i * k + kk] += g * pb2[kk * n + j];
                    }
            }
            if (b.grad) {
                Real* gb = b.grad->data();
                const Real* pa2 = a.ptr();
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        const Real av = pa2[i * k + kk];
                        const Real* grow = go + i * n;
                        Real* brow = gb + kk * n;
                        for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                    }
            }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> transpose(TapeT<Real>* tape, const TensorT<Real>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("transpose: expects 2-d");
    const int m = a.rows(), n = a.cols();
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, {n, m}, ng);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out.data)[j * m + i] = (*a.data)[i * n + j];
    if (ng) {
        tape->record([a, out, m, n]() {
            Real* ga = a.grad->data();
            const Real* go = out.grad->data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
        });
    }
    return out;
}

// Batched matmul over flat (batch, m, k) x (batch, k, n) layouts.
// transpose_b treats b as (batch, n, k).
template <class Real>
TensorT<Real> bmm(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b,
                  int batch, int m, int k, int n, bool transpose_b = false) {
    if (a.numel() != batch * m * k || b.numel() != batch * k * n)
        throw std::invalid_argument("bmm: shape mismatch");
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, {batch * m, n}, ng);
    const Real* pa = a.ptr();
    const Real* pb = b.ptr();
    Real* po = out.ptr();
#pragma omp parallel for schedule(static)
    for (int s = 0; s < batch; ++s) {
        const Real* as = pa + int64_t(s) * m * k;
        const Real* bs = pb + int64_t(s) * k * n;
        Real* os = po + int64_t(s) * m * n;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                Real acc = 0;
                if (transpose_b)
                    for (int kk = 0; kk < k; ++kk) acc += as[i * k + kk] * bs[j * k + kk];
                else
                    for (int kk = 0; kk < k; ++kk) acc += as[i * k + kk] * bs[kk * n + j];
                os[i * n + j] = acc;
            }
    }
    check_finite(out, "bmm");
    if (ng) {
        tape->record([a, b, out, batch, m, k, n, transpose_b]() {
            const Real* go = out.grad->data();
            for (int s = 0; s < batch; ++s) {
                const Real* as = a.ptr() + int64_t(s) * m * k;
                const Real* bs = b.ptr() + int64_t(s) * k * n;
                const Real* gs = go + int64_t(s) * m * n;
                Real* gas = a.grad ? a.grad->data() + int64_t(s) * m * k : nullptr;
                Real* gbs = b.grad ? b.grad->data() + int64_t(s) * k * n : nullptr;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const Real g = gs[i * n + j];
                        for (int kk = 0; kk < k; ++kk) {
                            const int bo = transpose_b ? j * k + kk : kk * n + j;
                            if (gas) gas[i * k + kk] += g * bs[bo];
                            if (gbs) gbs[bo] += g * as[i * k + kk];
                        }
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// broadcast binary ops

enum class BinOp { Add, Sub, Mul };

template <class Real>
TensorT<Real> binary(TapeT<Real>* tape, BinOp op, const TensorT<Real>& a, const TensorT<Real>& b) {
    const std::vector<int> oshape = detail::bcast_shape(a.shape, b.shape);
    const auto sa = detail::bcast_strides(a.shape, oshape);
    const auto sb = detail::bcast_strides(b.shape, oshape);
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, oshape, ng);
    const Real* pa = a.ptr();
    const Real* pb = b.ptr();
    Real* po = out.ptr();
    detail::bcast_iterate(oshape, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
        switch (op) {
            case BinOp::Add: po[lin] = pa[oa] + pb[ob]; break;
            case BinOp::Sub: po[lin] = pa[oa] - pb[ob]; break;
            case BinOp::Mul: po[lin] = pa[oa] * pb[ob]; break;
        }
    });
    check_finite(out, "binary");
    if (ng) {
        tape->record([op, a, b, out, oshape, sa, sb]() {
            const Real* go = out.grad->data();
            const Real* pa2 = a.ptr();
            const Real* pb2 = b.ptr();
            Real* ga = a.grad ? a.grad->data() : nullptr;
            Real* gb = b.grad ? b.grad->data() : nullptr;
            detail::bcast_iterate(oshape, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
                const Real g = go[lin];
                switch (op) {
                    case BinOp::Add:
                        if (ga) ga[oa] += g;
                        if (gb) gb[ob] += g;
                        break;
                    case BinOp::Sub:
                        if (ga) ga[oa] += g;
                        if (gb) gb[ob] -= g;
                        break;
                    case BinOp::Mul:
                        if (ga) ga[oa] += g * pb2[ob];
                        if (gb) gb[ob] += g * pa2[oa];
                        break;
                }
            });
        });
    }
    return out;
}

template <class Real>
TensorT<Real> add(TapeT<Real>* t, const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary(t, BinOp::Add, a, b);
}
template <class Real>
TensorT<Real> sub(TapeT<Real>* t, const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary(t, BinOp::Sub, a, b);
}
template <class Real>
TensorT<Real> mul(TapeT<Real>* t, const TensorT<Real>& a, const TensorT<Real>& b) {
    return binary(t, BinOp::Mul, a, b);
}

// ---------------------------------------------------------------------------
// unary elementwise ops

enum class UnOp { Exp, Tanh, Softplus, Sigmoid, Relu, Neg, Square };

template <class Real>
TensorT<Real> unary(TapeT<Real>* tape, UnOp op, const TensorT<Real>& a) {
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, a.shape, ng);
    const int n = a.numel();
    const Real* pa = a.ptr();
    Real* po = out.ptr();
    for (int i = 0; i < n; ++i) {
        const Real x = pa[i];
        switch (op) {
            case UnOp::Exp: po[i] = std::exp(x); break;
            case UnOp::Tanh: po[i] = std::tanh(x); break;
            case UnOp::Softplus:
                // log(1+e^x), overflow-safe
                po[i] = x > Real(20) ? x : std::log1p(std::exp(x));
                break;
            case UnOp::Sigmoid: po[i] = Real(1) / (Real(1) + std::exp(-x)); break;
            case UnOp::Relu: po[i] = x > Real(0) ? x : Real(0); break;
            case UnOp::Neg: po[i] = -x; break;
            case UnOp::Square: po[i] = x * x; break;
        }
    }
    check_finite(out, "unary");
    if (ng) {
        tape->record([op, a, out, n]() {
            const Real* go = out.grad->data();
            const Real* px = a.ptr();
            const Real* py = out.ptr();
            Real* ga = a.grad->data();
            for (int i = 0; i < n; ++i) {
                Real d = 0;
                switch (op) {
                    case UnOp::Exp: d = py[i]; break;
                    case UnOp::Tanh: d = Real(1) - py[i] * py[i]; break;
                    case UnOp::Softplus: d = Real(1) / (Real(1) + std::exp(-px[i])); break;
                    case UnOp::Sigmoid: d = py[i] * (Real(1) - py[i]); break;
                    case UnOp::Relu: d = px[i] > Real(0) ? Real(1) : Real(0); break;
                    case UnOp::Neg: d = Real(-1); break;
                    case UnOp::Square: d = Real(2) * px[i]; break;
                }
                ga[i] += go[i] * d;
            }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> uexp(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Exp, a); }
template <class Real>
TensorT<Real> utanh(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Tanh, a); }
template <class Real>
TensorT<Real> softplus(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Softplus, a); }
template <class Real>
TensorT<Real> sigmoid(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Sigmoid, a); }
template <class Real>
TensorT<Real> relu(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Relu, a); }
template <class Real>
TensorT<Real> neg(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Neg, a); }
template <class Real>
TensorT<Real> square(TapeT<Real>* t, const TensorT<Real>& a) { return unary(t, UnOp::Square, a); }

template <class Real>
TensorT<Real> scale(TapeT<Real>* tape, const TensorT<Real>& a, Real c) {
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, a.shape, ng);
    const int n = a.numel();
    for (int i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * c;
    check_finite(out, "scale");
    if (ng) {
        tape->record([a, out, c, n]() {
            Real* ga = a.grad->data();
            const Real* go = out.grad->data();
            for (int i = 0; i < n; ++i) ga[i] += go[i] * c;
        });
    }
    return out;
}

template <class Real>
TensorT<Real> add_scalar(TapeT<Real>* tape, const TensorT<Real>& a, Real c) {
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, a.shape, ng);
    const int n = a.numel();
    for (int i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + c;
    if (ng) {
        tape->record([a, out, n]() {
            Real* ga = a.grad->data();
            const Real* go = out.grad->data();
            for (int i = 0; i < n; ++i) ga[i] += go[i];
        });
    }
    return out;
}

// Clamp; gradient is zero where the bound is active (also serves as PPO clip).
template <class Real>
TensorT<Real> clamp(TapeT<Real>* tape, const TensorT<Real>& a, Real lo, Real hi) {
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, a.shape, ng);
    const int n = a.numel();
    for (int i = 0; i < n; ++i) (*out.data)[i] = std::min(hi, std::max(lo, (*a.data)[i]));
    if (ng) {
        tape->record([a, out, lo, hi, n]() {
            Real* ga = a.grad->data();
            const Real* go = out.grad->data();
            const Real* px = a.ptr();
            for (int i = 0; i < n; ++i)
                if (px[i] > lo && px[i] < hi) ga[i] += go[i];
        });
    }
    return out;
}

// Elementwise min; ties route the gradient to a.
template <class Real>
TensorT<Real> minimum(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape != b.shape) throw std::invalid_argument("minimum: shape mismatch");
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, a.shape, ng);
    const int n = a.numel();
    for (int i = 0; i < n; ++i) (*out.data)[i] = std::min((*a.data)[i], (*b.data)[i]);
    if (ng) {
        tape->record([a, b, out, n]() {
            const Real* go = out.grad->data();
            const Real* pa = a.ptr();
            const Real* pb = b.ptr();
            for (int i = 0; i < n; ++i) {
                if (pa[i] <= pb[i]) {
                    if (a.grad) (*a.grad)[i] += go[i];
                } else if (b.grad) {
                    (*b.grad)[i] += go[i];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions

// axis == -1: reduce everything to a scalar. Summation order is fixed.
template <class Real>
TensorT<Real> reduce_sum(TapeT<Real>* tape, const TensorT<Real>& a, int axis = -1) {
    if (a.numel() == 0) throw std::invalid_argument("reduce: empty input");
    const bool ng = detail::tracked(tape, a);
    if (axis < 0) {
        TensorT<Real> out = detail::make_output(tape, {1}, ng);
        Real acc = 0;
        for (int i = 0; i < a.numel(); ++i) acc += (*a.data)[i];
        (*out.data)[0] = acc;
        check_finite(out, "reduce_sum");
        if (ng) {
            tape->record([a, out]() {
                const Real g = (*out.grad)[0];
                for (auto& v : *a.grad) v += g;
            });
        }
        return out;
    }
    if (axis >= a.ndim()) throw std::invalid_argument("reduce: bad axis");
    // outer x axis x inner
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    const int ax = a.dim(axis);
    for (int i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    std::vector<int> oshape = a.shape;
    oshape.erase(oshape.begin() + axis);
    if (oshape.empty()) oshape = {1};
    TensorT<Real> out = detail::make_output(tape, oshape, ng);
    for (int o = 0; o < outer; ++o)
        for (int i = 0; i < inner; ++i) {
            Real acc = 0;
            for (int k = 0; k < ax; ++k) acc += (*a.data)[(o * ax + k) * inner + i];
            (*out.data)[o * inner + i] = acc;
        }
    check_finite(out, "reduce_sum");
    if (ng) {
        tape->record([a, out, outer, ax, inner]() {
            const Real* go = out.grad->data();
            Real* ga = a.grad->data();
            for (int o = 0; o < outer; ++o)
                for (int k = 0; k < ax; ++k)
                    for (int i = 0; i < inner; ++i)
                        ga[(o * ax + k) * inner + i] += go[o * inner + i];
        });
    }
    return out;
}

template <class Real>
TensorT<Real> reduce_mean(TapeT<Real>* tape, const TensorT<Real>& a, int axis = -1) {
    const int count = axis < 0 ? a.numel() : a.dim(axis);
    TensorT<Real> s = reduce_sum(tape, a, axis);
    return scale(tape, s, Real(1) / Real(count));
}

// ---------------------------------------------------------------------------
// row-wise layernorm and softmax (last dimension)

template <class Real>
TensorT<Real> layernorm(TapeT<Real>* tape, const TensorT<Real>& x, const TensorT<Real>& gain,
                        const TensorT<Real>& bias, Real eps = Real(1e-5)) {
    if (x.ndim() < 1) throw std::invalid_argument("layernorm: need at least 1-d");
    const int d = x.dim(x.ndim() - 1);
    if (d < 2) throw std::invalid_argument("layernorm: normalized axis must have >= 2 elements");
    if (gain.numel() != d || bias.numel() != d)
        throw std::invalid_argument("layernorm: gain/bias size mismatch");
    if (eps <= Real(0)) throw std::invalid_argument("layernorm: eps must be positive");
    const int rows = x.numel() / d;
    const bool ng = detail::tracked(tape, x) || detail::tracked(tape, gain) || detail::tracked(tape, bias);
    TensorT<Real> out = detail::make_output(tape, x.shape, ng);
    // saved normalized values and inverse stds for backward
    auto xhat = std::make_shared<std::vector<Real>>(static_cast<size_t>(x.numel()));
    auto istd = std::make_shared<std::vector<Real>>(static_cast<size_t>(rows));
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const Real* px = x.ptr() + r * d;
        Real mean = 0;
        for (int j = 0; j < d; ++j) mean += px[j];
        mean /= Real(d);
        Real var = 0;
        for (int j = 0; j < d; ++j) {
            const Real c = px[j] - mean;
            var += c * c;
        }
        var /= Real(d);
        const Real is = Real(1) / std::sqrt(var + eps);
        (*istd)[static_cast<size_t>(r)] = is;
        for (int j = 0; j < d; ++j) {
            const Real h = (px[j] - mean) * is;
            (*xhat)[static_cast<size_t>(r * d + j)] = h;
            (*out.data)[r * d + j] = h * (*gain.data)[j] + (*bias.data)[j];
        }
    }
    check_finite(out, "layernorm");
    if (ng) {
        tape->record([x, gain, bias, out, xhat, istd, rows, d]() {
            const Real* go = out.grad->data();
            for (int r = 0; r < rows; ++r) {
                const Real* h = xhat->data() + r * d;
                const Real* g = go + r * d;
                if (gain.grad)
                    for (int j = 0; j < d; ++j) (*gain.grad)[j] += g[j] * h[j];
                if (bias.grad)
                    for (int j = 0; j < d; ++j) (*bias.grad)[j] += g[j];
                if (x.grad) {
                    // dL/dx through the full normalization Jacobian
                    Real sum_gg = 0, sum_ggh = 0;
                    for (int j = 0; j < d; ++j) {
                        const Real gg = g[j] * (*gain.data)[j];
                        sum_gg += gg;
                        sum_ggh += gg * h[j];
                    }
                    const Real is = (*istd)[static_cast<size_t>(r)];
                    Real* gx = x.grad->data() + r * d;
                    for (int j = 0; j < d; ++j) {
                        const Real gg = g[j] * (*gain.data)[j];
                        gx[j] += is * (gg - sum_gg / Real(d) - h[j] * sum_ggh / Real(d));
                    }
                }
            }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> softmax_rows(TapeT<Real>* tape, const TensorT<Real>& x) {
    if (x.ndim() < 1) throw std::invalid_argument("softmax: need at least 1-d");
    const int d = x.dim(x.ndim() - 1);
    const int rows = x.numel() / d;
    const bool ng = detail::tracked(tape, x);
    TensorT<Real> out = detail::make_output(tape, x.shape, ng);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const Real* px = x.ptr() + r * d;
        Real* po = out.ptr() + r * d;
        Real mx = px[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, px[j]);
        Real z = 0;
        for (int j = 0; j < d; ++j) {
            po[j] = std::exp(px[j] - mx);
            z += po[j];
        }
        for (int j = 0; j < d; ++j) po[j] /= z;
    }
    check_finite(out, "softmax");
    if (ng) {
        tape->record([x, out, rows, d]() {
            const Real* go = out.grad->data();
            const Real* py = out.ptr();
            Real* gx = x.grad->data();
            for (int r = 0; r < rows; ++r) {
                Real dot = 0;
                for (int j = 0; j < d; ++j) dot += go[r * d + j] * py[r * d + j];
                for (int j = 0; j < d; ++j)
                    gx[r * d + j] += py[r * d + j] * (go[r * d + j] - dot);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// gather-style structural ops

// Select rows of `src` by index; backward scatter-adds.
template <class Real>
TensorT<Real> gather_rows(TapeT<Real>* tape, const TensorT<Real>& src, std::vector<int> index) {
    if (src.ndim() != 2) throw std::invalid_argument("gather_rows: expects 2-d");
    const int d = src.cols();
    const int m = static_cast<int>(index.size());
    for (int i : index)
        if (i < 0 || i >= src.rows()) throw std::invalid_argument("gather_rows: index out of range");
    const bool ng = detail::tracked(tape, src);
    TensorT<Real> out = detail::make_output(tape, {m, d}, ng);
    for (int i = 0; i < m; ++i)
        std::copy_n(src.ptr() + index[static_cast<size_t>(i)] * d, d, out.ptr() + i * d);
    if (ng) {
        tape->record([src, out, index, m, d]() {
            const Real* go = out.grad->data();
            Real* gs = src.grad->data();
            for (int i = 0; i < m; ++i) {
                Real* dst = gs + index[static_cast<size_t>(i)] * d;
                const Real* g = go + i * d;
                for (int j = 0; j < d; ++j) dst[j] += g[j];
            }
        });
    }
    return out;
}

// Vertical concatenation of two row blocks.
template <class Real>
TensorT<Real> concat_rows(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
        throw std::invalid_argument("concat_rows: shape mismatch");
    const int d = a.cols();
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, {a.rows() + b.rows(), d}, ng);
    std::copy_n(a.ptr(), a.numel(), out.ptr());
    std::copy_n(b.ptr(), b.numel(), out.ptr() + a.numel());
    if (ng) {
        tape->record([a, b, out]() {
            const Real* go = out.grad->data();
            if (a.grad)
                for (int i = 0; i < a.numel(); ++i) (*a.grad)[i] += go[i];
            if (b.grad)
                for (int i = 0; i < b.numel(); ++i) (*b.grad)[i] += go[a.numel() + i];
        });
    }
    return out;
}

// Horizontal concatenation of two column blocks.
template <class Real>
TensorT<Real> concat_cols(TapeT<Real>* tape, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows())
        throw std::invalid_argument("concat_cols: shape mismatch");
    const int m = a.rows(), ca = a.cols(), cb = b.cols();
    const bool ng = detail::tracked(tape, a) || detail::tracked(tape, b);
    TensorT<Real> out = detail::make_output(tape, {m, ca + cb}, ng);
    for (int i = 0; i < m; ++i) {
        std::copy_n(a.ptr() + i * ca, ca, out.ptr() + i * (ca + cb));
        std::copy_n(b.ptr() + i * cb, cb, out.ptr() + i * (ca + cb) + ca);
    }
    if (ng) {
        tape->record([a, b, out, m, ca, cb]() {
            const Real* go = out.grad->data();
            for (int i = 0; i < m; ++i) {
                if (a.grad)
                    for (int j = 0; j < ca; ++j) (*a.grad)[i * ca + j] += go[i * (ca + cb) + j];
                if (b.grad)
                    for (int j = 0; j < cb; ++j) (*b.grad)[i * cb + j] += go[i * (ca + cb) + ca + j];
            }
        });
    }
    return out;
}

// Repeat a (k x d) block `reps` times along rows; backward sums over repeats.
template <class Real>
TensorT<Real> tile_rows(TapeT<Real>* tape, const TensorT<Real>& a, int reps) {
    if (a.ndim() != 2) throw std::invalid_argument("tile_rows: expects 2-d");
    const int k = a.rows(), d = a.cols();
    const bool ng = detail::tracked(tape, a);
    TensorT<Real> out = detail::make_output(tape, {k * reps, d}, ng);
    for (int r = 0; r < reps; ++r) std::copy_n(a.ptr(), a.numel(), out.ptr() + r * k * d);
    if (ng) {
        tape->record([a, out, reps, k, d]() {
            const Real* go = out.grad->data();
            Real* ga = a.grad->data();
            for (int r = 0; r < reps; ++r)
                for (int i = 0; i < k * d; ++i) ga[i] += go[r * k * d + i];
        });
    }
    return out;
}

}  // namespace loco
