#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "omoq/errors.hpp"
#include "omoq/kernels.hpp"
#include "omoq/rng.hpp"

namespace omoq {

// Dense row-major n-d array.
template <typename T>
struct Array {
    std::vector<size_t> shape;
    std::vector<T> data;

    Array() = default;
    explicit Array(std::vector<size_t> s, T fill = T(0))
        : shape(std::move(s)), data(numel_of(shape), fill) {}

    static size_t numel_of(const std::vector<size_t>& s) {
        size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }
    static Array scalar(T v) {
        Array a({1});
        a.data[0] = v;
        return a;
    }

    size_t numel() const { return data.size(); }
    size_t ndim() const { return shape.size(); }
    size_t dim(size_t i) const { return shape[i]; }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    bool same_shape(const Array& o) const { return shape == o.shape; }
};

template <typename T>
struct Node {
    Array<T> value;
    Array<T> grad;
    bool requires_grad = false;
    bool grad_ready = false;

    void ensure_grad() {
        if (!grad_ready) {
            grad.shape = value.shape;
            grad.data.assign(value.numel(), T(0));
            grad_ready = true;
        }
    }
    void zero_grad() {
        if (grad_ready) std::fill(grad.data.begin(), grad.data.end(), T(0));
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Handle to a graph value. Parameters are Vars with requires_grad set; they
// outlive any single graph and accumulate gradients across backward calls
// until zero_grad.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Array<T> v, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(v);
        node_->requires_grad = requires_grad;
    }

    bool defined() const { return node_ != nullptr; }
    const Array<T>& value() const { return node_->value; }
    Array<T>& value() { return node_->value; }
    const Array<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() { node_->zero_grad(); }
    const NodePtr<T>& node() const { return node_; }
    NodePtr<T>& node() { return node_; }

private:
    NodePtr<T> node_;
};

// Records backward closures in forward execution order; running them in
// reverse visits the DAG in reverse topological order exactly once.
template <typename T>
class Graph {
public:
    bool recording = true;
    bool training = false;
    Rng* rng = nullptr; // required only when dropout runs in training mode

    void record(std::function<void()> fn) {
        if (recording) tape_.push_back(std::move(fn));
    }

    void backward(const Var<T>& loss) {
        require(loss.defined(), "backward: undefined loss");
        require(loss.value().numel() == 1, "backward: loss must be scalar");
        require(!tape_.empty(), "backward: no recorded graph (re-run forward first)");
        auto& node = *loss.node();
        node.ensure_grad();
        node.grad.data[0] = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
        tape_.clear();
    }

    void clear() { tape_.clear(); }
    size_t tape_size() const { return tape_.size(); }

private:
    std::vector<std::function<void()>> tape_;
};

namespace detail {

template <typename T>
NodePtr<T> make_output(Array<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
Var<T> wrap(NodePtr<T> n) {
    Var<T> v;
    v.node() = std::move(n);
    return v;
}

inline void check(bool ok, const std::string& what) {
    if (!ok) fail("tensor: " + what);
}

} // namespace detail

template <typename T>
Var<T> constant(Array<T> v) {
    return Var<T>(std::move(v), false);
}

// ---- elementwise ----

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    detail::check(a.value().same_shape(b.value()), "add: shape mismatch");
    Array<T> out = a.value();
    kernels::vadd(out.numel(), a.value().ptr(), b.value().ptr(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad() || b.requires_grad());
    auto an = a.node(), bn = b.node();
    g.record([an, bn, on]() {
        if (!on->grad_ready) return;
        const size_t n = on->grad.numel();
        if (an->requires_grad) {
            an->ensure_grad();
            kernels::axpy(n, T(1), on->grad.ptr(), an->grad.ptr());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            kernels::axpy(n, T(1), on->grad.ptr(), bn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    detail::check(a.value().same_shape(b.value()), "sub: shape mismatch");
    Array<T> out = a.value();
    kernels::vsub(out.numel(), a.value().ptr(), b.value().ptr(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad() || b.requires_grad());
    auto an = a.node(), bn = b.node();
    g.record([an, bn, on]() {
        if (!on->grad_ready) return;
        const size_t n = on->grad.numel();
        if (an->requires_grad) {
            an->ensure_grad();
            kernels::axpy(n, T(1), on->grad.ptr(), an->grad.ptr());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            kernels::axpy(n, T(-1), on->grad.ptr(), bn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    detail::check(a.value().same_shape(b.value()), "mul: shape mismatch");
    Array<T> out = a.value();
    kernels::vmul(out.numel(), a.value().ptr(), b.value().ptr(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad() || b.requires_grad());
    auto an = a.node(), bn = b.node();
    g.record([an, bn, on]() {
        if (!on->grad_ready) return;
        const size_t n = on->grad.numel();
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < n; ++i) an->grad.data[i] += on->grad.data[i] * bn->value.data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < n; ++i) bn->grad.data[i] += on->grad.data[i] * an->value.data[i];
        }
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& a, T alpha) {
    Array<T> out = a.value();
    kernels::vscale(out.numel(), alpha, a.value().ptr(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on, alpha]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        kernels::axpy(on->grad.numel(), alpha, on->grad.ptr(), an->grad.ptr());
    });
    return detail::wrap(on);
}

// ---- activations ----

template <typename T>
Var<T> relu(Graph<T>& g, const Var<T>& a) {
    Array<T> out = a.value();
    kernels::relu_fwd(out.numel(), a.value().ptr(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        kernels::relu_bwd(on->grad.numel(), on->value.ptr(), on->grad.ptr(), an->grad.ptr());
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& a) {
    Array<T> out = a.value();
    for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        const size_t n = on->grad.numel();
        for (size_t i = 0; i < n; ++i) {
            const T y = on->value.data[i];
            an->grad.data[i] += on->grad.data[i] * y * (T(1) - y);
        }
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> tanh_op(Graph<T>& g, const Var<T>& a) {
    Array<T> out = a.value();
    for (auto& v : out.data) v = std::tanh(v);
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        const size_t n = on->grad.numel();
        for (size_t i = 0; i < n; ++i) {
            const T y = on->value.data[i];
            an->grad.data[i] += on->grad.data[i] * (T(1) - y * y);
        }
    });
    return detail::wrap(on);
}

// Inverted dropout: train mode zeros with probability p and scales survivors
// by 1/(1-p); eval mode is the identity.
template <typename T>
Var<T> dropout(Graph<T>& g, const Var<T>& a, double p) {
    detail::check(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
    if (!g.training || p == 0.0) {
        Array<T> out = a.value();
        auto on = detail::make_output(std::move(out), a.requires_grad());
        auto an = a.node();
        g.record([an, on]() {
            if (!on->grad_ready || !an->requires_grad) return;
            an->ensure_grad();
            kernels::axpy(on->grad.numel(), T(1), on->grad.ptr(), an->grad.ptr());
        });
        return detail::wrap(on);
    }
    require(g.rng != nullptr, "dropout: training mode requires a graph rng");
    const size_t n = a.value().numel();
    auto mask = std::make_shared<std::vector<T>>(n);
    const T keep_scale = T(1.0 / (1.0 - p));
    for (size_t i = 0; i < n; ++i)
        (*mask)[i] = g.rng->uniform() >= p ? keep_scale : T(0);
    Array<T> out = a.value();
    kernels::vmul(n, a.value().ptr(), mask->data(), out.ptr());
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on, mask]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        const size_t m = on->grad.numel();
        for (size_t i = 0; i < m; ++i) an->grad.data[i] += on->grad.data[i] * (*mask)[i];
    });
    return detail::wrap(on);
}

// ---- linear algebra ----

template <typename T>
Var<T> matmul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    detail::check(a.value().ndim() == 2 && b.value().ndim() == 2, "matmul: expects 2-d inputs");
    const size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
    detail::check(b.value().dim(0) == k, "matmul: inner dimension mismatch");
    Array<T> out({m, n});
    kernels::gemm(false, false, m, n, k, a.value().ptr(), b.value().ptr(), out.ptr(), false);
    auto on = detail::make_output(std::move(out), a.requires_grad() || b.requires_grad());
    auto an = a.node(), bn = b.node();
    g.record([an, bn, on, m, n, k]() {
        if (!on->grad_ready) return;
        if (an->requires_grad) {
            an->ensure_grad();
            kernels::gemm(false, true, m, k, n, on->grad.ptr(), bn->value.ptr(), an->grad.ptr(), true);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            kernels::gemm(true, false, k, n, m, an->value.ptr(), on->grad.ptr(), bn->grad.ptr(), true);
        }
    });
    return detail::wrap(on);
}

// y = x * W^T (+ b). W stored [out, in]; bias optional (undefined Var skips it).
template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    detail::check(x.value().ndim() == 2 && w.value().ndim() == 2, "linear: expects 2-d x and W");
    const size_t m = x.value().dim(0), in = x.value().dim(1), out_dim = w.value().dim(0);
    detail::check(w.value().dim(1) == in, "linear: W inner dim mismatch");
    Array<T> out({m, out_dim});
    kernels::gemm(false, true, m, out_dim, in, x.value().ptr(), w.value().ptr(), out.ptr(), false);
    const bool has_bias = b.defined();
    if (has_bias) {
        detail::check(b.value().numel() == out_dim, "linear: bias size mismatch");
        for (size_t i = 0; i < m; ++i)
            kernels::vadd(out_dim, out.ptr() + i * out_dim, b.value().ptr(), out.ptr() + i * out_dim);
    }
    const bool rg = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
    auto on = detail::make_output(std::move(out), rg);
    auto xn = x.node(), wn = w.node();
    auto bn = has_bias ? b.node() : NodePtr<T>();
    g.record([xn, wn, bn, on, m, in, out_dim]() {
        if (!on->grad_ready) return;
        if (xn->requires_grad) {
            xn->ensure_grad();
            kernels::gemm(false, false, m, in, out_dim, on->grad.ptr(), wn->value.ptr(), xn->grad.ptr(), true);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            kernels::gemm(true, false, out_dim, in, m, on->grad.ptr(), xn->value.ptr(), wn->grad.ptr(), true);
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            kernels::colsum(m, out_dim, on->grad.ptr(), bn->grad.ptr(), true);
        }
    });
    return detail::wrap(on);
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(Graph<T>& g, const Var<T>& a, std::vector<size_t> shape) {
    detail::check(Array<T>::numel_of(shape) == a.value().numel(), "reshape: element count mismatch");
    Array<T> out;
    out.shape = std::move(shape);
    out.data = a.value().data;
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        kernels::axpy(on->grad.numel(), T(1), on->grad.ptr(), an->grad.ptr());
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> concat_cols(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    detail::check(a.value().ndim() == 2 && b.value().ndim() == 2, "concat: expects 2-d inputs");
    const size_t m = a.value().dim(0);
    detail::check(b.value().dim(0) == m, "concat: row count mismatch");
    const size_t na = a.value().dim(1), nb = b.value().dim(1);
    Array<T> out({m, na + nb});
    for (size_t i = 0; i < m; ++i) {
        std::memcpy(out.ptr() + i * (na + nb), a.value().ptr() + i * na, na * sizeof(T));
        std::memcpy(out.ptr() + i * (na + nb) + na, b.value().ptr() + i * nb, nb * sizeof(T));
    }
    auto on = detail::make_output(std::move(out), a.requires_grad() || b.requires_grad());
    auto an = a.node(), bn = b.node();
    g.record([an, bn, on, m, na, nb]() {
        if (!on->grad_ready) return;
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < m; ++i)
                kernels::vadd(na, an->grad.ptr() + i * na, on->grad.ptr() + i * (na + nb),
                              an->grad.ptr() + i * na);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < m; ++i)
                kernels::vadd(nb, bn->grad.ptr() + i * nb, on->grad.ptr() + i * (na + nb) + na,
                              bn->grad.ptr() + i * nb);
        }
    });
    return detail::wrap(on);
}

// Rows [r0, r1) of a 2-d input.
template <typename T>
Var<T> slice_rows(Graph<T>& g, const Var<T>& a, size_t r0, size_t r1) {
    detail::check(a.value().ndim() == 2, "slice: expects 2-d input");
    const size_t rows = a.value().dim(0), cols = a.value().dim(1);
    detail::check(r0 < r1 && r1 <= rows, "slice: bad row range");
    Array<T> out({r1 - r0, cols});
    std::memcpy(out.ptr(), a.value().ptr() + r0 * cols, (r1 - r0) * cols * sizeof(T));
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on, r0, cols]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        kernels::axpy(on->grad.numel(), T(1), on->grad.ptr(), an->grad.ptr() + r0 * cols);
    });
    return detail::wrap(on);
}

// ---- reductions & losses ----

template <typename T>
Var<T> mean_all(Graph<T>& g, const Var<T>& a) {
    const size_t n = a.value().numel();
    detail::check(n > 0, "mean: empty input");
    Array<T> out = Array<T>::scalar(kernels::vsum(n, a.value().ptr()) / static_cast<T>(n));
    auto on = detail::make_output(std::move(out), a.requires_grad());
    auto an = a.node();
    g.record([an, on, n]() {
        if (!on->grad_ready || !an->requires_grad) return;
        an->ensure_grad();
        const T gv = on->grad.data[0] / static_cast<T>(n);
        for (size_t i = 0; i < n; ++i) an->grad.data[i] += gv;
    });
    return detail::wrap(on);
}

template <typename T>
Var<T> mse_loss(Graph<T>& g, const Var<T>& pred, const Var<T>& tgt) {
    detail::check(pred.value().same_shape(tgt.value()), "mse: shape mismatch");
    const size_t n = pred.value().numel();
    detail::check(n > 0, "mse: empty input");
    Array<T> diff({n});
    kernels::vsub(n, pred.value().ptr(), tgt.value().ptr(), diff.ptr());
    Array<T> out = Array<T>::scalar(kernels::vsumsq(n, diff.ptr()) / static_cast<T>(n));
    auto on = detail::make_output(std::move(out), pred.requires_grad() || tgt.requires_grad());
    auto pn = pred.node(), tn = tgt.node();
    auto dptr = std::make_shared<Array<T>>(std::move(diff));
    g.record([pn, tn, on, dptr, n]() {
        if (!on->grad_ready) return;
        const T c = T(2) * on->grad.data[0] / static_cast<T>(n);
        if (pn->requires_grad) {
            pn->ensure_grad();
            kernels::axpy(n, c, dptr->ptr(), pn->grad.ptr());
        }
        if (tn->requires_grad) {
            tn->ensure_grad();
            kernels::axpy(n, -c, dptr->ptr(), tn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

// Mean over entries with mask != 0; the mask is a constant.
template <typename T>
Var<T> masked_mse_loss(Graph<T>& g, const Var<T>& pred, const Var<T>& tgt, const Array<T>& mask) {
    detail::check(pred.value().same_shape(tgt.value()), "masked_mse: shape mismatch");
    detail::check(mask.numel() == pred.value().numel(), "masked_mse: mask size mismatch");
    const size_t n = pred.value().numel();
    T valid = T(0);
    for (size_t i = 0; i < n; ++i) valid += mask.data[i] != T(0) ? T(1) : T(0);
    detail::check(valid > T(0), "masked_mse: no valid entries");
    Array<T> diff({n});
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T d = (pred.value().data[i] - tgt.value().data[i]) *
                    (mask.data[i] != T(0) ? T(1) : T(0));
        diff.data[i] = d;
        acc += d * d;
    }
    Array<T> out = Array<T>::scalar(acc / valid);
    auto on = detail::make_output(std::move(out), pred.requires_grad() || tgt.requires_grad());
    auto pn = pred.node(), tn = tgt.node();
    auto dptr = std::make_shared<Array<T>>(std::move(diff));
    g.record([pn, tn, on, dptr, n, valid]() {
        if (!on->grad_ready) return;
        const T c = T(2) * on->grad.data[0] / valid;
        if (pn->requires_grad) {
            pn->ensure_grad();
            kernels::axpy(n, c, dptr->ptr(), pn->grad.ptr());
        }
        if (tn->requires_grad) {
            tn->ensure_grad();
            kernels::axpy(n, -c, dptr->ptr(), tn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

// sqrt(mse); gradient defined as 0 when the loss is exactly 0.
template <typename T>
Var<T> rmse_loss(Graph<T>& g, const Var<T>& pred, const Var<T>& tgt) {
    detail::check(pred.value().same_shape(tgt.value()), "rmse: shape mismatch");
    const size_t n = pred.value().numel();
    detail::check(n > 0, "rmse: empty input");
    Array<T> diff({n});
    kernels::vsub(n, pred.value().ptr(), tgt.value().ptr(), diff.ptr());
    const T mse = kernels::vsumsq(n, diff.ptr()) / static_cast<T>(n);
    const T r = std::sqrt(mse);
    Array<T> out = Array<T>::scalar(r);
    auto on = detail::make_output(std::move(out), pred.requires_grad() || tgt.requires_grad());
    auto pn = pred.node(), tn = tgt.node();
    auto dptr = std::make_shared<Array<T>>(std::move(diff));
    g.record([pn, tn, on, dptr, n, r]() {
        if (!on->grad_ready || r == T(0)) return;
        const T c = on->grad.data[0] / (static_cast<T>(n) * r);
        if (pn->requires_grad) {
            pn->ensure_grad();
            kernels::axpy(n, c, dptr->ptr(), pn->grad.ptr());
        }
        if (tn->requires_grad) {
            tn->ensure_grad();
            kernels::axpy(n, -c, dptr->ptr(), tn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

// ---- convolution / pooling / normalization ----

namespace detail {

template <typename T>
void im2col(const T* x, size_t c_in, size_t h, size_t w, size_t kh, size_t kw,
            size_t stride, size_t pad, size_t h_out, size_t w_out, T* col) {
    const size_t p = h_out * w_out;
    for (size_t c = 0; c < c_in; ++c) {
        for (size_t ki = 0; ki < kh; ++ki) {
            for (size_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * p;
                for (size_t oy = 0; oy < h_out; ++oy) {
                    const ptrdiff_t iy = static_cast<ptrdiff_t>(oy * stride + ki) - static_cast<ptrdiff_t>(pad);
                    for (size_t ox = 0; ox < w_out; ++ox) {
                        const ptrdiff_t ix = static_cast<ptrdiff_t>(ox * stride + kj) - static_cast<ptrdiff_t>(pad);
                        T v = T(0);
                        if (iy >= 0 && iy < static_cast<ptrdiff_t>(h) && ix >= 0 &&
                            ix < static_cast<ptrdiff_t>(w))
                            v = x[(c * h + static_cast<size_t>(iy)) * w + static_cast<size_t>(ix)];
                        dst[oy * w_out + ox] = v;
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, size_t c_in, size_t h, size_t w, size_t kh, size_t kw,
                size_t stride, size_t pad, size_t h_out, size_t w_out, T* dx) {
    const size_t p = h_out * w_out;
    for (size_t c = 0; c < c_in; ++c) {
        for (size_t ki = 0; ki < kh; ++ki) {
            for (size_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * p;
                for (size_t oy = 0; oy < h_out; ++oy) {
                    const ptrdiff_t iy = static_cast<ptrdiff_t>(oy * stride + ki) - static_cast<ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<ptrdiff_t>(h)) continue;
                    for (size_t ox = 0; ox < w_out; ++ox) {
                        const ptrdiff_t ix = static_cast<ptrdiff_t>(ox * stride + kj) - static_cast<ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<ptrdiff_t>(w)) continue;
                        dx[(c * h + static_cast<size_t>(iy)) * w + static_cast<size_t>(ix)] +=
                            src[oy * w_out + ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

// x: [B, Cin, H, W], w: [Cout, Cin, kh, kw], b: [Cout] (optional).
// im2col + GEMM per sample; the column buffer is rebuilt in backward.
template <typename T>
Var<T> conv2d(Graph<T>& g, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              size_t stride = 1, size_t pad = 0) {
    detail::check(x.value().ndim() == 4, "conv2d: input must be [B,C,H,W]");
    detail::check(w.value().ndim() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
    const size_t bsz = x.value().dim(0), c_in = x.value().dim(1);
    const size_t h = x.value().dim(2), wd = x.value().dim(3);
    const size_t c_out = w.value().dim(0), kh = w.value().dim(2), kw = w.value().dim(3);
    detail::check(w.value().dim(1) == c_in, "conv2d: channel mismatch");
    detail::check(stride >= 1, "conv2d: stride must be >= 1");
    detail::check(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d: kernel larger than padded input");
    const size_t h_out = (h + 2 * pad - kh) / stride + 1;
    const size_t w_out = (wd + 2 * pad - kw) / stride + 1;
    const size_t k = c_in * kh * kw, p = h_out * w_out;

    Array<T> out({bsz, c_out, h_out, w_out});
    std::vector<T> col(k * p);
    const bool has_bias = b.defined();
    if (has_bias) detail::check(b.value().numel() == c_out, "conv2d: bias size mismatch");
    for (size_t s = 0; s < bsz; ++s) {
        detail::im2col(x.value().ptr() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride, pad,
                       h_out, w_out, col.data());
        T* dst = out.ptr() + s * c_out * p;
        kernels::gemm(false, false, c_out, p, k, w.value().ptr(), col.data(), dst, false);
        if (has_bias)
            for (size_t c = 0; c < c_out; ++c) {
                const T bv = b.value().data[c];
                for (size_t i = 0; i < p; ++i) dst[c * p + i] += bv;
            }
    }

    const bool rg = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
    auto on = detail::make_output(std::move(out), rg);
    auto xn = x.node(), wn = w.node();
    auto bn = has_bias ? b.node() : NodePtr<T>();
    g.record([xn, wn, bn, on, bsz, c_in, h, wd, c_out, kh, kw, stride, pad, h_out, w_out]() {
        if (!on->grad_ready) return;
        const size_t k = c_in * kh * kw, p = h_out * w_out;
        std::vector<T> col(k * p), dcol(k * p);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn && bn->requires_grad) bn->ensure_grad();
        for (size_t s = 0; s < bsz; ++s) {
            const T* dout = on->grad.ptr() + s * c_out * p;
            if (wn->requires_grad || xn->requires_grad)
                detail::im2col(xn->value.ptr() + s * c_in * h * wd, c_in, h, wd, kh, kw, stride,
                               pad, h_out, w_out, col.data());
            if (wn->requires_grad)
                kernels::gemm(false, true, c_out, k, p, dout, col.data(), wn->grad.ptr(), true);
            if (xn->requires_grad) {
                kernels::gemm(true, false, k, p, c_out, wn->value.ptr(), dout, dcol.data(), false);
                detail::col2im_add(dcol.data(), c_in, h, wd, kh, kw, stride, pad, h_out, w_out,
                                   xn->grad.ptr() + s * c_in * h * wd);
            }
            if (bn && bn->requires_grad)
                for (size_t c = 0; c < c_out; ++c)
                    bn->grad.data[c] += kernels::vsum(p, dout + c * p);
        }
    });
    return detail::wrap(on);
}

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
Var<T> maxpool2d(Graph<T>& g, const Var<T>& x) {
    detail::check(x.value().ndim() == 4, "maxpool2d: input must be [B,C,H,W]");
    const size_t bsz = x.value().dim(0), c = x.value().dim(1);
    const size_t h = x.value().dim(2), w = x.value().dim(3);
    detail::check(h >= 2 && w >= 2, "maxpool2d: input smaller than pool window");
    const size_t ho = h / 2, wo = w / 2;
    Array<T> out({bsz, c, ho, wo});
    auto argmax = std::make_shared<std::vector<size_t>>(out.numel());
    size_t oi = 0;
    for (size_t s = 0; s < bsz; ++s)
        for (size_t ch = 0; ch < c; ++ch) {
            const T* plane = x.value().ptr() + (s * c + ch) * h * w;
            const size_t base = (s * c + ch) * h * w;
            for (size_t oy = 0; oy < ho; ++oy)
                for (size_t ox = 0; ox < wo; ++ox) {
                    size_t best = (2 * oy) * w + 2 * ox;
                    T bv = plane[best];
                    const size_t cands[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                             (2 * oy + 1) * w + 2 * ox + 1};
                    for (size_t idx : cands)
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    out.data[oi] = bv;
                    (*argmax)[oi] = base + best;
                    ++oi;
                }
        }
    auto on = detail::make_output(std::move(out), x.requires_grad());
    auto xn = x.node();
    g.record([xn, on, argmax]() {
        if (!on->grad_ready || !xn->requires_grad) return;
        xn->ensure_grad();
        const size_t n = on->grad.numel();
        for (size_t i = 0; i < n; ++i) xn->grad.data[(*argmax)[i]] += on->grad.data[i];
    });
    return detail::wrap(on);
}

// Batch normalization over [B,C,H,W] per channel. Training mode normalizes
// with batch statistics and updates running stats (unbiased variance, torch
// convention); eval mode uses the running stats.
template <typename T>
Var<T> batch_norm2d(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                    Array<T>& run_mean, Array<T>& run_var, T momentum, T eps) {
    detail::check(x.value().ndim() == 4, "batch_norm: input must be [B,C,H,W]");
    const size_t bsz = x.value().dim(0), c = x.value().dim(1);
    const size_t h = x.value().dim(2), w = x.value().dim(3);
    detail::check(gamma.value().numel() == c && beta.value().numel() == c,
                  "batch_norm: gamma/beta size mismatch");
    detail::check(run_mean.numel() == c && run_var.numel() == c,
                  "batch_norm: running stats size mismatch");
    const size_t plane = h * w;
    const size_t n_per_c = bsz * plane;

    Array<T> out(x.value().shape);
    auto xhat = std::make_shared<Array<T>>(x.value().shape);
    auto invstd = std::make_shared<std::vector<T>>(c);

    for (size_t ch = 0; ch < c; ++ch) {
        T mean, var;
        if (g.training) {
            T sum = T(0), sumsq = T(0);
            for (size_t s = 0; s < bsz; ++s) {
                const T* p = x.value().ptr() + (s * c + ch) * plane;
                sum += kernels::vsum(plane, p);
                sumsq += kernels::vsumsq(plane, p);
            }
            mean = sum / static_cast<T>(n_per_c);
            var = std::max(T(0), sumsq / static_cast<T>(n_per_c) - mean * mean);
            const T unbiased = n_per_c > 1 ? var * static_cast<T>(n_per_c) / static_cast<T>(n_per_c - 1) : var;
            run_mean.data[ch] = (T(1) - momentum) * run_mean.data[ch] + momentum * mean;
            run_var.data[ch] = (T(1) - momentum) * run_var.data[ch] + momentum * unbiased;
        } else {
            mean = run_mean.data[ch];
            var = run_var.data[ch];
        }
        const T is = T(1) / std::sqrt(var + eps);
        (*invstd)[ch] = is;
        const T gv = gamma.value().data[ch], bv = beta.value().data[ch];
        for (size_t s = 0; s < bsz; ++s) {
            const T* px = x.value().ptr() + (s * c + ch) * plane;
            T* ph = xhat->ptr() + (s * c + ch) * plane;
            T* po = out.ptr() + (s * c + ch) * plane;
            for (size_t i = 0; i < plane; ++i) {
                ph[i] = (px[i] - mean) * is;
                po[i] = gv * ph[i] + bv;
            }
        }
    }

    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    auto on = detail::make_output(std::move(out), rg);
    auto xn = x.node(), gn = gamma.node(), btn = beta.node();
    const bool train_stats = g.training;
    g.record([xn, gn, btn, on, xhat, invstd, bsz, c, plane, train_stats]() {
        if (!on->grad_ready) return;
        const size_t n_per_c = bsz * plane;
        for (size_t ch = 0; ch < c; ++ch) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (size_t s = 0; s < bsz; ++s) {
                const T* dy = on->grad.ptr() + (s * c + ch) * plane;
                const T* xh = xhat->ptr() + (s * c + ch) * plane;
                sum_dy += kernels::vsum(plane, dy);
                sum_dy_xhat += kernels::vdot(plane, dy, xh);
            }
            if (btn->requires_grad) {
                btn->ensure_grad();
                btn->grad.data[ch] += sum_dy;
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                gn->grad.data[ch] += sum_dy_xhat;
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                const T gv = gn->value.data[ch];
                const T is = (*invstd)[ch];
                if (train_stats) {
                    const T inv_n = T(1) / static_cast<T>(n_per_c);
                    for (size_t s = 0; s < bsz; ++s) {
                        const T* dy = on->grad.ptr() + (s * c + ch) * plane;
                        const T* xh = xhat->ptr() + (s * c + ch) * plane;
                        T* dx = xn->grad.ptr() + (s * c + ch) * plane;
                        for (size_t i = 0; i < plane; ++i)
                            dx[i] += gv * is * (dy[i] - inv_n * sum_dy - xh[i] * inv_n * sum_dy_xhat);
                    }
                } else {
                    for (size_t s = 0; s < bsz; ++s) {
                        const T* dy = on->grad.ptr() + (s * c + ch) * plane;
                        T* dx = xn->grad.ptr() + (s * c + ch) * plane;
                        kernels::axpy(plane, gv * is, dy, dx);
                    }
                }
            }
        }
    });
    return detail::wrap(on);
}

// Layer normalization over the last axis of a 2-d input.
template <typename T>
Var<T> layer_norm(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    detail::check(x.value().ndim() == 2, "layer_norm: input must be 2-d");
    const size_t m = x.value().dim(0), n = x.value().dim(1);
    detail::check(gamma.value().numel() == n && beta.value().numel() == n,
                  "layer_norm: gamma/beta size mismatch");
    Array<T> out({m, n});
    auto xhat = std::make_shared<Array<T>>(std::vector<size_t>{m, n});
    auto invstd = std::make_shared<std::vector<T>>(m);
    for (size_t i = 0; i < m; ++i) {
        const T* row = x.value().ptr() + i * n;
        const T mean = kernels::vsum(n, row) / static_cast<T>(n);
        T var = T(0);
        for (size_t j = 0; j < n; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T is = T(1) / std::sqrt(var + eps);
        (*invstd)[i] = is;
        T* ph = xhat->ptr() + i * n;
        T* po = out.ptr() + i * n;
        for (size_t j = 0; j < n; ++j) {
            ph[j] = (row[j] - mean) * is;
            po[j] = gamma.value().data[j] * ph[j] + beta.value().data[j];
        }
    }
    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    auto on = detail::make_output(std::move(out), rg);
    auto xn = x.node(), gn = gamma.node(), btn = beta.node();
    g.record([xn, gn, btn, on, xhat, invstd, m, n]() {
        if (!on->grad_ready) return;
        if (gn->requires_grad) gn->ensure_grad();
        if (btn->requires_grad) btn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        for (size_t i = 0; i < m; ++i) {
            const T* dy = on->grad.ptr() + i * n;
            const T* xh = xhat->ptr() + i * n;
            if (btn->requires_grad)
                kernels::vadd(n, btn->grad.ptr(), dy, btn->grad.ptr());
            if (gn->requires_grad)
                for (size_t j = 0; j < n; ++j) gn->grad.data[j] += dy[j] * xh[j];
            if (xn->requires_grad) {
                T sum_dg = T(0), sum_dg_xhat = T(0);
                for (size_t j = 0; j < n; ++j) {
                    const T dg = dy[j] * gn->value.data[j];
                    sum_dg += dg;
                    sum_dg_xhat += dg * xh[j];
                }
                const T is = (*invstd)[i];
                const T inv_n = T(1) / static_cast<T>(n);
                T* dx = xn->grad.ptr() + i * n;
                for (size_t j = 0; j < n; ++j) {
                    const T dg = dy[j] * gn->value.data[j];
                    dx[j] += is * (dg - inv_n * sum_dg - xh[j] * inv_n * sum_dg_xhat);
                }
            }
        }
    });
    return detail::wrap(on);
}

// ---- recurrent cells (fused, hand-derived backward) ----

// Gate order r, z, n (reset, update, candidate). Weights: w_ih [3H, D],
// w_hh [3H, H], biases [3H]. Returns the next hidden state [B, H].
template <typename T>
Var<T> gru_cell(Graph<T>& g, const Var<T>& x, const Var<T>& h, const Var<T>& w_ih,
                const Var<T>& w_hh, const Var<T>& b_ih, const Var<T>& b_hh) {
    detail::check(x.value().ndim() == 2 && h.value().ndim() == 2, "gru: x and h must be 2-d");
    const size_t bsz = x.value().dim(0), d = x.value().dim(1), hd = h.value().dim(1);
    detail::check(h.value().dim(0) == bsz, "gru: batch mismatch");
    detail::check(w_ih.value().dim(0) == 3 * hd && w_ih.value().dim(1) == d, "gru: w_ih shape");
    detail::check(w_hh.value().dim(0) == 3 * hd && w_hh.value().dim(1) == hd, "gru: w_hh shape");
    detail::check(b_ih.value().numel() == 3 * hd && b_hh.value().numel() == 3 * hd, "gru: bias shape");

    Array<T> gi({bsz, 3 * hd}), gh({bsz, 3 * hd});
    kernels::gemm(false, true, bsz, 3 * hd, d, x.value().ptr(), w_ih.value().ptr(), gi.ptr(), false);
    kernels::gemm(false, true, bsz, 3 * hd, hd, h.value().ptr(), w_hh.value().ptr(), gh.ptr(), false);
    for (size_t i = 0; i < bsz; ++i) {
        kernels::vadd(3 * hd, gi.ptr() + i * 3 * hd, b_ih.value().ptr(), gi.ptr() + i * 3 * hd);
        kernels::vadd(3 * hd, gh.ptr() + i * 3 * hd, b_hh.value().ptr(), gh.ptr() + i * 3 * hd);
    }

    auto r = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto z = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto nc = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto hn_pre = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    Array<T> out({bsz, hd});
    for (size_t i = 0; i < bsz; ++i) {
        const T* gir = gi.ptr() + i * 3 * hd;
        const T* ghr = gh.ptr() + i * 3 * hd;
        const T* hp = h.value().ptr() + i * hd;
        for (size_t j = 0; j < hd; ++j) {
            const T rv = T(1) / (T(1) + std::exp(-(gir[j] + ghr[j])));
            const T zv = T(1) / (T(1) + std::exp(-(gir[hd + j] + ghr[hd + j])));
            const T hn = ghr[2 * hd + j];
            const T nv = std::tanh(gir[2 * hd + j] + rv * hn);
            r->data[i * hd + j] = rv;
            z->data[i * hd + j] = zv;
            nc->data[i * hd + j] = nv;
            hn_pre->data[i * hd + j] = hn;
            out.data[i * hd + j] = (T(1) - zv) * nv + zv * hp[j];
        }
    }

    const bool rg = x.requires_grad() || h.requires_grad() || w_ih.requires_grad() ||
                    w_hh.requires_grad() || b_ih.requires_grad() || b_hh.requires_grad();
    auto on = detail::make_output(std::move(out), rg);
    auto xn = x.node(), hn = h.node(), win = w_ih.node(), whn = w_hh.node();
    auto bin = b_ih.node(), bhn = b_hh.node();
    g.record([xn, hn, win, whn, bin, bhn, on, r, z, nc, hn_pre, bsz, d, hd]() {
        if (!on->grad_ready) return;
        Array<T> dgi({bsz, 3 * hd}), dgh({bsz, 3 * hd});
        for (size_t i = 0; i < bsz; ++i) {
            const T* dh_out = on->grad.ptr() + i * hd;
            const T* hp = hn->value.ptr() + i * hd;
            for (size_t j = 0; j < hd; ++j) {
                const T rv = r->data[i * hd + j];
                const T zv = z->data[i * hd + j];
                const T nv = nc->data[i * hd + j];
                const T hnp = hn_pre->data[i * hd + j];
                const T go = dh_out[j];
                const T dz = go * (hp[j] - nv);
                const T dn = go * (T(1) - zv);
                const T dn_pre = dn * (T(1) - nv * nv);
                const T dr = dn_pre * hnp;
                const T dr_pre = dr * rv * (T(1) - rv);
                const T dz_pre = dz * zv * (T(1) - zv);
                dgi.data[i * 3 * hd + j] = dr_pre;
                dgi.data[i * 3 * hd + hd + j] = dz_pre;
                dgi.data[i * 3 * hd + 2 * hd + j] = dn_pre;
                dgh.data[i * 3 * hd + j] = dr_pre;
                dgh.data[i * 3 * hd + hd + j] = dz_pre;
                dgh.data[i * 3 * hd + 2 * hd + j] = dn_pre * rv;
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            kernels::gemm(false, false, bsz, d, 3 * hd, dgi.ptr(), win->value.ptr(), xn->grad.ptr(), true);
        }
        if (hn->requires_grad) {
            hn->ensure_grad();
            kernels::gemm(false, false, bsz, hd, 3 * hd, dgh.ptr(), whn->value.ptr(), hn->grad.ptr(), true);
            for (size_t i = 0; i < bsz; ++i)
                for (size_t j = 0; j < hd; ++j)
                    hn->grad.data[i * hd + j] += on->grad.data[i * hd + j] * z->data[i * hd + j];
        }
        if (win->requires_grad) {
            win->ensure_grad();
            kernels::gemm(true, false, 3 * hd, d, bsz, dgi.ptr(), xn->value.ptr(), win->grad.ptr(), true);
        }
        if (whn->requires_grad) {
            whn->ensure_grad();
            kernels::gemm(true, false, 3 * hd, hd, bsz, dgh.ptr(), hn->value.ptr(), whn->grad.ptr(), true);
        }
        if (bin->requires_grad) {
            bin->ensure_grad();
            kernels::colsum(bsz, 3 * hd, dgi.ptr(), bin->grad.ptr(), true);
        }
        if (bhn->requires_grad) {
            bhn->ensure_grad();
            kernels::colsum(bsz, 3 * hd, dgh.ptr(), bhn->grad.ptr(), true);
        }
    });
    return detail::wrap(on);
}

// Gate order i, f, g, o. Weights: w_ih [4H, D], w_hh [4H, H], biases [4H].
template <typename T>
struct LstmOut {
    Var<T> h;
    Var<T> c;
};

template <typename T>
LstmOut<T> lstm_cell(Graph<T>& g, const Var<T>& x, const Var<T>& h, const Var<T>& c,
                     const Var<T>& w_ih, const Var<T>& w_hh, const Var<T>& b_ih,
                     const Var<T>& b_hh) {
    detail::check(x.value().ndim() == 2 && h.value().ndim() == 2 && c.value().ndim() == 2,
                  "lstm: x, h, c must be 2-d");
    const size_t bsz = x.value().dim(0), d = x.value().dim(1), hd = h.value().dim(1);
    detail::check(c.value().dim(1) == hd && c.value().dim(0) == bsz && h.value().dim(0) == bsz,
                  "lstm: state shape mismatch");
    detail::check(w_ih.value().dim(0) == 4 * hd && w_ih.value().dim(1) == d, "lstm: w_ih shape");
    detail::check(w_hh.value().dim(0) == 4 * hd && w_hh.value().dim(1) == hd, "lstm: w_hh shape");
    detail::check(b_ih.value().numel() == 4 * hd && b_hh.value().numel() == 4 * hd, "lstm: bias shape");

    Array<T> gates({bsz, 4 * hd});
    kernels::gemm(false, true, bsz, 4 * hd, d, x.value().ptr(), w_ih.value().ptr(), gates.ptr(), false);
    kernels::gemm(false, true, bsz, 4 * hd, hd, h.value().ptr(), w_hh.value().ptr(), gates.ptr(), true);
    for (size_t i = 0; i < bsz; ++i) {
        kernels::vadd(4 * hd, gates.ptr() + i * 4 * hd, b_ih.value().ptr(), gates.ptr() + i * 4 * hd);
        kernels::vadd(4 * hd, gates.ptr() + i * 4 * hd, b_hh.value().ptr(), gates.ptr() + i * 4 * hd);
    }

    auto ig = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto fg = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto gg = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto og = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    auto tc = std::make_shared<Array<T>>(std::vector<size_t>{bsz, hd});
    Array<T> h_out({bsz, hd}), c_out({bsz, hd});
    for (size_t i = 0; i < bsz; ++i) {
        const T* gr = gates.ptr() + i * 4 * hd;
        const T* cp = c.value().ptr() + i * hd;
        for (size_t j = 0; j < hd; ++j) {
            const T iv = T(1) / (T(1) + std::exp(-gr[j]));
            const T fv = T(1) / (T(1) + std::exp(-gr[hd + j]));
            const T gv = std::tanh(gr[2 * hd + j]);
            const T ov = T(1) / (T(1) + std::exp(-gr[3 * hd + j]));
            const T cn = fv * cp[j] + iv * gv;
            const T tv = std::tanh(cn);
            ig->data[i * hd + j] = iv;
            fg->data[i * hd + j] = fv;
            gg->data[i * hd + j] = gv;
            og->data[i * hd + j] = ov;
            tc->data[i * hd + j] = tv;
            c_out.data[i * hd + j] = cn;
            h_out.data[i * hd + j] = ov * tv;
        }
    }

    const bool rg = x.requires_grad() || h.requires_grad() || c.requires_grad() ||
                    w_ih.requires_grad() || w_hh.requires_grad() || b_ih.requires_grad() ||
                    b_hh.requires_grad();
    auto hn_out = detail::make_output(std::move(h_out), rg);
    auto cn_out = detail::make_output(std::move(c_out), rg);
    auto xn = x.node(), hn = h.node(), cn = c.node(), win = w_ih.node(), whn = w_hh.node();
    auto bin = b_ih.node(), bhn = b_hh.node();
    g.record([xn, hn, cn, win, whn, bin, bhn, hn_out, cn_out, ig, fg, gg, og, tc, bsz, d, hd]() {
        const bool has_dh = hn_out->grad_ready, has_dc = cn_out->grad_ready;
        if (!has_dh && !has_dc) return;
        Array<T> dgates({bsz, 4 * hd});
        Array<T> dc_prev({bsz, hd});
        for (size_t i = 0; i < bsz; ++i) {
            for (size_t j = 0; j < hd; ++j) {
                const size_t idx = i * hd + j;
                const T dh = has_dh ? hn_out->grad.data[idx] : T(0);
                const T dc_in = has_dc ? cn_out->grad.data[idx] : T(0);
                const T iv = ig->data[idx], fv = fg->data[idx], gv = gg->data[idx],
                        ov = og->data[idx], tv = tc->data[idx];
                const T dc_total = dc_in + dh * ov * (T(1) - tv * tv);
                const T do_pre = dh * tv * ov * (T(1) - ov);
                const T di_pre = dc_total * gv * iv * (T(1) - iv);
                const T df_pre = dc_total * cn->value.data[idx] * fv * (T(1) - fv);
                const T dg_pre = dc_total * iv * (T(1) - gv * gv);
                dgates.data[i * 4 * hd + j] = di_pre;
                dgates.data[i * 4 * hd + hd + j] = df_pre;
                dgates.data[i * 4 * hd + 2 * hd + j] = dg_pre;
                dgates.data[i * 4 * hd + 3 * hd + j] = do_pre;
                dc_prev.data[idx] = dc_total * fv;
            }
        }
        if (cn->requires_grad) {
            cn->ensure_grad();
            kernels::vadd(bsz * hd, cn->grad.ptr(), dc_prev.ptr(), cn->grad.ptr());
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            kernels::gemm(false, false, bsz, d, 4 * hd, dgates.ptr(), win->value.ptr(), xn->grad.ptr(), true);
        }
        if (hn->requires_grad) {
            hn->ensure_grad();
            kernels::gemm(false, false, bsz, hd, 4 * hd, dgates.ptr(), whn->value.ptr(), hn->grad.ptr(), true);
        }
        if (win->requires_grad) {
            win->ensure_grad();
            kernels::gemm(true, false, 4 * hd, d, bsz, dgates.ptr(), xn->value.ptr(), win->grad.ptr(), true);
        }
        if (whn->requires_grad) {
            whn->ensure_grad();
            kernels::gemm(true, false, 4 * hd, hd, bsz, dgates.ptr(), hn->value.ptr(), whn->grad.ptr(), true);
        }
        if (bin->requires_grad) {
            bin->ensure_grad();
            kernels::colsum(bsz, 4 * hd, dgates.ptr(), bin->grad.ptr(), true);
        }
        if (bhn->requires_grad) {
            bhn->ensure_grad();
            kernels::colsum(bsz, 4 * hd, dgates.ptr(), bhn->grad.ptr(), true);
        }
    });
    return {detail::wrap(hn_out), detail::wrap(cn_out)};
}

// Stacks K same-width parts [B_i, N] into [(sum B_i), N], first part on top.
template <typename T>
Var<T> stack_rows(Graph<T>& g, const std::vector<Var<T>>& parts) {
    detail::check(!parts.empty(), "stack_rows: no parts");
    const size_t n = parts[0].value().dim(1);
    size_t rows = 0;
    for (const auto& p : parts) {
        detail::check(p.value().ndim() == 2 && p.value().dim(1) == n, "stack_rows: width mismatch");
        rows += p.value().dim(0);
    }
    Array<T> out({rows, n});
    bool rg = false;
    size_t r = 0;
    std::vector<NodePtr<T>> nodes;
    std::vector<size_t> offsets;
    nodes.reserve(parts.size());
    for (const auto& p : parts) {
        const size_t m = p.value().dim(0);
        std::memcpy(out.ptr() + r * n, p.value().ptr(), m * n * sizeof(T));
        nodes.push_back(p.node());
        offsets.push_back(r);
        r += m;
        rg = rg || p.requires_grad();
    }
    auto on = detail::make_output(std::move(out), rg);
    g.record([nodes, offsets, on, n]() {
        if (!on->grad_ready) return;
        for (size_t i = 0; i < nodes.size(); ++i) {
            const auto& pn = nodes[i];
            if (!pn->requires_grad) continue;
            pn->ensure_grad();
            const size_t m = pn->value.dim(0);
            kernels::axpy(m * n, T(1), on->grad.ptr() + offsets[i] * n, pn->grad.ptr());
        }
    });
    return detail::wrap(on);
}

// Per-row selection: out[b,:] = mask[b] != 0 ? a[b,:] : b[b,:]. Used to carry
// recurrent state across zero-padded timesteps; selection is exact (no float
// blending), so padded batches reproduce single-clip results bit for bit.
template <typename T>
Var<T> mask_lerp(Graph<T>& g, const Var<T>& taken, const Var<T>& kept, const Array<T>& mask) {
    detail::check(taken.value().same_shape(kept.value()), "mask_lerp: shape mismatch");
    detail::check(taken.value().ndim() == 2, "mask_lerp: expects 2-d inputs");
    const size_t m = taken.value().dim(0), n = taken.value().dim(1);
    detail::check(mask.numel() == m, "mask_lerp: mask length mismatch");
    Array<T> out({m, n});
    for (size_t i = 0; i < m; ++i) {
        const T* src = mask.data[i] != T(0) ? taken.value().ptr() : kept.value().ptr();
        std::memcpy(out.ptr() + i * n, src + i * n, n * sizeof(T));
    }
    auto on = detail::make_output(std::move(out), taken.requires_grad() || kept.requires_grad());
    auto an = taken.node(), bn = kept.node();
    auto mcopy = std::make_shared<Array<T>>(mask);
    g.record([an, bn, on, mcopy, m, n]() {
        if (!on->grad_ready) return;
        for (size_t i = 0; i < m; ++i) {
            auto& dst = mcopy->data[i] != T(0) ? an : bn;
            if (!dst->requires_grad) continue;
            dst->ensure_grad();
            kernels::vadd(n, dst->grad.ptr() + i * n, on->grad.ptr() + i * n,
                          dst->grad.ptr() + i * n);
        }
    });
    return detail::wrap(on);
}

} // namespace omoq
