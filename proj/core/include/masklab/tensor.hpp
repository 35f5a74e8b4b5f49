#ifndef MASKLAB_TENSOR_HPP
#define MASKLAB_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "masklab/error.hpp"
#include "masklab/rng.hpp"

// Dense row-major tensors with taped reverse-mode differentiation.
//
// The graph is dynamic: every op allocates a node holding the forward value,
// the parent links and a closure that scatters the node's gradient into its
// parents. backward() runs the closures in reverse topological order, once.
// Two scalar widths are instantiated: float for training, double for the
// finite-difference oracles in the tests.
//
// Broadcasting is limited to the documented cases: bias-row add and
// multiply-by-scalar. Everything else requires exact shape equality.

namespace masklab {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool backward_ran = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    std::size_t numel() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad, T(0));
    }

    static Tensor full(Shape shape, T fill, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad, fill);
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (data.size() != shape_numel(shape)) {
            throw DomainError("tensor: data size " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    // Gaussian-initialized leaf, the only random initializer models use.
    static Tensor randn(Shape shape, Rng& rng, T stddev, bool requires_grad = true) {
        std::vector<T> data(shape_numel(shape));
        for (auto& x : data) x = static_cast<T>(rng.normal()) * stddev;
        return from(std::move(shape), std::move(data), requires_grad);
    }

    bool valid() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t numel() const { return n_->value.size(); }
    std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
    std::size_t rows() const { return n_->shape.at(0); }
    std::size_t cols() const { return n_->shape.at(1); }
    bool requires_grad() const { return n_->requires_grad; }

    std::span<const T> values() const { return {n_->value.data(), n_->value.size()}; }

    // Leaf-only in-place mutation (parameter updates, buffer loads).
    std::span<T> values_mut() {
        if (!n_->parents.empty()) {
            throw DomainError("tensor: in-place mutation of a non-leaf node");
        }
        return {n_->value.data(), n_->value.size()};
    }

    bool has_grad() const { return n_->grad.size() == n_->value.size(); }

    std::span<const T> grad() const {
        if (!has_grad()) throw DomainError("tensor: gradient not populated");
        return {n_->grad.data(), n_->grad.size()};
    }

    void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

    T item() const {
        if (numel() != 1) {
            throw DomainError("tensor: item() on non-scalar of shape " + shape_str(n_->shape));
        }
        return n_->value[0];
    }

    std::shared_ptr<TensorNode<T>> node() const { return n_; }

    static Tensor wrap(std::shared_ptr<TensorNode<T>> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    static Tensor make(Shape shape, std::vector<T>, bool requires_grad, T fill) {
        Tensor t;
        t.n_ = std::make_shared<TensorNode<T>>();
        t.n_->value.assign(shape_numel(shape), fill);
        t.n_->shape = std::move(shape);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const EMat<T>>;
template <class T>
using Map = Eigen::Map<EMat<T>>;

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw NumericError(std::string(op) + ": non-finite value produced");
        }
    }
}

// Builds a graph node. Parents are retained for lifetime even when they do
// not require grad (the backprop closure may read their values).
template <class T>
Tensor<T> make_node(const char* op, Shape shape, std::vector<T> value,
                    std::vector<std::shared_ptr<TensorNode<T>>> parents,
                    std::function<void(TensorNode<T>&)> backprop) {
    check_finite(value, op);
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor<T>::wrap(std::move(n));
}

template <class T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& delta) {
    if (!dst.requires_grad) return;
    dst.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) dst.grad[i] += delta[i];
}

inline void require(bool cond, const char* op, const std::string& detail) {
    if (!cond) throw DomainError(std::string(op) + ": " + detail);
}

}  // namespace detail

// ---- primitives -----------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape().size() == 2 && b.shape().size() == 2, "matmul",
                    "expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    detail::require(a.cols() == b.rows(), "matmul",
                    "inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<T> out(n * m);
    detail::Map<T>(out.data(), n, m).noalias() =
        detail::MapC<T>(a.values().data(), n, k) * detail::MapC<T>(b.values().data(), k, m);

    auto an = a.node();
    auto bn = b.node();
    return detail::make_node<T>(
        "matmul", {n, m}, std::move(out), {an, bn}, [an, bn, n, k, m](TensorNode<T>& self) {
            detail::MapC<T> g(self.grad.data(), n, m);
            if (an->requires_grad) {
                an->ensure_grad();
                detail::Map<T>(an->grad.data(), n, k).noalias() +=
                    g * detail::MapC<T>(bn->value.data(), k, m).transpose();
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                detail::Map<T>(bn->grad.data(), k, m).noalias() +=
                    detail::MapC<T>(an->value.data(), n, k).transpose() * g;
            }
        });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require(a.shape().size() == 2, "transpose", "expects rank-2 operand");
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<T> out(n * m);
    detail::Map<T>(out.data(), m, n) = detail::MapC<T>(a.values().data(), n, m).transpose();
    auto an = a.node();
    return detail::make_node<T>("transpose", {m, n}, std::move(out), {an},
                                [an, n, m](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    detail::Map<T>(an->grad.data(), n, m).noalias() +=
                                        detail::MapC<T>(self.grad.data(), m, n).transpose();
                                });
}

// add supports two layouts: identical shapes, and the documented bias
// broadcast (a is n x d, b is a length-d vector added to every row).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const bool same = a.shape() == b.shape();
    const bool bias = a.shape().size() == 2 && b.shape().size() == 1 && b.dim(0) == a.cols();
    detail::require(same || bias, "add",
                    "incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    std::vector<T> out(a.values().begin(), a.values().end());
    if (same) {
        auto bv = b.values();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    } else {
        const std::size_t n = a.rows(), d = a.cols();
        auto bv = b.values();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];
    }
    auto an = a.node();
    auto bn = b.node();
    Shape shape = a.shape();
    return detail::make_node<T>(
        "add", std::move(shape), std::move(out), {an, bn}, [an, bn, same](TensorNode<T>& self) {
            if (an->requires_grad) detail::accumulate(*an, self.grad);
            if (!bn->requires_grad) return;
            bn->ensure_grad();
            if (same) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
            } else {
                const std::size_t d = bn->value.size();
                const std::size_t n = self.value.size() / d;
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) bn->grad[c] += self.grad[r * d + c];
            }
        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape() == b.shape(), "mul",
                    "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_node<T>(
        "mul", a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * an->value[i];
            }
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto an = a.node();
    return detail::make_node<T>("scale", a.shape(), std::move(out), {an},
                                [an, c](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                        an->grad[i] += self.grad[i] * c;
                                });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, scale(b, T(-1)));
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<T> out(a.numel());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = static_cast<double>(av[i]);
        out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    auto an = a.node();
    return detail::make_node<T>(
        "gelu", a.shape(), std::move(out), {an}, [an](TensorNode<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double x = static_cast<double>(an->value[i]);
                const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                an->grad[i] += self.grad[i] * static_cast<T>(cdf + x * pdf);
            }
        });
}

// Row-wise softmax with the usual max-shift for stability.
template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
    detail::require(a.shape().size() == 2, "softmax", "expects rank-2 operand");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<T> out(n * d);
    auto av = a.values();
    for (std::size_t r = 0; r < n; ++r) {
        const T* x = av.data() + r * d;
        T* y = out.data() + r * d;
        T mx = x[0];
        for (std::size_t c = 1; c < d; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double e = std::exp(static_cast<double>(x[c] - mx));
            y[c] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < d; ++c) y[c] = static_cast<T>(y[c] * inv);
    }
    auto an = a.node();
    return detail::make_node<T>(
        "softmax", a.shape(), std::move(out), {an}, [an, n, d](TensorNode<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t r = 0; r < n; ++r) {
                const T* y = self.value.data() + r * d;
                const T* gy = self.grad.data() + r * d;
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c)
                    dot += static_cast<double>(gy[c]) * static_cast<double>(y[c]);
                T* gx = an->grad.data() + r * d;
                for (std::size_t c = 0; c < d; ++c)
                    gx[c] += static_cast<T>(y[c] * (gy[c] - static_cast<T>(dot)));
            }
        });
}

// Per-row normalization to zero mean, unit variance, then affine (gamma,
// beta are length-d vectors).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    detail::require(x.shape().size() == 2, "layer_norm", "expects rank-2 input");
    const std::size_t n = x.rows(), d = x.cols();
    detail::require(gamma.shape() == Shape{d} && beta.shape() == Shape{d}, "layer_norm",
                    "gamma/beta must be length-" + std::to_string(d) + " vectors");
    std::vector<T> out(n * d);
    std::vector<T> xhat(n * d);
    std::vector<T> inv_std(n);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += xr[c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dx = xr[c] - mu;
            var += dx * dx;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv_std[r] = static_cast<T>(istd);
        for (std::size_t c = 0; c < d; ++c) {
            const T xh = static_cast<T>((xr[c] - mu) * istd);
            xhat[r * d + c] = xh;
            out[r * d + c] = gv[c] * xh + bv[c];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return detail::make_node<T>(
        "layer_norm", x.shape(), std::move(out), {xn, gn, bn},
        [xn, gn, bn, n, d, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](TensorNode<T>& self) {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            for (std::size_t r = 0; r < n; ++r) {
                const T* gy = self.grad.data() + r * d;
                const T* xh = xhat.data() + r * d;
                if (gn->requires_grad || bn->requires_grad) {
                    for (std::size_t c = 0; c < d; ++c) {
                        if (gn->requires_grad) gn->grad[c] += gy[c] * xh[c];
                        if (bn->requires_grad) bn->grad[c] += gy[c];
                    }
                }
                if (!xn->requires_grad) continue;
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dxhat = static_cast<double>(gy[c]) * gn->value[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xh[c];
                }
                const double istd = inv_std[r];
                T* gx = xn->grad.data() + r * d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dxhat = static_cast<double>(gy[c]) * gn->value[c];
                    gx[c] += static_cast<T>(
                        istd * (dxhat - sum_dxhat / d - xh[c] * sum_dxhat_xhat / d));
                }
            }
        });
}

// Gathers rows of `table` (k x d) by integer index. Doubles as the row
// gather for hidden states; gradients scatter-add back into the table.
template <class T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::uint32_t>& ids) {
    detail::require(table.shape().size() == 2, "embedding_lookup", "table must be rank-2");
    const std::size_t k = table.rows(), d = table.cols(), n = ids.size();
    for (auto id : ids) {
        detail::require(id < k, "embedding_lookup",
                        "index " + std::to_string(id) + " out of range [0," +
                            std::to_string(k) + ")");
    }
    std::vector<T> out(n * d);
    auto tv = table.values();
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
    }
    auto tn = table.node();
    return detail::make_node<T>("embedding_lookup", {n, d}, std::move(out), {tn},
                                [tn, ids, d](TensorNode<T>& self) {
                                    if (!tn->requires_grad) return;
                                    tn->ensure_grad();
                                    for (std::size_t r = 0; r < ids.size(); ++r) {
                                        T* dst = tn->grad.data() +
                                                 static_cast<std::size_t>(ids[r]) * d;
                                        const T* src = self.grad.data() + r * d;
                                        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                                    }
                                });
}

// Mean negative log-likelihood over rows, computed through logsumexp.
template <class T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<std::uint32_t>& targets) {
    detail::require(logits.shape().size() == 2, "cross_entropy_loss", "logits must be rank-2");
    const std::size_t n = logits.rows(), v = logits.cols();
    detail::require(targets.size() == n, "cross_entropy_loss",
                    "target count " + std::to_string(targets.size()) + " != rows " +
                        std::to_string(n));
    detail::require(n >= 1, "cross_entropy_loss", "needs at least one row");
    auto lv = logits.values();
    double total = 0.0;
    std::vector<T> soft(n * v);
    for (std::size_t r = 0; r < n; ++r) {
        detail::require(targets[r] < v, "cross_entropy_loss", "target id out of range");
        const T* x = lv.data() + r * v;
        T mx = x[0];
        for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < v; ++c) sum += std::exp(static_cast<double>(x[c] - mx));
        const double lse = static_cast<double>(mx) + std::log(sum);
        total += lse - static_cast<double>(x[targets[r]]);
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < v; ++c)
            soft[r * v + c] = static_cast<T>(std::exp(static_cast<double>(x[c] - mx)) * inv);
    }
    auto ln = logits.node();
    return detail::make_node<T>(
        "cross_entropy_loss", {1}, {static_cast<T>(total / n)}, {ln},
        [ln, targets, n, v, soft = std::move(soft)](TensorNode<T>& self) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            const T g = self.grad[0] / static_cast<T>(n);
            for (std::size_t r = 0; r < n; ++r) {
                T* gx = ln->grad.data() + r * v;
                const T* s = soft.data() + r * v;
                for (std::size_t c = 0; c < v; ++c) gx[c] += g * s[c];
                gx[targets[r]] -= g;
            }
        });
}

// Mean absolute error. Subgradient at zero is taken as zero.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.shape() == b.shape(), "l1_loss",
                    "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = a.numel();
    auto av = a.values();
    auto bv = b.values();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        total += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
    auto an = a.node();
    auto bn = b.node();
    return detail::make_node<T>(
        "l1_loss", {1}, {static_cast<T>(total / n)}, {an, bn}, [an, bn, n](TensorNode<T>& self) {
            const T g = self.grad[0] / static_cast<T>(n);
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const T diff = an->value[i] - bn->value[i];
                const T s = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                if (an->requires_grad) an->grad[i] += g * s;
                if (bn->requires_grad) bn->grad[i] -= g * s;
            }
        });
}

// Concatenation along axis 0 (stack rows) or axis 1 (side by side).
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    detail::require(!parts.empty(), "concat", "needs at least one part");
    detail::require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
    for (const auto& p : parts)
        detail::require(p.shape().size() == 2, "concat", "expects rank-2 parts");

    std::size_t n = 0, d = 0;
    if (axis == 0) {
        d = parts[0].cols();
        for (const auto& p : parts) {
            detail::require(p.cols() == d, "concat", "column counts differ");
            n += p.rows();
        }
    } else {
        n = parts[0].rows();
        for (const auto& p : parts) {
            detail::require(p.rows() == n, "concat", "row counts differ");
            d += p.cols();
        }
    }
    std::vector<T> out(n * d);
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    nodes.reserve(parts.size());
    if (axis == 0) {
        std::size_t row = 0;
        for (const auto& p : parts) {
            std::copy_n(p.values().data(), p.numel(), out.data() + row * d);
            row += p.rows();
            nodes.push_back(p.node());
        }
    } else {
        std::size_t col = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.cols();
            for (std::size_t r = 0; r < n; ++r)
                std::copy_n(p.values().data() + r * pc, pc, out.data() + r * d + col);
            col += pc;
            nodes.push_back(p.node());
        }
    }
    return detail::make_node<T>(
        "concat", {n, d}, std::move(out), nodes, [nodes, axis, n, d](TensorNode<T>& self) {
            std::size_t offset = 0;
            for (const auto& p : nodes) {
                const std::size_t pr = p->shape[0], pc = p->shape[1];
                if (p->requires_grad) {
                    p->ensure_grad();
                    if (axis == 0) {
                        for (std::size_t i = 0; i < pr * pc; ++i)
                            p->grad[i] += self.grad[offset * d + i];
                    } else {
                        for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t c = 0; c < pc; ++c)
                                p->grad[r * pc + c] += self.grad[r * d + offset + c];
                    }
                }
                offset += (axis == 0) ? pr : pc;
            }
        });
}

// Rectangular sub-block [r0,r1) x [c0,c1) of a rank-2 tensor.
template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t r0, std::size_t r1, std::size_t c0,
                std::size_t c1) {
    detail::require(a.shape().size() == 2, "slice", "expects rank-2 operand");
    const std::size_t n = a.rows(), d = a.cols();
    detail::require(r0 <= r1 && r1 <= n && c0 <= c1 && c1 <= d, "slice",
                    "range out of bounds for " + shape_str(a.shape()));
    const std::size_t sn = r1 - r0, sd = c1 - c0;
    detail::require(sn >= 1 && sd >= 1, "slice", "empty slice");
    std::vector<T> out(sn * sd);
    auto av = a.values();
    for (std::size_t r = 0; r < sn; ++r)
        std::copy_n(av.data() + (r0 + r) * d + c0, sd, out.data() + r * sd);
    auto an = a.node();
    return detail::make_node<T>("slice", {sn, sd}, std::move(out), {an},
                                [an, r0, c0, sn, sd, d](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    for (std::size_t r = 0; r < sn; ++r)
                                        for (std::size_t c = 0; c < sd; ++c)
                                            an->grad[(r0 + r) * d + c0 + c] +=
                                                self.grad[r * sd + c];
                                });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    double total = 0.0;
    for (const T& x : a.values()) total += static_cast<double>(x);
    auto an = a.node();
    return detail::make_node<T>("sum", {1}, {static_cast<T>(total)}, {an},
                                [an](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    for (auto& g : an->grad) g += self.grad[0];
                                });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    const std::size_t n = a.numel();
    double total = 0.0;
    for (const T& x : a.values()) total += static_cast<double>(x);
    auto an = a.node();
    return detail::make_node<T>("mean", {1}, {static_cast<T>(total / n)}, {an},
                                [an, n](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    const T g = self.grad[0] / static_cast<T>(n);
                                    for (auto& gx : an->grad) gx += g;
                                });
}

// Column means of a rank-2 tensor (mean pooling over rows).
template <class T>
Tensor<T> mean_rows(const Tensor<T>& a) {
    detail::require(a.shape().size() == 2, "mean_rows", "expects rank-2 operand");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<T> out(d, T(0));
    auto av = a.values();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out[c] += av[r * d + c];
    for (auto& x : out) x /= static_cast<T>(n);
    auto an = a.node();
    return detail::make_node<T>("mean_rows", {d}, std::move(out), {an},
                                [an, n, d](TensorNode<T>& self) {
                                    if (!an->requires_grad) return;
                                    an->ensure_grad();
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t c = 0; c < d; ++c)
                                            an->grad[r * d + c] +=
                                                self.grad[c] / static_cast<T>(n);
                                });
}

// Mean squared error, composed from the primitive ops.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> diff = sub(a, b);
    return mean(mul(diff, diff));
}

// Forward value is `values`; the backward pass treats the op as identity in
// x. This is the quantizer pass-through (straight-through estimator).
template <class T>
Tensor<T> straight_through(const Tensor<T>& x, std::vector<T> values) {
    detail::require(values.size() == x.numel(), "straight_through",
                    "replacement size does not match input");
    auto xn = x.node();
    return detail::make_node<T>("straight_through", x.shape(), std::move(values), {xn},
                                [xn](TensorNode<T>& self) {
                                    if (!xn->requires_grad) return;
                                    detail::accumulate(*xn, self.grad);
                                });
}

// Copies values into a fresh constant leaf, cutting the graph.
template <class T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>::from(a.shape(), std::vector<T>(a.values().begin(), a.values().end()));
}

// ---- backward -------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Visits each node exactly once in
// reverse topological order. Calling backward twice on the same graph is an
// error; graphs are rebuilt per step.
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw DomainError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    auto root = loss.node();
    if (!root->requires_grad) {
        throw DomainError("backward: loss does not depend on any parameter");
    }
    if (root->backward_ran) {
        throw DomainError("backward: graph already consumed (double backward)");
    }

    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<T>* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* node = *it;
        if (node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
            node->backward_ran = true;
        }
    }
    root->backward_ran = true;
}

// ---- optimizer --------------------------------------------------------------

// Standard Adam (Kingma, Ba 2015) with bias correction. Updates are applied
// in parameter-list order with plain loops, so trajectories are bit-stable.
template <class T>
class Adam {
public:
    explicit Adam(std::vector<Tensor<T>> params, T lr = T(1e-3), T beta1 = T(0.9),
                  T beta2 = T(0.999), T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), T(0));
            v_[i].assign(params_[i].numel(), T(0));
        }
    }

    void set_lr(T lr) { lr_ = lr; }
    T lr() const { return lr_; }

    // One update from the gradients currently accumulated on the parameters.
    // Parameters without an allocated gradient are treated as zero-grad.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            auto values = p.values_mut();
            const T* gp = p.has_grad() ? p.grad().data() : nullptr;
            for (std::size_t j = 0; j < values.size(); ++j) {
                const T g = gp ? gp[j] : T(0);
                m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g * g;
                const double mhat = static_cast<double>(m_[i][j]) / bc1;
                const double vhat = static_cast<double>(v_[i][j]) / bc2;
                values[j] -= static_cast<T>(static_cast<double>(lr_) * mhat /
                                            (std::sqrt(vhat) + static_cast<double>(eps_)));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    const std::vector<Tensor<T>>& params() const { return params_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    T lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace masklab

#endif  // MASKLAB_TENSOR_HPP
