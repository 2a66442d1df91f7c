#include "retgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace retgen::num {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < s.size(); ++i) ss << (i ? " x " : "") << s[i];
    ss << "]";
    return ss.str();
}

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
void require_finite(std::span<const T> v, const char* what) {
    if (!finite_checks_enabled()) return;
    for (T x : v) {
        if (!std::isfinite(x)) throw ContractError(std::string("non-finite value produced by ") + what);
    }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(size_t(numel(t.node_->shape)), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    if (int64_t(values.size()) != numel(shape))
        throw DimensionError("value count does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw ContractError("item() requires a single-element tensor");
    return node_->value[0];
}

namespace {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn, const char* what) {
    require_finite<T>(values, what);
    Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg && g_grad_enabled) {
        out.node()->requires_grad = true;
        out.node()->parents.reserve(parents.size());
        for (auto& p : parents) out.node()->parents.push_back(p.node());
        out.node()->backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename T>
void check_rank(const Tensor<T>& t, int64_t r, const char* what) {
    if (t.rank() != r)
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                             shape_str(t.shape()));
}

} // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_rank(a, 2, "matmul");
    check_rank(b, 2, "matmul");
    const int64_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<T> out(size_t(m * n), T(0));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    for (int64_t i = 0; i < m; ++i) {
        T* orow = out.data() + i * n;
        const T* arow = av + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T aip = arow[p];
            if (aip == T(0)) continue;
            const T* brow = bv + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return make_result<T>(
        {m, n}, std::move(out), {a, b},
        [an, bn, m, k, n](Node<T>& self) {
            const T* g = self.grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                T* da = an->grad.data();
                const T* bv = bn->value.data();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) {
                        const T gij = g[i * n + j];
                        if (gij == T(0)) continue;
                        const T* brow = bv + 0;
                        for (int64_t p = 0; p < k; ++p) da[i * k + p] += gij * brow[p * n + j];
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* db = bn->grad.data();
                const T* av = an->value.data();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t p = 0; p < k; ++p) {
                        const T aip = av[i * k + p];
                        if (aip == T(0)) continue;
                        const T* grow = g + i * n;
                        for (int64_t j = 0; j < n; ++j) db[p * n + j] += aip * grow[j];
                    }
            }
        },
        "matmul");
}

template <typename T>
Tensor<T> apply_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    check_rank(b, 1, "apply_linear bias");
    if (w.rank() != 2 || b.shape()[0] != w.cols())
        throw DimensionError("apply_linear: bias length must equal weight output width");
    return add_bias(matmul(x, w), b);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.values().begin(), a.values().end());
    const T* bv = b.values().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto an = a.node(), bn = b.node();
    return make_result<T>(
        a.shape(), std::move(out), {a, b},
        [an, bn](Node<T>& self) {
            for (auto* p : {an.get(), bn.get()}) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
            }
        },
        "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(size_t(a.size()), T(0));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return make_result<T>(
        a.shape(), std::move(out), {a, b},
        [an, bn](Node<T>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
            }
        },
        "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (T& v : out) v *= c;
    auto an = a.node();
    return make_result<T>(
        a.shape(), std::move(out), {a},
        [an, c](Node<T>& self) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
        },
        "scale");
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    check_rank(x, 2, "add_bias");
    check_rank(b, 1, "add_bias");
    const int64_t n = x.rows(), d = x.cols();
    if (b.shape()[0] != d) throw DimensionError("add_bias: bias length does not match row width");
    std::vector<T> out(x.values().begin(), x.values().end());
    const T* bv = b.values().data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[size_t(i * d + j)] += bv[j];
    auto xn = x.node(), bn = b.node();
    return make_result<T>(
        x.shape(), std::move(out), {x, b},
        [xn, bn, n, d](Node<T>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) bn->grad[size_t(j)] += self.grad[size_t(i * d + j)];
            }
        },
        "add_bias");
}

template <typename T>
Tensor<T> add_per_row(const Tensor<T>& x, const Tensor<T>& v) {
    check_rank(x, 2, "add_per_row");
    check_rank(v, 1, "add_per_row");
    const int64_t k = x.rows(), n = x.cols();
    if (v.shape()[0] != k) throw DimensionError("add_per_row: vector length does not match row count");
    std::vector<T> out(x.values().begin(), x.values().end());
    const T* vv = v.values().data();
    for (int64_t r = 0; r < k; ++r)
        for (int64_t j = 0; j < n; ++j) out[size_t(r * n + j)] += vv[r];
    auto xn = x.node(), vn = v.node();
    return make_result<T>(
        x.shape(), std::move(out), {x, v},
        [xn, vn, k, n](Node<T>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
            }
            if (vn->requires_grad) {
                vn->ensure_grad();
                for (int64_t r = 0; r < k; ++r) {
                    T s = 0;
                    for (int64_t j = 0; j < n; ++j) s += self.grad[size_t(r * n + j)];
                    vn->grad[size_t(r)] += s;
                }
            }
        },
        "add_per_row");
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& x, const std::vector<T>& c) {
    if (c.size() != size_t(x.size())) throw DimensionError("add_const: constant size mismatch");
    std::vector<T> out(x.values().begin(), x.values().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] += c[i];
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        },
        "add_const");
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    // tanh approximation; smooth everywhere, which keeps finite-difference
    // checks clean
    constexpr T kC = T(0.7978845608028654); // sqrt(2/pi)
    constexpr T kA = T(0.044715);
    std::vector<T> out(size_t(x.size()));
    const T* xv = x.values().data();
    for (size_t i = 0; i < out.size(); ++i) {
        T v = xv[i];
        T u = kC * (v + kA * v * v * v);
        out[i] = T(0.5) * v * (T(1) + std::tanh(u));
    }
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                T v = xn->value[i];
                T u = kC * (v + kA * v * v * v);
                T t = std::tanh(u);
                T du = kC * (T(1) + T(3) * kA * v * v);
                T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
                xn->grad[i] += self.grad[i] * d;
            }
        },
        "gelu");
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    check_rank(x, 2, "softmax_rows");
    const int64_t n = x.rows(), d = x.cols();
    std::vector<T> out(size_t(n * d));
    const T* xv = x.values().data();
    for (int64_t i = 0; i < n; ++i) {
        const T* row = xv + i * d;
        T m = row[0];
        for (int64_t j = 1; j < d; ++j) m = std::max(m, row[j]);
        T s = 0;
        for (int64_t j = 0; j < d; ++j) {
            T e = std::exp(row[j] - m);
            out[size_t(i * d + j)] = e;
            s += e;
        }
        for (int64_t j = 0; j < d; ++j) out[size_t(i * d + j)] /= s;
    }
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn, n, d](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const T* y = self.value.data() + i * d;
                const T* g = self.grad.data() + i * d;
                T s = 0;
                for (int64_t j = 0; j < d; ++j) s += y[j] * g[j];
                for (int64_t j = 0; j < d; ++j) xn->grad[size_t(i * d + j)] += y[j] * (g[j] - s);
            }
        },
        "softmax_rows");
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
    check_rank(x, 2, "log_softmax_rows");
    const int64_t n = x.rows(), d = x.cols();
    std::vector<T> out(size_t(n * d));
    const T* xv = x.values().data();
    for (int64_t i = 0; i < n; ++i) {
        const T* row = xv + i * d;
        T m = row[0];
        for (int64_t j = 1; j < d; ++j) m = std::max(m, row[j]);
        T s = 0;
        for (int64_t j = 0; j < d; ++j) s += std::exp(row[j] - m);
        T lse = m + std::log(s);
        for (int64_t j = 0; j < d; ++j) out[size_t(i * d + j)] = row[j] - lse;
    }
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn, n, d](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const T* y = self.value.data() + i * d;
                const T* g = self.grad.data() + i * d;
                T s = 0;
                for (int64_t j = 0; j < d; ++j) s += g[j];
                for (int64_t j = 0; j < d; ++j)
                    xn->grad[size_t(i * d + j)] += g[j] - std::exp(y[j]) * s;
            }
        },
        "log_softmax_rows");
}

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    check_rank(x, 2, "layer_norm_rows");
    const int64_t n = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d)
        throw DimensionError("layer_norm_rows: gain/bias length must equal row width");
    std::vector<T> out(size_t(n * d));
    std::vector<T> inv_std(size_t(n), T(0));
    std::vector<T> mean(size_t(n), T(0));
    const T* xv = x.values().data();
    const T* gv = gain.values().data();
    const T* bv = bias.values().data();
    for (int64_t i = 0; i < n; ++i) {
        const T* row = xv + i * d;
        T mu = 0;
        for (int64_t j = 0; j < d; ++j) mu += row[j];
        mu /= T(d);
        T var = 0;
        for (int64_t j = 0; j < d; ++j) {
            T c = row[j] - mu;
            var += c * c;
        }
        var /= T(d);
        T is = T(1) / std::sqrt(var + eps);
        mean[size_t(i)] = mu;
        inv_std[size_t(i)] = is;
        for (int64_t j = 0; j < d; ++j) out[size_t(i * d + j)] = (row[j] - mu) * is * gv[j] + bv[j];
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return make_result<T>(
        x.shape(), std::move(out), {x, gain, bias},
        [xn, gn, bn, n, d, mean, inv_std](Node<T>& self) {
            for (int64_t i = 0; i < n; ++i) {
                const T* row = xn->value.data() + i * d;
                const T* g = self.grad.data() + i * d;
                const T mu = mean[size_t(i)];
                const T is = inv_std[size_t(i)];
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int64_t j = 0; j < d; ++j)
                        gn->grad[size_t(j)] += g[j] * (row[j] - mu) * is;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int64_t j = 0; j < d; ++j) bn->grad[size_t(j)] += g[j];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    // dxhat = g * gain; dx via standard layernorm backward
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int64_t j = 0; j < d; ++j) {
                        T xhat = (row[j] - mu) * is;
                        T dxhat = g[j] * gn->value[size_t(j)];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    for (int64_t j = 0; j < d; ++j) {
                        T xhat = (row[j] - mu) * is;
                        T dxhat = g[j] * gn->value[size_t(j)];
                        xn->grad[size_t(i * d + j)] +=
                            is * (dxhat - sum_dxhat / T(d) - xhat * sum_dxhat_xhat / T(d));
                    }
                }
            }
        },
        "layer_norm_rows");
}

template <typename T>
Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<int>& ids) {
    check_rank(table, 2, "embedding_rows");
    const int64_t v = table.rows(), d = table.cols();
    if (ids.empty()) throw DimensionError("embedding_rows: empty id list");
    for (int id : ids)
        if (id < 0 || id >= v) throw IndexError("embedding_rows: id " + std::to_string(id) + " out of range");
    const int64_t n = int64_t(ids.size());
    std::vector<T> out(size_t(n * d));
    const T* tv = table.values().data();
    for (int64_t i = 0; i < n; ++i)
        std::copy(tv + int64_t(ids[size_t(i)]) * d, tv + (int64_t(ids[size_t(i)]) + 1) * d,
                  out.begin() + i * d);
    auto tn = table.node();
    return make_result<T>(
        {n, d}, std::move(out), {table},
        [tn, ids, d](Node<T>& self) {
            if (!tn->requires_grad) return;
            tn->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                T* dst = tn->grad.data() + int64_t(ids[i]) * d;
                const T* src = self.grad.data() + int64_t(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        },
        "embedding_rows");
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int64_t c0, int64_t c1) {
    check_rank(x, 2, "slice_cols");
    const int64_t n = x.rows(), d = x.cols();
    if (c0 < 0 || c1 > d || c0 >= c1) throw DimensionError("slice_cols: bad column range");
    const int64_t w = c1 - c0;
    std::vector<T> out(size_t(n * w));
    const T* xv = x.values().data();
    for (int64_t i = 0; i < n; ++i)
        std::copy(xv + i * d + c0, xv + i * d + c1, out.begin() + i * w);
    auto xn = x.node();
    return make_result<T>(
        {n, w}, std::move(out), {x},
        [xn, n, d, c0, w](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < w; ++j)
                    xn->grad[size_t(i * d + c0 + j)] += self.grad[size_t(i * w + j)];
        },
        "slice_cols");
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty input");
    const int64_t n = parts[0].rows();
    int64_t total = 0;
    for (const auto& p : parts) {
        check_rank(p, 2, "concat_cols");
        if (p.rows() != n) throw DimensionError("concat_cols: row counts disagree");
        total += p.cols();
    }
    std::vector<T> out(size_t(n * total));
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p.cols();
        const T* pv = p.values().data();
        for (int64_t i = 0; i < n; ++i)
            std::copy(pv + i * w, pv + (i + 1) * w, out.begin() + i * total + off);
        off += w;
    }
    std::vector<Tensor<T>> parents(parts.begin(), parts.end());
    std::vector<int64_t> widths;
    for (const auto& p : parts) widths.push_back(p.cols());
    std::vector<std::shared_ptr<Node<T>>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return make_result<T>(
        {n, total}, std::move(out), std::move(parents),
        [pnodes, widths, n, total](Node<T>& self) {
            int64_t off = 0;
            for (size_t pi = 0; pi < pnodes.size(); ++pi) {
                const int64_t w = widths[pi];
                if (pnodes[pi]->requires_grad) {
                    pnodes[pi]->ensure_grad();
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t j = 0; j < w; ++j)
                            pnodes[pi]->grad[size_t(i * w + j)] += self.grad[size_t(i * total + off + j)];
                }
                off += w;
            }
        },
        "concat_cols");
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    check_rank(x, 2, "transpose");
    const int64_t n = x.rows(), d = x.cols();
    std::vector<T> out(size_t(n * d));
    const T* xv = x.values().data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[size_t(j * n + i)] = xv[i * d + j];
    auto xn = x.node();
    return make_result<T>(
        {d, n}, std::move(out), {x},
        [xn, n, d](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) xn->grad[size_t(i * d + j)] += self.grad[size_t(j * n + i)];
        },
        "transpose");
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    check_rank(x, 2, "mean_rows");
    const int64_t n = x.rows(), d = x.cols();
    std::vector<T> out(size_t(d), T(0));
    const T* xv = x.values().data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[size_t(j)] += xv[i * d + j];
    for (T& v : out) v /= T(n);
    auto xn = x.node();
    return make_result<T>(
        {d}, std::move(out), {x},
        [xn, n, d](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) xn->grad[size_t(i * d + j)] += self.grad[size_t(j)] / T(n);
        },
        "mean_rows");
}

template <typename T>
Tensor<T> pick_per_row(const Tensor<T>& logp, const std::vector<int>& ids) {
    check_rank(logp, 2, "pick_per_row");
    const int64_t n = logp.rows(), v = logp.cols();
    if (int64_t(ids.size()) != n) throw DimensionError("pick_per_row: id count must equal row count");
    for (int id : ids)
        if (id < 0 || id >= v) throw IndexError("pick_per_row: id out of range");
    std::vector<T> out(size_t(n), T(0));
    const T* pv = logp.values().data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pv[i * v + ids[size_t(i)]];
    auto pn = logp.node();
    return make_result<T>(
        {n}, std::move(out), {logp},
        [pn, ids, v](Node<T>& self) {
            if (!pn->requires_grad) return;
            pn->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i)
                pn->grad[size_t(int64_t(i) * v + ids[i])] += self.grad[i];
        },
        "pick_per_row");
}

template <typename T>
Tensor<T> stack_rows(std::span<const Tensor<T>> rows) {
    if (rows.empty()) throw DimensionError("stack_rows: empty input");
    const int64_t n = rows[0].size();
    for (const auto& r : rows) {
        check_rank(r, 1, "stack_rows");
        if (r.size() != n) throw DimensionError("stack_rows: lengths disagree");
    }
    const int64_t k = int64_t(rows.size());
    std::vector<T> out(size_t(k * n));
    for (int64_t r = 0; r < k; ++r)
        std::copy(rows[size_t(r)].values().begin(), rows[size_t(r)].values().end(), out.begin() + r * n);
    std::vector<Tensor<T>> parents(rows.begin(), rows.end());
    std::vector<std::shared_ptr<Node<T>>> pnodes;
    for (const auto& r : rows) pnodes.push_back(r.node());
    return make_result<T>(
        {k, n}, std::move(out), std::move(parents),
        [pnodes, n](Node<T>& self) {
            for (size_t r = 0; r < pnodes.size(); ++r) {
                if (!pnodes[r]->requires_grad) continue;
                pnodes[r]->ensure_grad();
                for (int64_t j = 0; j < n; ++j)
                    pnodes[r]->grad[size_t(j)] += self.grad[size_t(int64_t(r) * n + j)];
            }
        },
        "stack_rows");
}

template <typename T>
Tensor<T> logsumexp_over_rows(const Tensor<T>& x) {
    check_rank(x, 2, "logsumexp_over_rows");
    const int64_t k = x.rows(), n = x.cols();
    std::vector<T> out(size_t(n), T(0));
    const T* xv = x.values().data();
    for (int64_t j = 0; j < n; ++j) {
        T m = xv[j];
        for (int64_t r = 1; r < k; ++r) m = std::max(m, xv[r * n + j]);
        T s = 0;
        for (int64_t r = 0; r < k; ++r) s += std::exp(xv[r * n + j] - m);
        out[size_t(j)] = m + std::log(s);
    }
    auto xn = x.node();
    return make_result<T>(
        {n}, std::move(out), {x},
        [xn, k, n](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int64_t j = 0; j < n; ++j) {
                const T o = self.value[size_t(j)];
                const T g = self.grad[size_t(j)];
                for (int64_t r = 0; r < k; ++r)
                    xn->grad[size_t(r * n + j)] += g * std::exp(xn->value[size_t(r * n + j)] - o);
            }
        },
        "logsumexp_over_rows");
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
    std::vector<T> out(x.values().begin(), x.values().end());
    for (T& v : out) v = std::max(v, lo);
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn, lo](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (xn->value[i] > lo) xn->grad[i] += self.grad[i];
        },
        "clamp_min");
}

template <typename T>
Tensor<T> sub_scalar(const Tensor<T>& x, const Tensor<T>& s) {
    if (s.size() != 1) throw DimensionError("sub_scalar: subtrahend must be a scalar");
    std::vector<T> out(x.values().begin(), x.values().end());
    const T sv = s.values()[0];
    for (T& v : out) v -= sv;
    auto xn = x.node(), sn = s.node();
    return make_result<T>(
        x.shape(), std::move(out), {x, s},
        [xn, sn](Node<T>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                T g = 0;
                for (size_t i = 0; i < self.grad.size(); ++i) g += self.grad[i];
                sn->grad[0] -= g;
            }
        },
        "sub_scalar");
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    auto xn = x.node();
    return make_result<T>(
        {1}, {s}, {x},
        [xn](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += self.grad[0];
        },
        "sum_all");
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
    check_rank(a, 1, "dot");
    check_rank(b, 1, "dot");
    if (a.size() != b.size()) throw DimensionError("dot: lengths disagree");
    T s = 0;
    for (int64_t i = 0; i < a.size(); ++i) s += a.values()[size_t(i)] * b.values()[size_t(i)];
    auto an = a.node(), bn = b.node();
    return make_result<T>(
        {1}, {s}, {a, b},
        [an, bn](Node<T>& self) {
            const T g = self.grad[0];
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += g * an->value[i];
            }
        },
        "dot");
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng) {
    if (rate < T(0) || rate >= T(1)) throw ContractError("dropout: rate must be in [0, 1)");
    if (rate == T(0)) return x;
    const T keep = T(1) - rate;
    std::vector<T> mask(size_t(x.size()));
    for (T& m : mask) m = (T(rng.uniform()) < keep) ? T(1) / keep : T(0);
    std::vector<T> out(size_t(x.size()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
    auto xn = x.node();
    return make_result<T>(
        x.shape(), std::move(out), {x},
        [xn, mask](Node<T>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * mask[i];
        },
        "dropout");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& log_probs, const std::vector<int>& targets, int ignore_id,
                        bool* all_ignored) {
    check_rank(log_probs, 2, "cross_entropy");
    const int64_t n = log_probs.rows(), v = log_probs.cols();
    if (int64_t(targets.size()) != n)
        throw DimensionError("cross_entropy: target count must equal row count");
    int64_t count = 0;
    T s = 0;
    for (int64_t i = 0; i < n; ++i) {
        int t = targets[size_t(i)];
        if (t == ignore_id) continue;
        if (t < 0 || t >= v) throw IndexError("cross_entropy: target id out of range");
        s -= log_probs.values()[size_t(i * v + t)];
        ++count;
    }
    if (all_ignored) *all_ignored = (count == 0);
    if (count == 0) {
        // degenerate: every position ignored; defined as zero loss
        return make_result<T>({1}, {T(0)}, {log_probs}, [](Node<T>&) {}, "cross_entropy");
    }
    auto pn = log_probs.node();
    const T inv = T(1) / T(count);
    return make_result<T>(
        {1}, {s * inv}, {log_probs},
        [pn, targets, ignore_id, v, inv](Node<T>& self) {
            if (!pn->requires_grad) return;
            pn->ensure_grad();
            const T g = self.grad[0];
            for (size_t i = 0; i < targets.size(); ++i) {
                int t = targets[i];
                if (t == ignore_id) continue;
                pn->grad[size_t(int64_t(i) * v + t)] -= g * inv;
            }
        },
        "cross_entropy");
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.size() != 1) throw ContractError("backward: loss must be a scalar");
    if (!loss.requires_grad())
        throw ContractError("backward: loss was not produced by recorded operations");
    // iterative post-order DFS for a reverse topological order
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw DimensionError("softmax: empty input");
    require_finite(logits, "softmax input");
    T m = logits[0];
    for (T v : logits) m = std::max(m, v);
    std::vector<T> out(logits.size());
    T s = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        s += out[i];
    }
    for (T& v : out) v /= s;
    return out;
}

#define RETGEN_INSTANTIATE(T)                                                                        \
    template class Tensor<T>;                                                                        \
    template void require_finite<T>(std::span<const T>, const char*);                                \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> apply_linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                \
    template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> add_per_row<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> add_const<T>(const Tensor<T>&, const std::vector<T>&);                        \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                    \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                            \
    template Tensor<T> log_softmax_rows<T>(const Tensor<T>&);                                        \
    template Tensor<T> layer_norm_rows<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);  \
    template Tensor<T> embedding_rows<T>(const Tensor<T>&, const std::vector<int>&);                 \
    template Tensor<T> slice_cols<T>(const Tensor<T>&, int64_t, int64_t);                            \
    template Tensor<T> concat_cols<T>(std::span<const Tensor<T>>);                                   \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                               \
    template Tensor<T> mean_rows<T>(const Tensor<T>&);                                               \
    template Tensor<T> pick_per_row<T>(const Tensor<T>&, const std::vector<int>&);                   \
    template Tensor<T> stack_rows<T>(std::span<const Tensor<T>>);                                    \
    template Tensor<T> logsumexp_over_rows<T>(const Tensor<T>&);                                     \
    template Tensor<T> clamp_min<T>(const Tensor<T>&, T);                                            \
    template Tensor<T> sub_scalar<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                                 \
    template Tensor<T> dot<T>(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> dropout<T>(const Tensor<T>&, T, Rng&);                                        \
    template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<int>&, int, bool*);      \
    template void backward<T>(const Tensor<T>&);                                                     \
    template std::vector<T> softmax<T>(std::span<const T>);

RETGEN_INSTANTIATE(float)
RETGEN_INSTANTIATE(double)

#undef RETGEN_INSTANTIATE

} // namespace retgen::num
