#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "retgen/common.hpp"

namespace retgen::num {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // allocated on first use, same size as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // accumulates into parents' grads

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// Shared handle to a node of the computation tape. Copies alias the same
// storage; parameters stay alive across steps while op results are released
// with the per-example graph.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T fill, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t size() const { return int64_t(node_->value.size()); }
    int64_t rank() const { return int64_t(node_->shape.size()); }
    int64_t rows() const { return node_->shape.at(0); }
    int64_t cols() const { return node_->shape.at(1); }

    std::span<T> values() { return node_->value; }
    std::span<const T> values() const { return node_->value; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    std::span<T> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const T> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    std::shared_ptr<Node<T>>& node() { return node_; }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

  private:
    std::shared_ptr<Node<T>> node_;
};

// Tape recording is on by default; a NoGradGuard suspends it for pure
// inference (decode loops, frozen encoders).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_enabled();

// ---- recorded operations ----

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> apply_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T c);
// x [n x d] + bias [d] broadcast over rows
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b);
// x [k x n] + v[k] broadcast over columns
template <typename T> Tensor<T> add_per_row(const Tensor<T>& x, const Tensor<T>& v);
// x + constant values (same shape), e.g. an additive attention mask
template <typename T> Tensor<T> add_const(const Tensor<T>& x, const std::vector<T>& c);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& x);
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                          T eps = T(1e-5));
template <typename T> Tensor<T> embedding_rows(const Tensor<T>& table, const std::vector<int>& ids);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& x, int64_t c0, int64_t c1);
template <typename T> Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
// [n x d] -> [d], mean over rows
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);
// logp [n x v], ids [n] -> [n]; out[i] = logp[i, ids[i]]
template <typename T> Tensor<T> pick_per_row(const Tensor<T>& logp, const std::vector<int>& ids);
template <typename T> Tensor<T> stack_rows(std::span<const Tensor<T>> rows);
// x [k x n] -> [n]; out[i] = log sum_k exp(x[k][i])
template <typename T> Tensor<T> logsumexp_over_rows(const Tensor<T>& x);
template <typename T> Tensor<T> clamp_min(const Tensor<T>& x, T lo);
// out[i] = x[i] - s[0]
template <typename T> Tensor<T> sub_scalar(const Tensor<T>& x, const Tensor<T>& s);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> dropout(const Tensor<T>& x, T rate, Rng& rng);

// Mean of -log p(target) over positions whose target differs from ignore_id.
// With every position ignored the loss is 0 and *all_ignored is set.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& log_probs, const std::vector<int>& targets, int ignore_id,
                        bool* all_ignored = nullptr);

template <typename T> void backward(const Tensor<T>& loss);

// Plain max-subtracted softmax over a vector, no tape.
template <typename T> std::vector<T> softmax(std::span<const T> logits);

template <typename T> void require_finite(std::span<const T> v, const char* what);

} // namespace retgen::num
