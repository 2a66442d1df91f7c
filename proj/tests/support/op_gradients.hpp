#pragma once

#include <string>

#include "support/gradcheck.hpp"

namespace retgen::test {

// Central finite-difference sweep over every differentiable operation.
// Returns an empty string on success, else a description of the first
// mismatch.
inline std::string check_all_op_gradients(uint64_t seed) {
    using namespace retgen::num;
    using T64 = Tensor<double>;
    Rng rng(seed);
    std::string failure;
    auto check = [&](const char* name, auto&& forward, std::vector<T64> params) {
        if (!failure.empty()) return;
        auto r = check_gradients(forward, params, 1e-5, 1e-4, 1e-8);
        if (!r.ok) failure = std::string(name) + ": " + r.detail;
    };

    const int64_t n = 2 + int64_t(rng.bounded(3));
    const int64_t d = 3 + int64_t(rng.bounded(3));
    const int64_t o = 2 + int64_t(rng.bounded(3));
    auto x = random_tensor({n, d}, rng, true);
    auto w = random_tensor({d, o}, rng, true);
    auto b = random_tensor({o}, rng, true);
    check("matmul", [&] { return sum_all(mul(matmul(x, w), matmul(x, w))); }, {x, w});
    check("apply_linear", [&] { return sum_all(mul(apply_linear(x, w, b), apply_linear(x, w, b))); },
          {x, w, b});

    auto a1 = random_tensor({2, 5}, rng, true);
    auto a2 = random_tensor({2, 5}, rng, true);
    check("add+mul+scale", [&] { return sum_all(mul(add(a1, scale(a2, 0.3)), a2)); }, {a1, a2});
    auto bias = random_tensor({5}, rng, true);
    check("add_bias", [&] { return sum_all(mul(add_bias(a1, bias), a1)); }, {a1, bias});
    auto per_row = random_tensor({2}, rng, true);
    check("add_per_row", [&] { return sum_all(mul(add_per_row(a1, per_row), a1)); },
          {a1, per_row});
    std::vector<double> mask(10, 0.0);
    mask[3] = -2.5;
    check("add_const", [&] { return sum_all(mul(add_const(a1, mask), a1)); }, {a1});
    check("gelu", [&] { return sum_all(mul(gelu(a1), a1)); }, {a1});
    check("softmax_rows", [&] { return sum_all(mul(softmax_rows(a1), a1)); }, {a1});
    check("log_softmax_rows", [&] { return sum_all(mul(log_softmax_rows(a1), a1)); }, {a1});
    auto gain = random_tensor({5}, rng, true);
    auto nbias = random_tensor({5}, rng, true);
    check("layer_norm_rows", [&] { return sum_all(mul(layer_norm_rows(a1, gain, nbias), a1)); },
          {a1, gain, nbias});

    auto table = random_tensor({6, 3}, rng, true);
    std::vector<int> ids{2, 5, 5, 0};
    check("embedding_rows",
          [&] { return sum_all(mul(embedding_rows(table, ids), embedding_rows(table, ids))); },
          {table});

    auto m6 = random_tensor({3, 6}, rng, true);
    check("slice+concat+transpose",
          [&] {
              std::vector<T64> parts{slice_cols(m6, 0, 2), slice_cols(m6, 2, 6)};
              return sum_all(mul(transpose(concat_cols(std::span<const T64>(parts))),
                                 transpose(m6)));
          },
          {m6});
    check("mean_rows", [&] { return dot(mean_rows(m6), mean_rows(m6)); }, {m6});
    std::vector<int> picks{4, 0, 2};
    check("pick_per_row", [&] { return sum_all(mul(pick_per_row(m6, picks), pick_per_row(m6, picks))); },
          {m6});

    auto r0 = random_tensor({4}, rng, true);
    auto r1 = random_tensor({4}, rng, true);
    auto lw = random_tensor({2}, rng, true);
    check("stack_rows+logsumexp_over_rows",
          [&] {
              std::vector<T64> rows{r0, r1};
              return sum_all(logsumexp_over_rows(add_per_row(stack_rows(std::span<const T64>(rows)), lw)));
          },
          {r0, r1, lw});

    auto c = random_tensor({2, 3}, rng, true);
    for (auto& v : c.values()) v = v > 0 ? v + 0.5 : v - 0.5; // keep off the clamp kink
    check("clamp_min", [&] { return sum_all(mul(clamp_min(c, 0.0), c)); }, {c});
    auto s = random_tensor({1}, rng, true);
    check("sub_scalar", [&] { return sum_all(mul(sub_scalar(r0, s), r0)); }, {r0, s});
    check("dot+sum_all", [&] { return mul(dot(r0, r1), sum_all(r0)); }, {r0, r1});

    // dropout with a replayed mask: re-seed the stream on every evaluation
    check("dropout",
          [&] {
              Rng drop(42);
              return sum_all(mul(dropout(a1, 0.4, drop), a1));
          },
          {a1});

    auto logits = random_tensor({4, 6}, rng, true);
    std::vector<int> targets{2, -1, 5, 0};
    check("cross_entropy", [&] { return cross_entropy(log_softmax_rows(logits), targets, -1); },
          {logits});
    return failure;
}

} // namespace retgen::test
