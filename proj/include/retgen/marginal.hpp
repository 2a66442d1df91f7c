#pragma once

#include <span>
#include <string>
#include <vector>

#include "retgen/transformer.hpp"
#include "retgen/vocab.hpp"

namespace retgen::model {

enum class WeightNorm { softmax, sum };
WeightNorm parse_weight_norm(std::string_view name);
std::string weight_norm_name(WeightNorm norm);

struct RetrievalResult {
    int64_t entry_id = -1;
    double raw_score = 0.0; // inner product, kept for analysis
    double weight = 0.0;    // normalized document weight
};

// Normalizes raw retrieval scores into a distribution over the retrieved
// set. Softmax is the default; sum mode divides by the total after shifting
// non-positive scores.
std::vector<double> document_weights(std::span<const double> raw_scores,
                                     WeightNorm norm = WeightNorm::softmax);

// Truncates from the tail, which holds the context field in the formatted
// templates; the question at the head is never dropped.
std::vector<int> truncate_tail(std::span<const int> ids, int max_len);

// demonstration ++ <sep> ++ input, with the demonstration truncated first
// when the result would exceed max_len.
std::vector<int> assemble_context(std::span<const int> demo_ids, std::span<const int> input_ids,
                                  int max_len);

template <typename T>
struct MarginalContext {
    std::vector<std::vector<int>> contexts; // K >= 1 assembled contexts
    num::Tensor<T> log_weights;             // [K]
    std::vector<int> target;                // target ids, terminator included
};

// Constant log-weights from already-normalized document weights.
template <typename T>
num::Tensor<T> log_weight_tensor(std::span<const double> weights);

// Differentiable log-softmax over a score vector, for retriever training.
template <typename T>
num::Tensor<T> log_softmax_vec(const num::Tensor<T>& scores);

struct MarginalStats {
    int floored_positions = 0; // positions clamped at the probability floor
};

// log p(y|x) = sum_i log sum_k w_k p(y_i | context_k, y_<i), teacher forced.
template <typename T>
num::Tensor<T> marginal_sequence_logprob(const Seq2Seq<T>& gen, const MarginalContext<T>& ctx,
                                         MarginalStats* stats = nullptr);

// Single-context teacher-forced log-probability; the K=1 reduction target.
template <typename T>
num::Tensor<T> sequence_logprob_single(const Seq2Seq<T>& gen, const std::vector<int>& context,
                                       const std::vector<int>& target);

// Mean negative marginal log-probability per target token over a batch.
template <typename T>
num::Tensor<T> marginal_loss(const Seq2Seq<T>& gen, std::span<const MarginalContext<T>> batch,
                             MarginalStats* stats = nullptr);

struct GenerateResult {
    std::vector<int> ids;
    bool truncated = false;
};

// Greedy decoding under the per-step marginal distribution. Ties resolve to
// the lowest token id; deterministic given parameters.
template <typename T>
GenerateResult generate(const Seq2Seq<T>& gen, const std::vector<std::vector<int>>& contexts,
                        std::span<const T> weights, int max_len,
                        std::vector<std::vector<T>>* step_distributions = nullptr);

} // namespace retgen::model
