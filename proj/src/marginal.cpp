#include "retgen/marginal.hpp"

#include <algorithm>
#include <cmath>

namespace retgen::model {

using namespace retgen::num;

namespace {
constexpr double kProbFloor = 1e-30;
} // namespace

WeightNorm parse_weight_norm(std::string_view name) {
    if (name == "softmax") return WeightNorm::softmax;
    if (name == "sum") return WeightNorm::sum;
    throw ContractError("unknown weight normalization: " + std::string(name));
}

std::string weight_norm_name(WeightNorm norm) {
    return norm == WeightNorm::softmax ? "softmax" : "sum";
}

std::vector<double> document_weights(std::span<const double> raw_scores, WeightNorm norm) {
    if (raw_scores.empty()) throw DimensionError("document_weights: no scores");
    for (double s : raw_scores)
        if (!std::isfinite(s)) throw ContractError("document_weights: non-finite score");
    if (norm == WeightNorm::softmax) return num::softmax<double>(raw_scores);
    // sum mode: shift so all scores are positive, then divide by the total
    double lo = *std::min_element(raw_scores.begin(), raw_scores.end());
    double shift = lo > 0.0 ? 0.0 : -lo + 1e-9;
    double total = 0.0;
    std::vector<double> out(raw_scores.begin(), raw_scores.end());
    for (double& v : out) {
        v += shift;
        total += v;
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<int> truncate_tail(std::span<const int> ids, int max_len) {
    if (max_len < 0) throw ContractError("truncate_tail: negative length");
    size_t n = std::min(ids.size(), size_t(max_len));
    return std::vector<int>(ids.begin(), ids.begin() + long(n));
}

std::vector<int> assemble_context(std::span<const int> demo_ids, std::span<const int> input_ids,
                                  int max_len) {
    if (input_ids.empty()) throw ContractError("assemble_context: empty input");
    std::vector<int> input(input_ids.begin(), input_ids.end());
    if (int(input.size()) > max_len) input = truncate_tail(input, max_len);
    int demo_budget = max_len - int(input.size()) - 1;
    std::vector<int> out;
    if (demo_budget > 0 && !demo_ids.empty()) {
        std::vector<int> demo = truncate_tail(demo_ids, demo_budget);
        out.reserve(demo.size() + 1 + input.size());
        out.insert(out.end(), demo.begin(), demo.end());
        out.push_back(Vocabulary::kSep);
    }
    out.insert(out.end(), input.begin(), input.end());
    return out;
}

template <typename T>
Tensor<T> log_weight_tensor(std::span<const double> weights) {
    std::vector<T> lw(weights.size());
    for (size_t i = 0; i < weights.size(); ++i)
        lw[i] = T(std::log(std::max(weights[i], kProbFloor)));
    return Tensor<T>::from({int64_t(weights.size())}, std::move(lw));
}

template <typename T>
Tensor<T> log_softmax_vec(const Tensor<T>& scores) {
    std::vector<Tensor<T>> one{scores};
    Tensor<T> row = stack_rows(std::span<const Tensor<T>>(one)); // [1 x K]
    Tensor<T> lse = logsumexp_over_rows(transpose(row));         // [1]
    return sub_scalar(scores, lse);
}

namespace {

template <typename T>
std::vector<int> shifted_decoder_input(const std::vector<int>& target) {
    if (target.empty()) throw ContractError("empty target sequence");
    std::vector<int> dec_in(target.size());
    dec_in[0] = Vocabulary::kBos;
    for (size_t i = 1; i < target.size(); ++i) dec_in[i] = target[i - 1];
    return dec_in;
}

template <typename T>
Tensor<T> per_position_target_logprob(const Seq2Seq<T>& gen, const std::vector<int>& context,
                                      const std::vector<int>& target) {
    Tensor<T> enc = gen.encode(context);
    Tensor<T> logits = gen.decode_logits(enc, shifted_decoder_input<T>(target));
    return pick_per_row(log_softmax_rows(logits), target);
}

} // namespace

template <typename T>
Tensor<T> marginal_sequence_logprob(const Seq2Seq<T>& gen, const MarginalContext<T>& ctx,
                                    MarginalStats* stats) {
    if (ctx.contexts.empty()) throw ContractError("marginal_sequence_logprob: no contexts");
    if (!ctx.log_weights.defined() || ctx.log_weights.size() != int64_t(ctx.contexts.size()))
        throw DimensionError("marginal_sequence_logprob: weight count does not match contexts");
    std::vector<Tensor<T>> per_ctx;
    per_ctx.reserve(ctx.contexts.size());
    for (const auto& c : ctx.contexts)
        per_ctx.push_back(per_position_target_logprob(gen, c, ctx.target));
    Tensor<T> stacked = stack_rows(std::span<const Tensor<T>>(per_ctx)); // [K x N]
    Tensor<T> weighted = add_per_row(stacked, ctx.log_weights);
    Tensor<T> marginal = logsumexp_over_rows(weighted); // [N]
    const T floor = T(std::log(kProbFloor));
    if (stats)
        for (T v : marginal.values())
            if (v < floor) ++stats->floored_positions;
    return sum_all(clamp_min(marginal, floor));
}

template <typename T>
Tensor<T> sequence_logprob_single(const Seq2Seq<T>& gen, const std::vector<int>& context,
                                  const std::vector<int>& target) {
    Tensor<T> lp = per_position_target_logprob(gen, context, target);
    return sum_all(clamp_min(lp, T(std::log(kProbFloor))));
}

template <typename T>
Tensor<T> marginal_loss(const Seq2Seq<T>& gen, std::span<const MarginalContext<T>> batch,
                        MarginalStats* stats) {
    if (batch.empty()) throw ContractError("marginal_loss: empty batch");
    int64_t total_tokens = 0;
    for (const auto& ctx : batch) total_tokens += int64_t(ctx.target.size());
    Tensor<T> total = scale(marginal_sequence_logprob(gen, batch[0], stats), T(-1));
    for (size_t i = 1; i < batch.size(); ++i)
        total = add(total, scale(marginal_sequence_logprob(gen, batch[i], stats), T(-1)));
    return scale(total, T(1) / T(total_tokens));
}

template <typename T>
GenerateResult generate(const Seq2Seq<T>& gen, const std::vector<std::vector<int>>& contexts,
                        std::span<const T> weights, int max_len,
                        std::vector<std::vector<T>>* step_distributions) {
    if (contexts.empty()) throw ContractError("generate: no contexts");
    if (weights.size() != contexts.size())
        throw DimensionError("generate: weight count does not match contexts");
    if (max_len < 1) throw ContractError("generate: max_len must be at least 1");
    max_len = std::min(max_len, gen.config().max_target_len);
    NoGradGuard no_grad;
    std::vector<Tensor<T>> enc;
    enc.reserve(contexts.size());
    for (const auto& c : contexts) enc.push_back(gen.encode(c));
    const int64_t v = gen.vocab_size();

    GenerateResult result;
    std::vector<int> dec_in{Vocabulary::kBos};
    while (int(result.ids.size()) < max_len) {
        std::vector<T> marginal(size_t(v), T(0));
        for (size_t k = 0; k < contexts.size(); ++k) {
            Tensor<T> logits = gen.decode_logits(enc[k], dec_in);
            auto last = logits.values().subspan(size_t((logits.rows() - 1) * v), size_t(v));
            std::vector<T> p = num::softmax<T>(last);
            const T w = weights[k];
            if (w == T(0)) continue;
            if (w == T(1) && contexts.size() == 1) {
                marginal = std::move(p);
            } else {
                for (int64_t j = 0; j < v; ++j) marginal[size_t(j)] += w * p[size_t(j)];
            }
        }
        if (step_distributions) step_distributions->push_back(marginal);
        int best = 0;
        for (int64_t j = 1; j < v; ++j)
            if (marginal[size_t(j)] > marginal[size_t(best)]) best = int(j);
        if (best == Vocabulary::kEos) return result;
        result.ids.push_back(best);
        dec_in.push_back(best);
    }
    result.truncated = true;
    return result;
}

#define RETGEN_INSTANTIATE(T)                                                                       \
    template num::Tensor<T> log_weight_tensor<T>(std::span<const double>);                          \
    template num::Tensor<T> log_softmax_vec<T>(const num::Tensor<T>&);                              \
    template num::Tensor<T> marginal_sequence_logprob<T>(const Seq2Seq<T>&,                         \
                                                         const MarginalContext<T>&, MarginalStats*); \
    template num::Tensor<T> sequence_logprob_single<T>(const Seq2Seq<T>&, const std::vector<int>&,  \
                                                       const std::vector<int>&);                    \
    template num::Tensor<T> marginal_loss<T>(const Seq2Seq<T>&, std::span<const MarginalContext<T>>, \
                                             MarginalStats*);                                       \
    template GenerateResult generate<T>(const Seq2Seq<T>&, const std::vector<std::vector<int>>&,    \
                                        std::span<const T>, int, std::vector<std::vector<T>>*);

RETGEN_INSTANTIATE(float)
RETGEN_INSTANTIATE(double)

#undef RETGEN_INSTANTIATE

} // namespace retgen::model
