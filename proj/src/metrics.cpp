#include "retgen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace retgen::eval {

std::string normalize_answer(std::string_view text, bool strip_articles) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        cleaned += char(std::tolower(u));
    }
    std::vector<std::string> tokens = split_ws(cleaned);
    if (strip_articles) {
        std::vector<std::string> kept;
        for (auto& t : tokens)
            if (t != "a" && t != "an" && t != "the") kept.push_back(std::move(t));
        tokens = std::move(kept);
    }
    return join(tokens, " ");
}

double squad_f1(std::string_view prediction, std::string_view gold, bool strip_articles) {
    auto p = split_ws(normalize_answer(prediction, strip_articles));
    auto g = split_ws(normalize_answer(gold, strip_articles));
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) gold_counts[t] += 1;
    int overlap = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = double(overlap) / double(p.size());
    double recall = double(overlap) / double(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

int exact_match(std::string_view prediction, std::string_view gold, bool strip_articles) {
    return normalize_answer(prediction, strip_articles) == normalize_answer(gold, strip_articles)
               ? 1
               : 0;
}

double classification_metric(std::span<const std::string> predictions,
                             std::span<const std::string> golds,
                             std::span<const std::string> label_set, ClsMetric metric) {
    if (predictions.empty() || predictions.size() != golds.size())
        throw ContractError("classification_metric: empty or mismatched inputs");
    std::vector<std::string> labels_norm;
    for (const auto& l : label_set) labels_norm.push_back(normalize_answer(l, false));

    auto map_label = [&](std::string_view raw) -> int {
        std::string n = normalize_answer(raw, false);
        for (size_t i = 0; i < labels_norm.size(); ++i)
            if (labels_norm[i] == n) return int(i);
        return -1; // invalid prediction, counted as wrong
    };

    std::vector<int> pred_ids(predictions.size()), gold_ids(golds.size());
    for (size_t i = 0; i < predictions.size(); ++i) {
        pred_ids[i] = map_label(predictions[i]);
        gold_ids[i] = map_label(golds[i]);
        if (gold_ids[i] < 0) throw ContractError("gold label not in the label set: " + golds[i]);
    }

    if (metric == ClsMetric::accuracy) {
        int correct = 0;
        for (size_t i = 0; i < pred_ids.size(); ++i)
            if (pred_ids[i] == gold_ids[i]) ++correct;
        return double(correct) / double(pred_ids.size());
    }

    // macro-F1: unweighted mean of per-label F1 over the label inventory
    double f1_sum = 0.0;
    for (int label = 0; label < int(labels_norm.size()); ++label) {
        int tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < pred_ids.size(); ++i) {
            if (pred_ids[i] == label && gold_ids[i] == label) ++tp;
            if (pred_ids[i] == label && gold_ids[i] != label) ++fp;
            if (pred_ids[i] != label && gold_ids[i] == label) ++fn;
        }
        double denom = 2.0 * tp + fp + fn;
        f1_sum += denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
    return f1_sum / double(labels_norm.size());
}

AnswerExtraction extract_answer(std::string_view generated) {
    AnswerExtraction out;
    out.raw = std::string(generated);
    size_t pos = generated.rfind("answer:");
    if (pos == std::string_view::npos) return out;
    out.answer = trim(generated.substr(pos + 7));
    out.ok = true;
    return out;
}

Aggregate aggregate(std::span<const double> per_seed_scores) {
    if (per_seed_scores.empty()) throw ContractError("aggregate: no scores");
    Aggregate a;
    for (double s : per_seed_scores) a.mean += s;
    a.mean /= double(per_seed_scores.size());
    double var = 0.0;
    for (double s : per_seed_scores) var += (s - a.mean) * (s - a.mean);
    a.stddev = std::sqrt(var / double(per_seed_scores.size()));
    return a;
}

} // namespace retgen::eval
