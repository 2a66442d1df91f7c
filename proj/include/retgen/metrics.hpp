#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retgen/common.hpp"

namespace retgen::eval {

// Answer normalization: lowercase, strip punctuation, collapse whitespace,
// optionally drop the articles a/an/the. Article stripping stays off for
// classification labels.
std::string normalize_answer(std::string_view text, bool strip_articles = true);

// Token-overlap F1 between normalized strings; both empty counts as a match.
double squad_f1(std::string_view prediction, std::string_view gold, bool strip_articles = true);
int exact_match(std::string_view prediction, std::string_view gold, bool strip_articles = true);

enum class ClsMetric { accuracy, macro_f1 };

// Predictions outside the label set count as wrong, never remapped.
double classification_metric(std::span<const std::string> predictions,
                             std::span<const std::string> golds,
                             std::span<const std::string> label_set, ClsMetric metric);

struct AnswerExtraction {
    std::string raw;
    std::string answer;
    bool ok = false;
};

// The answer is everything after the final "answer:" header, trimmed.
AnswerExtraction extract_answer(std::string_view generated);

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0; // population estimator
};

Aggregate aggregate(std::span<const double> per_seed_scores);

} // namespace retgen::eval
