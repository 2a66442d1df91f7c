#pragma once

#include <span>
#include <string>
#include <vector>

#include "retgen/bank.hpp"
#include "retgen/metrics.hpp"
#include "retgen/mips.hpp"
#include "retgen/ragmodel.hpp"

namespace retgen::eval {

enum class RetrieverKind { dense, random };
enum class MetricKind { f1, em, accuracy, macro_f1 };

MetricKind parse_metric(std::string_view name);
std::string metric_name(MetricKind m);

struct EvalRunConfig {
    int k = 5;                       // 0 evaluates the unaugmented path
    RetrieverKind retriever = RetrieverKind::dense;
    uint64_t seed = 0;               // random-retriever draws
    bool allow_self_retrieval = false;
    int max_generate_len = 48;
    MetricKind metric = MetricKind::f1;
    bool strip_articles = true;      // QA normalization; labels are never altered
    bank::FormatVariant variant = bank::FormatVariant::options_in_context_generate_answer;
};

struct ExampleEval {
    std::string id;
    std::vector<model::RetrievalResult> retrieved;
    std::string raw_generation;
    std::string prediction; // extracted answer
    double score = 0.0;     // per-example F1/EM; classification scores at task level
};

struct TaskEval {
    double score = 0.0;
    std::vector<ExampleEval> examples;
    int fallback_count = 0; // retrieval exhausted; unaugmented context used
    int k_effective = 0;
};

std::vector<float> encode_bank(const model::RagModel<float>& m, const bank::MemoryBank& bank);

TaskEval evaluate_examples(const model::RagModel<float>& m, const bank::MemoryBank& bank,
                           const index::MipsIndex& ix, std::span<const bank::RawExample> examples,
                           const EvalRunConfig& cfg);

// Fraction of examples with at least one retrieved demonstration containing
// the normalized gold answer as a substring.
double answer_hit_rate(std::span<const ExampleEval> evals, std::span<const bank::RawExample> examples,
                       const bank::MemoryBank& bank);

struct FreqBinRow {
    int bin = 0;
    int64_t count = 0;
    double mean_f1 = 0.0;
    bool defined = false;
};

// Per-example count of retrieved demonstrations containing the gold answer,
// binned over 0..k, with the mean F1 per bin.
std::vector<FreqBinRow> frequency_bins(std::span<const ExampleEval> evals,
                                       std::span<const bank::RawExample> examples,
                                       const bank::MemoryBank& bank, int k);
std::string frequency_bins_tsv(std::span<const FreqBinRow> rows);

struct KSweepRow {
    int k = 0;
    int k_effective = 0;
    double score = 0.0;
};

std::vector<KSweepRow> k_sweep(const model::RagModel<float>& m, const bank::MemoryBank& bank,
                               const index::MipsIndex& ix,
                               std::span<const bank::RawExample> examples,
                               const EvalRunConfig& base_cfg, std::span<const int> k_values);
std::string k_sweep_tsv(std::span<const KSweepRow> rows);

struct EvalReport {
    std::string task_id;
    std::string metric;
    int shots = 0;
    int split_size = 0;
    int k = 0;
    bool oracle_bank = false;
    std::vector<uint64_t> seeds;
    std::vector<double> per_seed;
    double mean = 0.0;
    double stddev = 0.0;

    std::string to_json() const;
    std::string to_table() const;
};

EvalReport make_report(std::string task_id, MetricKind metric, int shots, int split_size, int k,
                       bool oracle_bank, std::span<const uint64_t> seeds,
                       std::span<const double> per_seed);

} // namespace retgen::eval
