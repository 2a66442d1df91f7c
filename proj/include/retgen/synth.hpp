#pragma once

#include <string>
#include <vector>

#include "retgen/bank.hpp"
#include "retgen/records.hpp"

namespace retgen::synth {

// Associative-recall corpus: each bank entry states the value stored under a
// key; queries ask for a key's value. Evaluation keys never appear in the
// training queries, so their values are reachable only through retrieval.
struct RecallOptions {
    int n_keys = 500;
    int n_eval = 100;        // keys reserved for held-out queries
    int n_values = 100;      // value word inventory
    int queries_per_key = 1; // training queries per training key
    uint64_t seed = 7;
};

struct RecallCorpus {
    std::vector<bank::RawExample> bank_examples; // one per key
    std::vector<bank::RawExample> train_queries;
    std::vector<bank::RawExample> eval_queries;
    std::vector<bank::RawExample> validation_16shot;
};

RecallCorpus make_recall_corpus(const RecallOptions& opts);

// Hit-rate fixture: half the evaluation answers occur in every bank entry,
// half occur nowhere, so the hit rate is exactly one half no matter what
// gets retrieved.
struct HalfCoverage {
    std::vector<bank::RawExample> eval_examples;
    bank::MemoryBank bank;
};

HalfCoverage make_half_coverage(int n_eval, int n_bank, uint64_t seed);

} // namespace retgen::synth
