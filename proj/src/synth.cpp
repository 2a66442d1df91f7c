#include "retgen/synth.hpp"

#include <algorithm>
#include <cstdio>

namespace retgen::synth {

using bank::RawExample;
using bank::TaskKind;

namespace {

std::string key_word(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "k%03d", i);
    return buf;
}

std::string value_word(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%02d", i);
    return buf;
}

RawExample recall_example(const std::string& task, const std::string& id, const std::string& key,
                          const std::string& value) {
    RawExample ex;
    ex.task_id = task;
    ex.kind = TaskKind::extractive_qa;
    ex.id = id;
    ex.question = "which value is stored under " + key + " ?";
    ex.answer = value;
    return ex;
}

} // namespace

RecallCorpus make_recall_corpus(const RecallOptions& opts) {
    if (opts.n_keys <= opts.n_eval || opts.n_eval < 1 || opts.n_values < 2 ||
        opts.queries_per_key < 1)
        throw ContractError("bad recall corpus options");
    Rng rng(opts.seed);
    std::vector<std::string> values(size_t(opts.n_keys));
    for (auto& v : values) v = value_word(int(rng.bounded(uint64_t(opts.n_values))));

    RecallCorpus corpus;
    const int n_train_keys = opts.n_keys - opts.n_eval;
    for (int i = 0; i < opts.n_keys; ++i)
        corpus.bank_examples.push_back(
            recall_example("recall-bank", "bank-" + key_word(i), key_word(i), values[size_t(i)]));

    for (int q = 0; q < opts.queries_per_key; ++q)
        for (int i = 0; i < n_train_keys; ++i)
            corpus.train_queries.push_back(recall_example(
                "recall-train", "train-" + std::to_string(q) + "-" + key_word(i), key_word(i),
                values[size_t(i)]));

    for (int i = n_train_keys; i < opts.n_keys; ++i)
        corpus.eval_queries.push_back(
            recall_example("recall-eval", "eval-" + key_word(i), key_word(i), values[size_t(i)]));

    // a 16-shot validation split over training keys, disjoint ids
    std::vector<int> order(size_t(n_train_keys), 0);
    for (int i = 0; i < n_train_keys; ++i) order[size_t(i)] = i;
    rng.shuffle(order);
    const int n_val = std::min(16, n_train_keys);
    for (int i = 0; i < n_val; ++i) {
        int k = order[size_t(i)];
        corpus.validation_16shot.push_back(
            recall_example("recall-val", "val-" + key_word(k), key_word(k), values[size_t(k)]));
    }
    return corpus;
}

HalfCoverage make_half_coverage(int n_eval, int n_bank, uint64_t seed) {
    if (n_eval < 2 || n_eval % 2 != 0 || n_bank < 1)
        throw ContractError("half-coverage fixture needs an even eval count");
    Rng rng(seed);
    HalfCoverage fixture;
    std::vector<RawExample> bank_examples;
    for (int i = 0; i < n_bank; ++i) {
        RawExample ex;
        ex.task_id = "coverage-bank";
        ex.kind = TaskKind::extractive_qa;
        ex.id = "cov-bank-" + std::to_string(i);
        ex.question = "what word repeats in entry " + std::to_string(i) + " ?";
        ex.answer = "alpha";
        ex.context = {"entry " + std::to_string(i) + " mentions alpha and little else."};
        bank_examples.push_back(ex);
    }
    fixture.bank = bank::build_bank(bank_examples, {});
    for (int i = 0; i < n_eval; ++i) {
        RawExample ex;
        ex.task_id = "coverage-eval";
        ex.kind = TaskKind::extractive_qa;
        ex.id = "cov-eval-" + std::to_string(i);
        ex.question = "what is covered term " + std::to_string(i) + " ?";
        // even rows are answered by every bank entry; odd rows by none
        ex.answer = (i % 2 == 0) ? "alpha" : ("zq" + std::to_string(i) + "x");
        ex.context = {"query " + std::to_string(int(rng.bounded(1000))) + "."};
        fixture.eval_examples.push_back(ex);
    }
    return fixture;
}

} // namespace retgen::synth
