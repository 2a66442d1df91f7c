#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "retgen/synth.hpp"

// Writes the synthetic associative-recall corpus as task record files, ready
// for build-bank / meta-train / evaluate runs.
int main(int argc, char** argv) {
    CLI::App app{"Synthetic corpus generator"};
    app.require_subcommand(1);
    auto* recall = app.add_subcommand("recall", "key/value associative-recall corpus");
    retgen::synth::RecallOptions opts;
    std::string out;
    recall->add_option("--keys", opts.n_keys, "bank entries");
    recall->add_option("--eval", opts.n_eval, "held-out queries");
    recall->add_option("--values", opts.n_values, "value word inventory");
    recall->add_option("--queries-per-key", opts.queries_per_key, "training queries per key");
    recall->add_option("--seed", opts.seed, "corpus seed");
    recall->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto corpus = retgen::synth::make_recall_corpus(opts);
        std::filesystem::create_directories(out);
        namespace fs = std::filesystem;
        retgen::bank::write_examples((fs::path(out) / "bank.jsonl").string(), corpus.bank_examples);
        retgen::bank::write_examples((fs::path(out) / "train.jsonl").string(), corpus.train_queries);
        retgen::bank::write_examples((fs::path(out) / "eval.jsonl").string(), corpus.eval_queries);
        retgen::bank::write_examples((fs::path(out) / "val16.jsonl").string(),
                                     corpus.validation_16shot);
        std::cerr << "recall corpus: " << corpus.bank_examples.size() << " bank entries, "
                  << corpus.train_queries.size() << " training queries, "
                  << corpus.eval_queries.size() << " eval queries -> " << out << "\n";
        return 0;
    } catch (const retgen::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
