#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "retgen/bank.hpp"
#include "retgen/mips.hpp"
#include "retgen/ragmodel.hpp"

namespace retgen::pipeline {

struct MetaTrainConfig {
    int per_task_cap = 16384;
    int64_t max_steps = 30000;
    int effective_batch = 8; // reached through gradient accumulation
    double learning_rate = 1e-5;
    int64_t checkpoint_interval = 2000;
    int retrieve_k = 5;
    uint64_t seed = 0;
    bool train_retriever = false;
    std::string checkpoint_dir; // empty keeps only the best snapshot in memory
    bank::FormatVariant variant = bank::FormatVariant::options_in_context_generate_answer;

    void validate() const;
    static MetaTrainConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct FineTuneConfig {
    double learning_rate = 2e-5;
    int batch_size = 4;
    int64_t min_steps = 1000; // runs max(min_steps, max_epochs * steps-per-epoch)
    int max_epochs = 35;
    int checkpoint_epoch_interval = 2;
    int retrieve_k = 5;
    uint64_t seed = 0;
    bool train_retriever = false;
    std::string checkpoint_dir;
    bank::FormatVariant variant = bank::FormatVariant::options_in_context_generate_answer;
    int max_generate_len = 48; // training-set exact match probes

    void validate() const;
    static FineTuneConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct Checkpoint {
    int64_t step = 0;
    int epoch = 0; // fine-tuning cadence marker
    double metric = 0.0;
    std::string path; // empty for in-memory snapshots
};

// Cadence arithmetic, kept pure so schedules are testable on their own.
std::vector<int64_t> checkpoint_steps(int64_t max_steps, int64_t interval);

struct FineTuneSchedule {
    int steps_per_epoch = 0;
    int64_t total_steps = 0;
    int total_epochs = 0;
    std::vector<int> checkpoint_epochs; // final epoch included
};

FineTuneSchedule plan_fine_tune(int split_size, int batch_size, int64_t min_steps, int max_epochs,
                                int checkpoint_epoch_interval);

// lowest metric wins, ties to the earliest checkpoint
size_t select_lowest_metric(std::span<const Checkpoint> checkpoints);
// highest metric wins, ties to the earliest checkpoint
size_t select_highest_metric(std::span<const Checkpoint> checkpoints);

// Seeded uniform subsample without replacement, applied per task; tasks under
// the cap pass through whole. Order and content are preserved.
std::vector<bank::RawExample> cap_per_task(std::span<const bank::RawExample> examples, int cap,
                                           uint64_t seed);

using Embedder = std::function<std::vector<float>(const std::string&)>;

Embedder hashed_bow_embedder(int dim = 64);
Embedder encoder_embedder(const model::RagModel<float>& m);

// Mean cosine similarity over the cross pairs; zero-norm embeddings skip the
// pair and are counted.
double mean_pairwise_similarity(std::span<const bank::RawExample> task_examples,
                                std::span<const bank::RawExample> eval_shots,
                                const Embedder& embedder, int64_t* skipped_pairs = nullptr);

struct TaskGroup {
    std::string task_id;
    std::vector<bank::RawExample> examples;
};

struct RankedTask {
    std::string task_id;
    double similarity = 0.0;
    int64_t count = 0;
    bool selected = false;
};

struct SubsampleResult {
    std::vector<RankedTask> ranking; // similarity desc, ties by task id
    std::vector<std::string> selected;
    bool all_included = false; // inputs never exceeded the budget
};

SubsampleResult semantic_subsample(std::span<const TaskGroup> tasks,
                                   std::span<const bank::RawExample> eval_shots, int64_t budget,
                                   const Embedder& embedder);

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    size_t selected = 0;
    std::vector<std::string> log_lines; // line-delimited records, no timestamps
    std::vector<double> losses;         // per optimizer step
    int64_t fallback_count = 0;
    int64_t truncated_targets = 0;
    double final_loss = 0.0;
};

// Retrieval-augmented training over the prepared example set. The model ends
// loaded with the selected checkpoint's parameters.
TrainResult meta_train(const MetaTrainConfig& cfg, const bank::MemoryBank& bank,
                       const index::MipsIndex& ix, model::RagModel<float>& m,
                       std::span<const bank::RawExample> examples,
                       std::span<const std::vector<bank::RawExample>> validation_splits);

TrainResult fine_tune(const FineTuneConfig& cfg, const bank::MemoryBank& bank,
                      const index::MipsIndex& ix, model::RagModel<float>& m,
                      std::span<const bank::RawExample> split);

void write_checkpoint_manifest(const std::string& dir, const TrainResult& result,
                               const std::string& metric_kind);

} // namespace retgen::pipeline
