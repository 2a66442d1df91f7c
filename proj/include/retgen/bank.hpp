#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "retgen/format.hpp"
#include "retgen/records.hpp"

namespace retgen::bank {

std::unordered_set<std::string> question_token_set(std::string_view question);
double jaccard(const std::unordered_set<std::string>& a, const std::unordered_set<std::string>& b);

// case-insensitive comparison after whitespace normalization
std::string normalize_filter_answer(std::string_view answer);

struct LeakageRemoval {
    std::string meta_id;
    std::string eval_id; // empty for task-level removals
    double jaccard = 0.0;
    std::string reason; // "task-overlap" | "near-duplicate"
};

struct LeakageReport {
    std::vector<LeakageRemoval> removed;
    size_t kept = 0;
};

// Drops meta examples from evaluation tasks outright, plus any example whose
// question has Jaccard similarity above the threshold with some evaluation
// question while the normalized answers match.
std::pair<std::vector<RawExample>, LeakageReport> leakage_filter(
    std::vector<RawExample> meta, std::span<const RawExample> eval_examples,
    double threshold = 0.9);

struct MemoryBank {
    std::vector<Demonstration> demos;
    std::vector<std::pair<std::string, int64_t>> provenance; // task -> count
    bool oracle = false;

    int64_t row_of(const std::string& example_id) const; // -1 when absent
    void save(const std::string& dir, const std::string& filter_report_path = "") const;
    static MemoryBank load(const std::string& dir);

  private:
    mutable std::unordered_map<std::string, int64_t> id_to_row_;
    void build_row_index() const;
};

struct BankOptions {
    std::vector<std::string> exclude_tasks;
    std::vector<std::string> eval_tasks; // non-oracle banks must not contain these
    FormatVariant variant = FormatVariant::options_in_context_generate_answer;
};

MemoryBank build_bank(std::span<const RawExample> examples, const BankOptions& opts);
MemoryBank build_oracle_bank(std::span<const RawExample> eval_split,
                             FormatVariant variant = FormatVariant::options_in_context_generate_answer);

void write_leakage_report(const std::string& path, const LeakageReport& report);

} // namespace retgen::bank
