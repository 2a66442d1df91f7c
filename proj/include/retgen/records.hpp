#pragma once

#include <optional>
#include <string>
#include <vector>

#include "retgen/common.hpp"

namespace retgen::bank {

enum class TaskKind {
    extractive_qa,
    multiple_choice_qa,
    single_sentence_classification,
    sentence_pair_classification,
};

TaskKind parse_kind(std::string_view name);
std::string kind_name(TaskKind kind);

// One labeled example as read from a task record file. For sentence-pair
// tasks the first sentence/hypothesis sits in `question` and the second
// sentence/premise in `context`.
struct RawExample {
    std::string task_id;
    TaskKind kind = TaskKind::extractive_qa;
    std::string id;
    std::string question;
    std::vector<std::string> context; // segments, joined with single spaces
    std::string answer;
    std::vector<std::string> options; // multiple choice, letter = position
    std::vector<std::string> labels;  // classification label inventory
};

// Validation failure message, empty when the example is well-formed.
std::string validate_example(const RawExample& ex);

struct IngestReport {
    struct Reject {
        int line = 0;
        std::string reason;
    };
    std::vector<Reject> rejects;
    int valid = 0;
};

// Reads one JSON object per line. Malformed lines land in the report; a file
// with zero valid lines is an error.
std::vector<RawExample> ingest_task(const std::string& path, const std::string& default_task = "",
                                    std::optional<TaskKind> default_kind = std::nullopt,
                                    IngestReport* report = nullptr);

// Serialization used by fixtures and bank files.
std::string example_to_json(const RawExample& ex);
void write_examples(const std::string& path, std::span<const RawExample> examples);

} // namespace retgen::bank
