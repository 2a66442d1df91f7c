#include "retgen/records.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace retgen::bank {

using nlohmann::json;

TaskKind parse_kind(std::string_view name) {
    if (name == "extractive-qa") return TaskKind::extractive_qa;
    if (name == "multiple-choice-qa") return TaskKind::multiple_choice_qa;
    if (name == "single-sentence-classification") return TaskKind::single_sentence_classification;
    if (name == "sentence-pair-classification") return TaskKind::sentence_pair_classification;
    throw DataError("unknown task kind: " + std::string(name));
}

std::string kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::extractive_qa: return "extractive-qa";
        case TaskKind::multiple_choice_qa: return "multiple-choice-qa";
        case TaskKind::single_sentence_classification: return "single-sentence-classification";
        case TaskKind::sentence_pair_classification: return "sentence-pair-classification";
    }
    throw DataError("unknown task kind value");
}

std::string validate_example(const RawExample& ex) {
    if (ex.id.empty()) return "missing id";
    if (ex.task_id.empty()) return "missing task";
    if (ex.question.empty()) return "missing question";
    if (ex.answer.empty()) return "missing answer";
    if (ex.kind == TaskKind::multiple_choice_qa) {
        if (ex.options.empty()) return "multiple-choice example has no options";
        if (std::find(ex.options.begin(), ex.options.end(), ex.answer) == ex.options.end())
            return "answer is not among the options";
    }
    if (ex.kind == TaskKind::single_sentence_classification ||
        ex.kind == TaskKind::sentence_pair_classification) {
        if (ex.labels.empty()) return "classification example has no label set";
        if (std::find(ex.labels.begin(), ex.labels.end(), ex.answer) == ex.labels.end())
            return "answer is not in the label set";
    }
    return "";
}

namespace {

std::vector<std::string> string_or_list(const json& j) {
    std::vector<std::string> out;
    if (j.is_string()) {
        out.push_back(j.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& e : j) out.push_back(e.get<std::string>());
    } else {
        throw DataError("field must be a string or a list of strings");
    }
    return out;
}

RawExample example_from_json(const json& j, const std::string& default_task,
                             std::optional<TaskKind> default_kind) {
    RawExample ex;
    ex.task_id = j.value("task", default_task);
    if (j.contains("kind"))
        ex.kind = parse_kind(j["kind"].get<std::string>());
    else if (default_kind)
        ex.kind = *default_kind;
    else
        throw DataError("missing kind");
    ex.id = j.value("id", "");
    ex.question = j.value("question", "");
    if (j.contains("context")) ex.context = string_or_list(j["context"]);
    ex.answer = j.value("answer", "");
    if (j.contains("options"))
        for (const auto& o : j["options"]) ex.options.push_back(o.get<std::string>());
    if (j.contains("labels"))
        for (const auto& l : j["labels"]) ex.labels.push_back(l.get<std::string>());
    return ex;
}

} // namespace

std::vector<RawExample> ingest_task(const std::string& path, const std::string& default_task,
                                    std::optional<TaskKind> default_kind, IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open task file: " + path);
    std::vector<RawExample> out;
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            RawExample ex = example_from_json(j, default_task, default_kind);
            std::string problem = validate_example(ex);
            if (!problem.empty()) {
                rep.rejects.push_back({lineno, problem});
                continue;
            }
            out.push_back(std::move(ex));
            ++rep.valid;
        } catch (const json::exception& e) {
            rep.rejects.push_back({lineno, std::string("bad json: ") + e.what()});
        } catch (const DataError& e) {
            rep.rejects.push_back({lineno, e.what()});
        }
    }
    if (out.empty()) throw DataError("no valid examples in task file: " + path);
    return out;
}

std::string example_to_json(const RawExample& ex) {
    json j;
    j["task"] = ex.task_id;
    j["kind"] = kind_name(ex.kind);
    j["id"] = ex.id;
    j["question"] = ex.question;
    if (ex.context.size() == 1)
        j["context"] = ex.context[0];
    else if (!ex.context.empty())
        j["context"] = ex.context;
    j["answer"] = ex.answer;
    if (!ex.options.empty()) j["options"] = ex.options;
    if (!ex.labels.empty()) j["labels"] = ex.labels;
    return j.dump();
}

void write_examples(const std::string& path, std::span<const RawExample> examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write task file: " + path);
    for (const auto& ex : examples) out << example_to_json(ex) << '\n';
    if (!out) throw IoError("short write: " + path);
}

} // namespace retgen::bank
