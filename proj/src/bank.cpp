#include "retgen/bank.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace retgen::bank {

using nlohmann::json;
namespace fs = std::filesystem;

std::unordered_set<std::string> question_token_set(std::string_view question) {
    std::string cleaned;
    cleaned.reserve(question.size());
    for (char c : question) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        cleaned += char(std::tolower(u));
    }
    std::unordered_set<std::string> out;
    for (auto& tok : split_ws(cleaned)) out.insert(std::move(tok));
    return out;
}

double jaccard(const std::unordered_set<std::string>& a, const std::unordered_set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    size_t inter = 0;
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    for (const auto& t : small)
        if (large.count(t)) ++inter;
    return double(inter) / double(a.size() + b.size() - inter);
}

std::string normalize_filter_answer(std::string_view answer) {
    return lowercase(join(split_ws(answer), " "));
}

std::pair<std::vector<RawExample>, LeakageReport> leakage_filter(
    std::vector<RawExample> meta, std::span<const RawExample> eval_examples, double threshold) {
    std::unordered_set<std::string> eval_tasks;
    for (const auto& ex : eval_examples) eval_tasks.insert(ex.task_id);

    struct EvalEntry {
        std::unordered_set<std::string> tokens;
        std::string answer;
        const RawExample* ex;
    };
    std::vector<EvalEntry> entries;
    entries.reserve(eval_examples.size());
    for (const auto& ex : eval_examples)
        entries.push_back({question_token_set(ex.question), normalize_filter_answer(ex.answer), &ex});

    LeakageReport report;
    std::vector<RawExample> kept;
    kept.reserve(meta.size());
    for (auto& ex : meta) {
        if (eval_tasks.count(ex.task_id)) {
            report.removed.push_back({ex.id, "", 1.0, "task-overlap"});
            continue;
        }
        auto tokens = question_token_set(ex.question);
        std::string answer = normalize_filter_answer(ex.answer);
        bool leaked = false;
        for (const auto& entry : entries) {
            double j = jaccard(tokens, entry.tokens);
            if (j > threshold && answer == entry.answer) {
                report.removed.push_back({ex.id, entry.ex->id, j, "near-duplicate"});
                leaked = true;
                break;
            }
        }
        if (!leaked) kept.push_back(std::move(ex));
    }
    report.kept = kept.size();
    return {std::move(kept), std::move(report)};
}

void MemoryBank::build_row_index() const {
    id_to_row_.clear();
    for (size_t i = 0; i < demos.size(); ++i) id_to_row_[demos[i].id] = int64_t(i);
}

int64_t MemoryBank::row_of(const std::string& example_id) const {
    if (id_to_row_.size() != demos.size()) build_row_index();
    auto it = id_to_row_.find(example_id);
    return it == id_to_row_.end() ? -1 : it->second;
}

namespace {

MemoryBank assemble(std::span<const RawExample> examples, FormatVariant variant, bool oracle) {
    MemoryBank bank;
    bank.oracle = oracle;
    std::unordered_set<std::string> seen_ids;
    std::unordered_map<std::string, int64_t> counts;
    std::vector<std::string> task_order;
    for (const auto& ex : examples) {
        if (!seen_ids.insert(ex.id).second)
            throw ContractError("duplicate example id in bank inputs: " + ex.id);
        bank.demos.push_back(render_demonstration(ex, variant));
        if (counts.find(ex.task_id) == counts.end()) task_order.push_back(ex.task_id);
        counts[ex.task_id] += 1;
    }
    for (const auto& t : task_order) bank.provenance.emplace_back(t, counts[t]);
    return bank;
}

} // namespace

MemoryBank build_bank(std::span<const RawExample> examples, const BankOptions& opts) {
    std::unordered_set<std::string> excluded(opts.exclude_tasks.begin(), opts.exclude_tasks.end());
    std::unordered_set<std::string> eval_tasks(opts.eval_tasks.begin(), opts.eval_tasks.end());
    std::vector<RawExample> kept;
    for (const auto& ex : examples) {
        if (excluded.count(ex.task_id)) continue;
        if (eval_tasks.count(ex.task_id))
            throw ContractError("evaluation task '" + ex.task_id +
                                "' in bank inputs; exclude it or build an oracle bank");
        kept.push_back(ex);
    }
    return assemble(kept, opts.variant, /*oracle=*/false);
}

MemoryBank build_oracle_bank(std::span<const RawExample> eval_split, FormatVariant variant) {
    return assemble(eval_split, variant, /*oracle=*/true);
}

void MemoryBank::save(const std::string& dir, const std::string& filter_report_path) const {
    fs::create_directories(dir);
    const std::string demo_path = (fs::path(dir) / "bank.jsonl").string();
    std::ofstream out(demo_path, std::ios::binary);
    if (!out) throw IoError("cannot write bank: " + demo_path);
    for (const auto& d : demos) {
        json j{{"id", d.id}, {"task", d.task_id}, {"title", d.title}, {"text", d.text}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("short write: " + demo_path);

    json manifest;
    manifest["total"] = demos.size();
    manifest["oracle"] = oracle;
    json tasks = json::array();
    for (const auto& [task, count] : provenance) tasks.push_back({{"task", task}, {"count", count}});
    manifest["tasks"] = tasks;
    manifest["filter_report"] = filter_report_path;
    write_text_file((fs::path(dir) / "bank_manifest.json").string(), manifest.dump(2) + "\n");
}

MemoryBank MemoryBank::load(const std::string& dir) {
    const std::string demo_path = (fs::path(dir) / "bank.jsonl").string();
    std::ifstream in(demo_path);
    if (!in) throw IoError("cannot open bank: " + demo_path);
    MemoryBank bank;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(std::string("bad bank line: ") + e.what());
        }
        Demonstration d;
        d.id = j.at("id").get<std::string>();
        d.task_id = j.at("task").get<std::string>();
        d.title = j.at("title").get<std::string>();
        d.text = j.at("text").get<std::string>();
        bank.demos.push_back(std::move(d));
    }
    const std::string manifest_path = (fs::path(dir) / "bank_manifest.json").string();
    try {
        json manifest = json::parse(read_text_file(manifest_path));
        bank.oracle = manifest.value("oracle", false);
        if (manifest.contains("tasks"))
            for (const auto& t : manifest["tasks"])
                bank.provenance.emplace_back(t.at("task").get<std::string>(),
                                             t.at("count").get<int64_t>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad bank manifest: ") + e.what());
    }
    return bank;
}

void write_leakage_report(const std::string& path, const LeakageReport& report) {
    json j;
    j["kept"] = report.kept;
    j["removed_count"] = report.removed.size();
    json removed = json::array();
    for (const auto& r : report.removed)
        removed.push_back({{"meta_id", r.meta_id},
                           {"matched_eval_id", r.eval_id},
                           {"jaccard", r.jaccard},
                           {"reason", r.reason}});
    j["removed"] = removed;
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace retgen::bank
