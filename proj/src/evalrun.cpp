#include "retgen/evalrun.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "retgen/marginal.hpp"

namespace retgen::eval {

using nlohmann::json;
using namespace retgen::model;

MetricKind parse_metric(std::string_view name) {
    if (name == "f1") return MetricKind::f1;
    if (name == "em") return MetricKind::em;
    if (name == "accuracy") return MetricKind::accuracy;
    if (name == "macro-f1") return MetricKind::macro_f1;
    throw ContractError("unknown metric: " + std::string(name));
}

std::string metric_name(MetricKind m) {
    switch (m) {
        case MetricKind::f1: return "f1";
        case MetricKind::em: return "em";
        case MetricKind::accuracy: return "accuracy";
        case MetricKind::macro_f1: return "macro-f1";
    }
    throw ContractError("unknown metric value");
}

std::vector<float> encode_bank(const RagModel<float>& m, const bank::MemoryBank& bank) {
    std::vector<float> out;
    out.reserve(bank.demos.size() * size_t(m.cfg.retriever.width));
    for (const auto& d : bank.demos) {
        auto ids = truncate_tail(m.vocab.encode(d.text), m.cfg.retriever.max_seq_len);
        auto emb = m.demo_embedding_values(ids);
        out.insert(out.end(), emb.begin(), emb.end());
    }
    return out;
}

namespace {

std::vector<RetrievalResult> retrieve_for(const RagModel<float>& m, const bank::MemoryBank& bank,
                                          const index::MipsIndex& ix,
                                          const bank::RawExample& ex,
                                          const std::vector<int>& input_ids,
                                          const EvalRunConfig& cfg) {
    std::unordered_set<int64_t> excluded;
    if (!cfg.allow_self_retrieval) {
        int64_t own = bank.row_of(ex.id);
        if (own >= 0) excluded.insert(own);
    }
    std::vector<RetrievalResult> out;
    if (cfg.retriever == RetrieverKind::random) {
        // seeded per-example draw; uniform weights
        std::vector<int64_t> rows;
        for (int64_t r = 0; r < ix.size(); ++r)
            if (!excluded.count(r)) rows.push_back(r);
        Rng rng(mix_seed(cfg.seed, ex.id));
        rng.shuffle(rows);
        size_t take = std::min(size_t(cfg.k), rows.size());
        for (size_t i = 0; i < take; ++i) out.push_back({rows[i], 0.0, 1.0 / double(take)});
        return out;
    }
    auto query_ids = truncate_tail(input_ids, m.cfg.retriever.max_seq_len);
    auto query = m.input_embedding_values(query_ids);
    auto hits = ix.exclude_then_top_k(std::span<const float>(query), cfg.k, excluded);
    if (hits.empty()) return out;
    std::vector<double> raw;
    raw.reserve(hits.size());
    for (const auto& h : hits) raw.push_back(double(h.score));
    auto weights = document_weights(raw, m.cfg.weight_norm);
    for (size_t i = 0; i < hits.size(); ++i) out.push_back({hits[i].id, raw[i], weights[i]});
    return out;
}

} // namespace

TaskEval evaluate_examples(const RagModel<float>& m, const bank::MemoryBank& bank,
                           const index::MipsIndex& ix, std::span<const bank::RawExample> examples,
                           const EvalRunConfig& cfg) {
    if (examples.empty()) throw ContractError("evaluate_examples: no examples");
    TaskEval result;
    result.k_effective = int(std::min<int64_t>(cfg.k, ix.size()));
    const int gen_max = m.cfg.generator.max_seq_len;
    for (const auto& ex : examples) {
        ExampleEval ev;
        ev.id = ex.id;
        auto formatted = bank::format_example(ex, cfg.variant);
        auto input_ids = truncate_tail(m.vocab.encode(formatted.input_text), gen_max);

        std::vector<std::vector<int>> contexts;
        std::vector<float> weights;
        if (cfg.k > 0) {
            ev.retrieved = retrieve_for(m, bank, ix, ex, input_ids, cfg);
            for (const auto& r : ev.retrieved) {
                auto demo_ids = m.vocab.encode(bank.demos[size_t(r.entry_id)].text);
                contexts.push_back(assemble_context(demo_ids, input_ids, gen_max));
                weights.push_back(float(r.weight));
            }
        }
        if (contexts.empty()) {
            if (cfg.k > 0) ++result.fallback_count;
            contexts.push_back(input_ids);
            weights.push_back(1.0f);
        }
        auto gen = generate(*m.generator, contexts, std::span<const float>(weights),
                            cfg.max_generate_len);
        ev.raw_generation = m.vocab.decode(gen.ids);
        ev.prediction = extract_answer(ev.raw_generation).answer;
        if (cfg.metric == MetricKind::f1)
            ev.score = squad_f1(ev.prediction, ex.answer, cfg.strip_articles);
        else if (cfg.metric == MetricKind::em)
            ev.score = exact_match(ev.prediction, ex.answer, cfg.strip_articles);
        result.examples.push_back(std::move(ev));
    }
    if (cfg.metric == MetricKind::f1 || cfg.metric == MetricKind::em) {
        double sum = 0.0;
        for (const auto& ev : result.examples) sum += ev.score;
        result.score = sum / double(result.examples.size());
    } else {
        std::vector<std::string> preds, golds;
        for (size_t i = 0; i < examples.size(); ++i) {
            preds.push_back(result.examples[i].prediction);
            golds.push_back(examples[i].answer);
        }
        const auto& labels = examples[0].labels;
        result.score = classification_metric(preds, golds, labels,
                                             cfg.metric == MetricKind::accuracy
                                                 ? ClsMetric::accuracy
                                                 : ClsMetric::macro_f1);
    }
    return result;
}

namespace {

int answer_occurrences(const ExampleEval& ev, const bank::RawExample& ex,
                       const bank::MemoryBank& bank) {
    std::string needle = normalize_answer(ex.answer, false);
    if (needle.empty()) return 0;
    int count = 0;
    for (const auto& r : ev.retrieved) {
        std::string hay = normalize_answer(bank.demos[size_t(r.entry_id)].text, false);
        if (hay.find(needle) != std::string::npos) ++count;
    }
    return count;
}

} // namespace

double answer_hit_rate(std::span<const ExampleEval> evals, std::span<const bank::RawExample> examples,
                       const bank::MemoryBank& bank) {
    if (evals.size() != examples.size() || evals.empty())
        throw ContractError("answer_hit_rate: mismatched inputs");
    int hits = 0;
    for (size_t i = 0; i < evals.size(); ++i)
        if (answer_occurrences(evals[i], examples[i], bank) > 0) ++hits;
    return double(hits) / double(evals.size());
}

std::vector<FreqBinRow> frequency_bins(std::span<const ExampleEval> evals,
                                       std::span<const bank::RawExample> examples,
                                       const bank::MemoryBank& bank, int k) {
    if (evals.size() != examples.size() || evals.empty())
        throw ContractError("frequency_bins: mismatched inputs");
    std::vector<FreqBinRow> rows(size_t(k) + 1);
    std::vector<double> sums(size_t(k) + 1, 0.0);
    for (int b = 0; b <= k; ++b) rows[size_t(b)].bin = b;
    for (size_t i = 0; i < evals.size(); ++i) {
        int occ = std::min(answer_occurrences(evals[i], examples[i], bank), k);
        rows[size_t(occ)].count += 1;
        sums[size_t(occ)] += evals[i].score;
    }
    for (int b = 0; b <= k; ++b) {
        if (rows[size_t(b)].count > 0) {
            rows[size_t(b)].defined = true;
            rows[size_t(b)].mean_f1 = sums[size_t(b)] / double(rows[size_t(b)].count);
        }
    }
    return rows;
}

std::string frequency_bins_tsv(std::span<const FreqBinRow> rows) {
    std::ostringstream ss;
    ss << "bin\tcount\tmean_f1\n";
    for (const auto& r : rows) {
        ss << r.bin << '\t' << r.count << '\t';
        if (r.defined)
            ss << r.mean_f1;
        else
            ss << "nan";
        ss << '\n';
    }
    return ss.str();
}

std::vector<KSweepRow> k_sweep(const RagModel<float>& m, const bank::MemoryBank& bank,
                               const index::MipsIndex& ix,
                               std::span<const bank::RawExample> examples,
                               const EvalRunConfig& base_cfg, std::span<const int> k_values) {
    if (k_values.empty()) throw ContractError("k_sweep: no k values");
    std::vector<KSweepRow> rows;
    for (int k : k_values) {
        if (k < 0) throw ContractError("k_sweep: negative k");
        EvalRunConfig cfg = base_cfg;
        cfg.k = k;
        auto eval = evaluate_examples(m, bank, ix, examples, cfg);
        rows.push_back({k, eval.k_effective, eval.score});
    }
    return rows;
}

std::string k_sweep_tsv(std::span<const KSweepRow> rows) {
    std::ostringstream ss;
    ss << "k\tk_effective\tscore\n";
    for (const auto& r : rows) ss << r.k << '\t' << r.k_effective << '\t' << r.score << '\n';
    return ss.str();
}

EvalReport make_report(std::string task_id, MetricKind metric, int shots, int split_size, int k,
                       bool oracle_bank, std::span<const uint64_t> seeds,
                       std::span<const double> per_seed) {
    EvalReport r;
    r.task_id = std::move(task_id);
    r.metric = metric_name(metric);
    r.shots = shots;
    r.split_size = split_size;
    r.k = k;
    r.oracle_bank = oracle_bank;
    r.seeds.assign(seeds.begin(), seeds.end());
    r.per_seed.assign(per_seed.begin(), per_seed.end());
    auto agg = aggregate(per_seed);
    r.mean = agg.mean;
    r.stddev = agg.stddev;
    return r;
}

std::string EvalReport::to_json() const {
    json j;
    j["task"] = task_id;
    j["metric"] = metric;
    j["shots"] = shots;
    j["split_size"] = split_size;
    j["k"] = k;
    j["oracle_bank"] = oracle_bank;
    j["seeds"] = seeds;
    j["per_seed"] = per_seed;
    j["mean"] = mean;
    j["stddev"] = stddev;
    return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::ostringstream ss;
    ss << "task=" << task_id << " metric=" << metric << " shots=" << shots << " k=" << k;
    if (oracle_bank) ss << " [oracle memory]";
    ss << "\n  per-seed:";
    for (double s : per_seed) ss << ' ' << s;
    ss << "\n  mean=" << mean << " std=" << stddev << "\n";
    return ss.str();
}

} // namespace retgen::eval
