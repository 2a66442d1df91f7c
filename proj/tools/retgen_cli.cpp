#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "retgen/evalrun.hpp"
#include "retgen/manifest.hpp"
#include "retgen/pipeline.hpp"
#include "retgen/synth.hpp"

namespace fs = std::filesystem;
using namespace retgen;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Timer {
    Clock::time_point start = Clock::now();
    double seconds() const { return std::chrono::duration<double>(Clock::now() - start).count(); }
};

std::vector<bank::RawExample> load_tasks(const std::vector<std::string>& paths) {
    std::vector<bank::RawExample> all;
    for (const auto& p : paths) {
        bank::IngestReport report;
        auto examples = bank::ingest_task(p, "", std::nullopt, &report);
        for (const auto& r : report.rejects)
            std::cerr << "warning: " << p << ":" << r.line << " rejected: " << r.reason << "\n";
        all.insert(all.end(), examples.begin(), examples.end());
    }
    return all;
}

model::ModelConfig load_model_config(const std::string& path) {
    if (path.empty()) return model::ModelConfig{};
    return model::ModelConfig::load(path);
}

struct ModelBundle {
    model::RagModel<float> m;
};

// The vocabulary file fixes tokenization for every later stage; the model is
// either loaded from a checkpoint or freshly seeded.
model::RagModel<float> load_model(const model::ModelConfig& cfg, const std::string& vocab_path,
                                  const std::string& ckpt_path, uint64_t seed) {
    auto vocab = model::Vocabulary::load(vocab_path);
    auto m = model::RagModel<float>::init(cfg, std::move(vocab), seed);
    if (!ckpt_path.empty()) m.load(ckpt_path);
    return m;
}

index::MipsIndex load_index_checked(const std::string& path, const model::RagModel<float>& m) {
    auto ix = index::MipsIndex::load(path);
    if (ix.dim() != m.cfg.retriever.width)
        throw ContractError("index dimension does not match the model's retriever width");
    return ix;
}

std::vector<bank::RawExample> apply_filter(std::vector<bank::RawExample> examples,
                                           const std::vector<std::string>& filter_eval_paths,
                                           bank::LeakageReport* report_out) {
    if (filter_eval_paths.empty()) {
        if (report_out) report_out->kept = examples.size();
        return examples;
    }
    auto eval_examples = load_tasks(filter_eval_paths);
    auto [kept, report] = bank::leakage_filter(std::move(examples), eval_examples);
    if (report_out) *report_out = report;
    std::cerr << "leakage filter removed " << report.removed.size() << " of "
              << report.removed.size() + kept.size() << " examples\n";
    return kept;
}

int run_build_bank(const std::vector<std::string>& tasks, const std::vector<std::string>& exclude,
                   const std::vector<std::string>& eval_tasks, const std::string& oracle_from,
                   const std::vector<std::string>& filter_eval, const std::string& variant,
                   const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "build-bank";
    bank::MemoryBank memory;
    bank::LeakageReport filter_report;
    auto fmt = bank::parse_variant(variant);
    if (!oracle_from.empty()) {
        manifest.add_input(oracle_from);
        auto eval_split = load_tasks({oracle_from});
        memory = bank::build_oracle_bank(eval_split, fmt);
    } else {
        if (tasks.empty()) throw ContractError("build-bank needs --tasks or --oracle-from");
        for (const auto& t : tasks) manifest.add_input(t);
        auto examples = apply_filter(load_tasks(tasks), filter_eval, &filter_report);
        bank::BankOptions opts;
        opts.exclude_tasks = exclude;
        opts.eval_tasks = eval_tasks;
        opts.variant = fmt;
        memory = bank::build_bank(examples, opts);
    }
    std::string report_path;
    if (!filter_eval.empty()) {
        report_path = (fs::path(out) / "filter_report.json").string();
        fs::create_directories(out);
        bank::write_leakage_report(report_path, filter_report);
        manifest.add_output(report_path);
    }
    memory.save(out, report_path);
    manifest.add_output((fs::path(out) / "bank.jsonl").string());
    manifest.add_output((fs::path(out) / "bank_manifest.json").string());
    manifest.counters["demonstrations"] = int64_t(memory.demos.size());
    manifest.counters["filtered_out"] = int64_t(filter_report.removed.size());
    manifest.duration_seconds = timer.seconds();
    manifest.write(out);
    std::cerr << "bank: " << memory.demos.size() << " demonstrations -> " << out << "\n";
    return 0;
}

int run_build_index(const std::string& bank_dir, const std::string& model_config,
                    const std::string& model_ckpt, const std::string& vocab_path,
                    const std::string& mode, int clusters, int probes, uint64_t seed,
                    const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "build-index";
    manifest.seed = seed;
    manifest.config_path = model_config;
    if (!model_config.empty()) manifest.config_hash = hash_file(model_config);
    auto memory = bank::MemoryBank::load(bank_dir);
    manifest.add_input((fs::path(bank_dir) / "bank.jsonl").string());

    auto cfg = load_model_config(model_config);
    if (!fs::exists(vocab_path)) {
        std::vector<std::string> texts;
        for (const auto& d : memory.demos) texts.push_back(d.text);
        auto vocab = model::Vocabulary::build(texts, size_t(cfg.vocab_cap));
        vocab.save(vocab_path);
        std::cerr << "vocabulary built from the bank: " << vocab.size() << " tokens -> "
                  << vocab_path << "\n";
        manifest.add_output(vocab_path);
    }
    auto m = load_model(cfg, vocab_path, model_ckpt, seed);
    manifest.add_input(vocab_path);
    if (!model_ckpt.empty()) manifest.add_input(model_ckpt);

    auto embeddings = eval::encode_bank(m, memory);
    std::vector<int64_t> ids(memory.demos.size(), 0);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = int64_t(i);
    index::MipsIndex ix =
        mode == "clustered"
            ? index::MipsIndex::build_clustered(std::move(embeddings), m.cfg.retriever.width,
                                                std::move(ids),
                                                index::ClusterOptions{clusters, probes, 10, seed})
            : index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                            std::move(ids));
    ix.save(out);
    manifest.add_output(out);
    if (model_ckpt.empty()) {
        // persist the freshly seeded encoders so later stages share them
        std::string mpath = out + ".model.ckpt";
        m.save(mpath);
        manifest.add_output(mpath);
        std::cerr << "seeded model saved to " << mpath << "\n";
    }
    manifest.counters["entries"] = ix.size();
    manifest.duration_seconds = timer.seconds();
    manifest.write_to(out + ".manifest.json");
    std::cerr << "index: " << ix.size() << " entries, dim " << ix.dim() << " -> " << out << "\n";
    return 0;
}

int run_meta_train(const std::string& config_path, pipeline::MetaTrainConfig cfg,
                   const std::vector<std::string>& tasks, const std::vector<std::string>& val_paths,
                   const std::vector<std::string>& filter_eval, const std::string& bank_dir,
                   const std::string& index_path, const std::string& vocab_path,
                   const std::string& model_config, const std::string& init_ckpt,
                   const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "meta-train";
    manifest.seed = cfg.seed;
    manifest.config_path = config_path;
    if (!config_path.empty()) manifest.config_hash = hash_file(config_path);
    if (tasks.empty()) throw ContractError("meta-train needs --tasks");
    if (val_paths.empty()) throw ContractError("meta-train needs --val 16-shot splits");
    for (const auto& p : tasks) manifest.add_input(p);
    for (const auto& p : val_paths) manifest.add_input(p);
    manifest.add_input(index_path);
    manifest.add_input(vocab_path);
    if (!init_ckpt.empty()) manifest.add_input(init_ckpt);

    auto memory = bank::MemoryBank::load(bank_dir);
    auto mcfg = load_model_config(model_config);
    auto m = load_model(mcfg, vocab_path, init_ckpt.empty() ? index_path + ".model.ckpt" : init_ckpt,
                        cfg.seed);
    auto ix = load_index_checked(index_path, m);

    auto examples = apply_filter(load_tasks(tasks), filter_eval, nullptr);
    std::vector<std::vector<bank::RawExample>> val_splits;
    for (const auto& p : val_paths) val_splits.push_back(load_tasks({p}));

    fs::create_directories(out);
    cfg.checkpoint_dir = (fs::path(out) / "checkpoints").string();
    auto result = pipeline::meta_train(cfg, memory, ix, m, examples, val_splits);

    std::string log_path = (fs::path(out) / "log.jsonl").string();
    std::string log_text;
    for (const auto& line : result.log_lines) log_text += line + "\n";
    write_text_file(log_path, log_text);
    pipeline::write_checkpoint_manifest(out, result, "validation-loss");
    std::string selected_path = (fs::path(out) / "model.ckpt").string();
    m.save(selected_path);
    manifest.add_output(log_path);
    manifest.add_output(selected_path);
    manifest.add_output((fs::path(out) / "checkpoints.json").string());
    manifest.counters["steps"] = cfg.max_steps;
    manifest.counters["checkpoints"] = int64_t(result.checkpoints.size());
    manifest.counters["retrieval_fallbacks"] = result.fallback_count;
    manifest.duration_seconds = timer.seconds();
    manifest.write(out);
    std::cerr << "meta-train: selected checkpoint step "
              << result.checkpoints[result.selected].step << " (validation loss "
              << result.checkpoints[result.selected].metric << ") -> " << selected_path << "\n";
    return 0;
}

int run_fine_tune(const std::string& config_path, pipeline::FineTuneConfig cfg,
                  const std::string& split_path, const std::string& bank_dir,
                  const std::string& index_path, const std::string& vocab_path,
                  const std::string& model_config, const std::string& init_ckpt,
                  const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "fine-tune";
    manifest.seed = cfg.seed;
    manifest.config_path = config_path;
    if (!config_path.empty()) manifest.config_hash = hash_file(config_path);
    manifest.add_input(split_path);
    manifest.add_input(index_path);
    manifest.add_input(vocab_path);
    if (!init_ckpt.empty()) manifest.add_input(init_ckpt);

    auto memory = bank::MemoryBank::load(bank_dir);
    auto mcfg = load_model_config(model_config);
    auto m = load_model(mcfg, vocab_path, init_ckpt.empty() ? index_path + ".model.ckpt" : init_ckpt,
                        cfg.seed);
    auto ix = load_index_checked(index_path, m);
    auto split = load_tasks({split_path});

    fs::create_directories(out);
    cfg.checkpoint_dir = (fs::path(out) / "checkpoints").string();
    auto result = pipeline::fine_tune(cfg, memory, ix, m, split);

    std::string log_path = (fs::path(out) / "log.jsonl").string();
    std::string log_text;
    for (const auto& line : result.log_lines) log_text += line + "\n";
    write_text_file(log_path, log_text);
    pipeline::write_checkpoint_manifest(out, result, "training-exact-match");
    std::string selected_path = (fs::path(out) / "model.ckpt").string();
    m.save(selected_path);
    manifest.add_output(log_path);
    manifest.add_output(selected_path);
    manifest.add_output((fs::path(out) / "checkpoints.json").string());
    manifest.counters["split_size"] = int64_t(split.size());
    manifest.counters["checkpoints"] = int64_t(result.checkpoints.size());
    manifest.duration_seconds = timer.seconds();
    manifest.write(out);
    std::cerr << "fine-tune: selected checkpoint step "
              << result.checkpoints[result.selected].step << " (training EM "
              << result.checkpoints[result.selected].metric << ") -> " << selected_path << "\n";
    return 0;
}

// Seeded few-shot sample from a training pool.
std::vector<bank::RawExample> sample_shots(std::span<const bank::RawExample> pool, int shots,
                                           uint64_t seed) {
    if (int(pool.size()) < shots)
        throw ContractError("training pool smaller than the requested shot count");
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<bank::RawExample> out;
    for (int i = 0; i < shots; ++i) out.push_back(pool[order[size_t(i)]]);
    return out;
}

int run_evaluate(const std::string& task_path, const std::string& train_pool_path,
                 const std::string& bank_dir, const std::string& index_path,
                 const std::string& vocab_path, const std::string& model_config,
                 const std::string& model_ckpt, const std::string& metric, int k, int seeds,
                 int shots, bool do_fine_tune, const std::string& ft_config_path,
                 uint64_t seed_base, const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.seed = seed_base;
    manifest.add_input(task_path);
    manifest.add_input(index_path);
    manifest.add_input(vocab_path);
    if (!model_ckpt.empty()) manifest.add_input(model_ckpt);

    auto memory = bank::MemoryBank::load(bank_dir);
    auto mcfg = load_model_config(model_config);
    auto ix_probe = index::MipsIndex::load(index_path);
    auto test_examples = load_tasks({task_path});
    std::vector<bank::RawExample> pool;
    if (!train_pool_path.empty()) {
        pool = load_tasks({train_pool_path});
        manifest.add_input(train_pool_path);
    }
    if (do_fine_tune && pool.empty())
        throw ContractError("--fine-tune needs --train-pool to sample few-shot splits from");

    eval::EvalRunConfig ecfg;
    ecfg.k = k;
    ecfg.metric = eval::parse_metric(metric);
    ecfg.allow_self_retrieval = memory.oracle;

    std::vector<uint64_t> seed_list;
    std::vector<double> per_seed;
    for (int s = 0; s < seeds; ++s) {
        uint64_t seed = seed_base + uint64_t(s);
        seed_list.push_back(seed);
        auto m = load_model(mcfg, vocab_path,
                            model_ckpt.empty() ? index_path + ".model.ckpt" : model_ckpt, seed);
        auto ix = load_index_checked(index_path, m);
        if (do_fine_tune) {
            pipeline::FineTuneConfig fcfg;
            if (!ft_config_path.empty())
                fcfg = pipeline::FineTuneConfig::from_json(read_text_file(ft_config_path));
            fcfg.seed = seed;
            fcfg.retrieve_k = k;
            auto split = sample_shots(pool, shots, seed);
            pipeline::fine_tune(fcfg, memory, ix, m, split);
        }
        ecfg.seed = seed;
        auto task_eval = eval::evaluate_examples(m, memory, ix, test_examples, ecfg);
        per_seed.push_back(task_eval.score);
        std::cerr << "seed " << seed << ": " << metric << " = " << task_eval.score << "\n";
    }
    auto report = eval::make_report(test_examples[0].task_id, ecfg.metric, shots,
                                    int(test_examples.size()), k, memory.oracle, seed_list,
                                    per_seed);
    fs::create_directories(out);
    std::string json_path = (fs::path(out) / "report.json").string();
    std::string text_path = (fs::path(out) / "report.txt").string();
    write_text_file(json_path, report.to_json());
    write_text_file(text_path, report.to_table());
    manifest.add_output(json_path);
    manifest.add_output(text_path);
    manifest.counters["examples"] = int64_t(test_examples.size());
    manifest.duration_seconds = timer.seconds();
    manifest.write(out);
    std::cout << report.to_table();
    return 0;
}

struct AblateCommon {
    std::string eval_path, bank_dir, index_path, vocab_path, model_config, model_ckpt, out;
    int k = 5;
    uint64_t seed = 0;
    std::string metric = "f1";
};

int run_ablate_oracle(const AblateCommon& a) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "ablate oracle";
    manifest.seed = a.seed;
    manifest.add_input(a.eval_path);
    manifest.add_input(a.vocab_path);
    auto eval_examples = load_tasks({a.eval_path});
    auto oracle = bank::build_oracle_bank(eval_examples);
    auto mcfg = load_model_config(a.model_config);
    auto m = load_model(mcfg, a.vocab_path, a.model_ckpt, a.seed);
    auto embeddings = eval::encode_bank(m, oracle);
    std::vector<int64_t> ids(oracle.demos.size(), 0);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = int64_t(i);
    auto ix = index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                            std::move(ids));
    eval::EvalRunConfig ecfg;
    ecfg.k = a.k;
    ecfg.metric = eval::parse_metric(a.metric);
    ecfg.allow_self_retrieval = true; // the oracle upper bound keeps self-retrieval
    ecfg.seed = a.seed;
    auto result = eval::evaluate_examples(m, oracle, ix, eval_examples, ecfg);
    double hit = eval::answer_hit_rate(result.examples, eval_examples, oracle);

    fs::create_directories(a.out);
    json j{{"task", eval_examples[0].task_id}, {"metric", a.metric},   {"k", a.k},
           {"oracle_bank", true},              {"score", result.score}, {"hit_rate", hit}};
    std::string path = (fs::path(a.out) / "oracle_report.json").string();
    write_text_file(path, j.dump(2) + "\n");
    manifest.add_output(path);
    manifest.duration_seconds = timer.seconds();
    manifest.write(a.out);
    std::cout << "oracle memory: " << a.metric << " = " << result.score << ", hit rate = " << hit
              << "\n";
    return 0;
}

int run_ablate_num_docs(const AblateCommon& a, const std::string& k_list) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "ablate num-docs";
    manifest.seed = a.seed;
    manifest.add_input(a.eval_path);
    manifest.add_input(a.index_path);
    auto memory = bank::MemoryBank::load(a.bank_dir);
    auto mcfg = load_model_config(a.model_config);
    auto m = load_model(mcfg, a.vocab_path,
                        a.model_ckpt.empty() ? a.index_path + ".model.ckpt" : a.model_ckpt, a.seed);
    auto ix = load_index_checked(a.index_path, m);
    auto eval_examples = load_tasks({a.eval_path});

    std::vector<int> ks;
    std::stringstream ss(k_list);
    std::string item;
    while (std::getline(ss, item, ',')) ks.push_back(std::stoi(item));

    eval::EvalRunConfig ecfg;
    ecfg.metric = eval::parse_metric(a.metric);
    ecfg.allow_self_retrieval = memory.oracle;
    ecfg.seed = a.seed;
    auto rows = eval::k_sweep(m, memory, ix, eval_examples, ecfg, ks);
    fs::create_directories(a.out);
    std::string path = (fs::path(a.out) / "ksweep.tsv").string();
    write_text_file(path, eval::k_sweep_tsv(rows));
    manifest.add_output(path);
    manifest.duration_seconds = timer.seconds();
    manifest.write(a.out);
    std::cout << eval::k_sweep_tsv(rows);
    return 0;
}

int run_ablate_hit_rate(const AblateCommon& a, const std::string& retriever) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "ablate retriever-hit-rate";
    manifest.seed = a.seed;
    manifest.add_input(a.eval_path);
    manifest.add_input(a.index_path);
    auto memory = bank::MemoryBank::load(a.bank_dir);
    auto mcfg = load_model_config(a.model_config);
    auto m = load_model(mcfg, a.vocab_path,
                        a.model_ckpt.empty() ? a.index_path + ".model.ckpt" : a.model_ckpt, a.seed);
    auto ix = load_index_checked(a.index_path, m);
    auto eval_examples = load_tasks({a.eval_path});
    eval::EvalRunConfig ecfg;
    ecfg.k = a.k;
    ecfg.metric = eval::parse_metric(a.metric);
    ecfg.retriever = retriever == "random" ? eval::RetrieverKind::random : eval::RetrieverKind::dense;
    ecfg.allow_self_retrieval = memory.oracle;
    ecfg.seed = a.seed;
    auto result = eval::evaluate_examples(m, memory, ix, eval_examples, ecfg);
    double hit = eval::answer_hit_rate(result.examples, eval_examples, memory);
    fs::create_directories(a.out);
    json j{{"task", eval_examples[0].task_id},
           {"retriever", retriever},
           {"k", a.k},
           {"hit_rate", hit},
           {"score", result.score},
           {"metric", a.metric}};
    std::string path = (fs::path(a.out) / "hit_rate.json").string();
    write_text_file(path, j.dump(2) + "\n");
    manifest.add_output(path);
    manifest.duration_seconds = timer.seconds();
    manifest.write(a.out);
    std::cout << retriever << " retriever hit rate = " << hit << "\n";
    return 0;
}

int run_ablate_freq_bins(const AblateCommon& a) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "ablate freq-bins";
    manifest.seed = a.seed;
    manifest.add_input(a.eval_path);
    manifest.add_input(a.index_path);
    auto memory = bank::MemoryBank::load(a.bank_dir);
    auto mcfg = load_model_config(a.model_config);
    auto m = load_model(mcfg, a.vocab_path,
                        a.model_ckpt.empty() ? a.index_path + ".model.ckpt" : a.model_ckpt, a.seed);
    auto ix = load_index_checked(a.index_path, m);
    auto eval_examples = load_tasks({a.eval_path});
    eval::EvalRunConfig ecfg;
    ecfg.k = a.k;
    ecfg.metric = eval::parse_metric(a.metric);
    ecfg.allow_self_retrieval = memory.oracle;
    ecfg.seed = a.seed;
    auto result = eval::evaluate_examples(m, memory, ix, eval_examples, ecfg);
    auto rows = eval::frequency_bins(result.examples, eval_examples, memory, a.k);
    fs::create_directories(a.out);
    std::string path = (fs::path(a.out) / "freq_bins.tsv").string();
    write_text_file(path, eval::frequency_bins_tsv(rows));
    manifest.add_output(path);
    manifest.duration_seconds = timer.seconds();
    manifest.write(a.out);
    std::cout << eval::frequency_bins_tsv(rows);
    return 0;
}

int run_ablate_subsample(const std::vector<std::string>& task_paths,
                         const std::string& eval_shots_path, int64_t budget, int cap,
                         const std::string& embedder_kind, const std::string& vocab_path,
                         const std::string& model_config, const std::string& model_ckpt,
                         uint64_t seed, const std::string& out) {
    Timer timer;
    RunManifest manifest;
    manifest.command = "ablate semantic-subsample";
    manifest.seed = seed;
    manifest.add_input(eval_shots_path);
    for (const auto& p : task_paths) manifest.add_input(p);

    std::vector<pipeline::TaskGroup> groups;
    for (const auto& p : task_paths) {
        auto examples = load_tasks({p});
        auto capped = pipeline::cap_per_task(examples, cap, seed);
        std::map<std::string, pipeline::TaskGroup> by_task;
        for (auto& ex : capped) {
            auto& g = by_task[ex.task_id];
            g.task_id = ex.task_id;
            g.examples.push_back(std::move(ex));
        }
        for (auto& [id, g] : by_task) groups.push_back(std::move(g));
    }
    auto shots = load_tasks({eval_shots_path});

    pipeline::Embedder embedder;
    std::optional<model::RagModel<float>> m;
    if (embedder_kind == "encoder") {
        auto mcfg = load_model_config(model_config);
        m.emplace(load_model(mcfg, vocab_path, model_ckpt, seed));
        embedder = pipeline::encoder_embedder(*m);
    } else {
        embedder = pipeline::hashed_bow_embedder();
    }
    auto result = pipeline::semantic_subsample(groups, shots, budget, embedder);

    fs::create_directories(out);
    json ranking = json::array();
    for (const auto& r : result.ranking)
        ranking.push_back({{"task", r.task_id},
                           {"similarity", r.similarity},
                           {"count", r.count},
                           {"selected", r.selected}});
    json j{{"budget", budget},
           {"embedder", embedder_kind},
           {"all_included", result.all_included},
           {"selected", result.selected},
           {"ranking", ranking}};
    std::string path = (fs::path(out) / "subsample.json").string();
    write_text_file(path, j.dump(2) + "\n");
    manifest.add_output(path);
    manifest.duration_seconds = timer.seconds();
    manifest.write(out);
    for (const auto& t : result.selected) std::cout << t << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented meta-training workbench"};
    app.require_subcommand(1);

    // ---- build-bank ----
    auto* bb = app.add_subcommand("build-bank", "Assemble a demonstration memory bank");
    std::vector<std::string> bb_tasks, bb_exclude, bb_eval_tasks, bb_filter;
    std::string bb_oracle, bb_variant = "options-in-context", bb_out;
    bb->add_option("--tasks", bb_tasks, "task record files (jsonl)");
    bb->add_option("--exclude", bb_exclude, "task ids to drop");
    bb->add_option("--eval-tasks", bb_eval_tasks, "declared evaluation task ids (guarded)");
    bb->add_option("--oracle-from", bb_oracle, "build an oracle bank from this eval split");
    bb->add_option("--filter-eval", bb_filter, "eval files for the leakage filter");
    bb->add_option("--variant", bb_variant, "template variant");
    bb->add_option("--out", bb_out, "output directory")->required();

    // ---- build-index ----
    auto* bi = app.add_subcommand("build-index", "Encode a bank and build the search index");
    std::string bi_bank, bi_model_config, bi_model, bi_vocab, bi_mode = "exact", bi_out;
    int bi_clusters = 16, bi_probes = 4;
    uint64_t bi_seed = 0;
    bi->add_option("--bank", bi_bank, "bank directory")->required();
    bi->add_option("--model-config", bi_model_config, "model config json");
    bi->add_option("--model", bi_model, "model checkpoint to encode with");
    bi->add_option("--vocab", bi_vocab, "vocabulary file (built from the bank when missing)")
        ->required();
    bi->add_option("--mode", bi_mode, "exact | clustered");
    bi->add_option("--clusters", bi_clusters, "cluster count (clustered mode)");
    bi->add_option("--probes", bi_probes, "probe count (clustered mode)");
    bi->add_option("--seed", bi_seed, "model/cluster seed");
    bi->add_option("--out", bi_out, "index file path")->required();

    // ---- meta-train ----
    auto* mt = app.add_subcommand("meta-train", "Retrieval-augmented meta-training");
    std::string mt_config, mt_bank, mt_index, mt_vocab, mt_model_config, mt_init, mt_out;
    std::vector<std::string> mt_tasks, mt_val, mt_filter;
    pipeline::MetaTrainConfig mt_cfg;
    mt->add_option("--config", mt_config, "meta-train config json");
    mt->add_option("--tasks", mt_tasks, "meta-training task files");
    mt->add_option("--val", mt_val, "16-shot validation split files");
    mt->add_option("--filter-eval", mt_filter, "eval files for the leakage filter");
    mt->add_option("--bank", mt_bank, "bank directory")->required();
    mt->add_option("--index", mt_index, "index file")->required();
    mt->add_option("--vocab", mt_vocab, "vocabulary file")->required();
    mt->add_option("--model-config", mt_model_config, "model config json");
    mt->add_option("--init", mt_init, "initial model checkpoint");
    mt->add_option("--out", mt_out, "run directory")->required();
    int64_t mt_steps = -1, mt_interval = -1;
    int mt_k = -1, mt_batch = -1;
    double mt_lr = -1;
    int64_t mt_seed = -1;
    bool mt_train_retriever = false;
    mt->add_option("--steps", mt_steps, "override max steps");
    mt->add_option("--interval", mt_interval, "override checkpoint interval");
    mt->add_option("--k", mt_k, "override retrieved demonstrations");
    mt->add_option("--batch", mt_batch, "override effective batch");
    mt->add_option("--lr", mt_lr, "override learning rate");
    mt->add_option("--seed", mt_seed, "override seed");
    mt->add_flag("--train-retriever", mt_train_retriever, "also update the input encoder");

    // ---- fine-tune ----
    auto* ft = app.add_subcommand("fine-tune", "Few-shot fine-tuning");
    std::string ft_config, ft_split, ft_bank, ft_index, ft_vocab, ft_model_config, ft_init, ft_out;
    ft->add_option("--config", ft_config, "fine-tune config json");
    ft->add_option("--split", ft_split, "few-shot split file")->required();
    ft->add_option("--bank", ft_bank, "bank directory")->required();
    ft->add_option("--index", ft_index, "index file")->required();
    ft->add_option("--vocab", ft_vocab, "vocabulary file")->required();
    ft->add_option("--model-config", ft_model_config, "model config json");
    ft->add_option("--init", ft_init, "initial model checkpoint");
    ft->add_option("--out", ft_out, "run directory")->required();
    int64_t ft_seed = -1;
    int ft_k = -1;
    ft->add_option("--seed", ft_seed, "override seed");
    ft->add_option("--k", ft_k, "override retrieved demonstrations");

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "Evaluate a model on a task split");
    std::string ev_task, ev_pool, ev_bank, ev_index, ev_vocab, ev_model_config, ev_model,
        ev_metric = "f1", ev_ft_config, ev_out;
    int ev_k = 5, ev_seeds = 5, ev_shots = 16;
    uint64_t ev_seed = 0;
    bool ev_fine_tune = false;
    ev->add_option("--task", ev_task, "evaluation split file")->required();
    ev->add_option("--train-pool", ev_pool, "pool for sampling few-shot splits");
    ev->add_option("--bank", ev_bank, "bank directory")->required();
    ev->add_option("--index", ev_index, "index file")->required();
    ev->add_option("--vocab", ev_vocab, "vocabulary file")->required();
    ev->add_option("--model-config", ev_model_config, "model config json");
    ev->add_option("--model", ev_model, "model checkpoint");
    ev->add_option("--metric", ev_metric, "f1 | em | accuracy | macro-f1");
    ev->add_option("--k", ev_k, "retrieved demonstrations");
    ev->add_option("--seeds", ev_seeds, "number of few-shot samples");
    ev->add_option("--shots", ev_shots, "few-shot split size");
    ev->add_option("--seed", ev_seed, "base seed");
    ev->add_flag("--fine-tune", ev_fine_tune, "fine-tune per seed before evaluating");
    ev->add_option("--ft-config", ev_ft_config, "fine-tune config json");
    ev->add_option("--out", ev_out, "output directory")->required();

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "Ablation studies");
    ab->require_subcommand(1);
    AblateCommon ac;
    auto add_common = [&](CLI::App* sub, bool needs_index) {
        sub->add_option("--eval", ac.eval_path, "evaluation split file")->required();
        if (needs_index) {
            sub->add_option("--bank", ac.bank_dir, "bank directory")->required();
            sub->add_option("--index", ac.index_path, "index file")->required();
        }
        sub->add_option("--vocab", ac.vocab_path, "vocabulary file")->required();
        sub->add_option("--model-config", ac.model_config, "model config json");
        sub->add_option("--model", ac.model_ckpt, "model checkpoint");
        sub->add_option("--k", ac.k, "retrieved demonstrations");
        sub->add_option("--seed", ac.seed, "seed");
        sub->add_option("--metric", ac.metric, "score metric");
        sub->add_option("--out", ac.out, "output directory")->required();
    };
    auto* ab_oracle = ab->add_subcommand("oracle", "Evaluate with an oracle memory");
    add_common(ab_oracle, false);
    auto* ab_docs = ab->add_subcommand("num-docs", "Sweep the retrieved-demonstration count");
    std::string ab_klist = "0,1,5,10,25,50,100";
    add_common(ab_docs, true);
    ab_docs->add_option("--k-list", ab_klist, "comma-separated k values");
    auto* ab_hit = ab->add_subcommand("retriever-hit-rate", "Answer hit rate of a retriever");
    std::string ab_retriever = "dense";
    add_common(ab_hit, true);
    ab_hit->add_option("--retriever", ab_retriever, "dense | random");
    auto* ab_bins = ab->add_subcommand("freq-bins", "Score by answer frequency in retrievals");
    add_common(ab_bins, true);
    auto* ab_sub = ab->add_subcommand("semantic-subsample", "Rank tasks by similarity");
    std::vector<std::string> ab_sub_tasks;
    std::string ab_sub_shots, ab_sub_embedder = "bow", ab_sub_vocab, ab_sub_model_config,
                              ab_sub_model, ab_sub_out;
    int64_t ab_sub_budget = 240000;
    int ab_sub_cap = 16384;
    uint64_t ab_sub_seed = 0;
    ab_sub->add_option("--tasks", ab_sub_tasks, "candidate task files")->required();
    ab_sub->add_option("--eval-shots", ab_sub_shots, "16-shot split file")->required();
    ab_sub->add_option("--budget", ab_sub_budget, "example budget");
    ab_sub->add_option("--cap", ab_sub_cap, "per-task cap");
    ab_sub->add_option("--embedder", ab_sub_embedder, "bow | encoder");
    ab_sub->add_option("--vocab", ab_sub_vocab, "vocabulary file (encoder embedder)");
    ab_sub->add_option("--model-config", ab_sub_model_config, "model config json");
    ab_sub->add_option("--model", ab_sub_model, "model checkpoint (encoder embedder)");
    ab_sub->add_option("--seed", ab_sub_seed, "seed");
    ab_sub->add_option("--out", ab_sub_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (bb->parsed())
            return run_build_bank(bb_tasks, bb_exclude, bb_eval_tasks, bb_oracle, bb_filter,
                                  bb_variant, bb_out);
        if (bi->parsed())
            return run_build_index(bi_bank, bi_model_config, bi_model, bi_vocab, bi_mode,
                                   bi_clusters, bi_probes, bi_seed, bi_out);
        if (mt->parsed()) {
            pipeline::MetaTrainConfig cfg = mt_config.empty()
                                                ? pipeline::MetaTrainConfig{}
                                                : pipeline::MetaTrainConfig::from_json(
                                                      read_text_file(mt_config));
            if (mt_steps > 0) cfg.max_steps = mt_steps;
            if (mt_interval > 0) cfg.checkpoint_interval = mt_interval;
            if (mt_k >= 0) cfg.retrieve_k = mt_k;
            if (mt_batch > 0) cfg.effective_batch = mt_batch;
            if (mt_lr > 0) cfg.learning_rate = mt_lr;
            if (mt_seed >= 0) cfg.seed = uint64_t(mt_seed);
            if (mt_train_retriever) cfg.train_retriever = true;
            return run_meta_train(mt_config, cfg, mt_tasks, mt_val, mt_filter, mt_bank, mt_index,
                                  mt_vocab, mt_model_config, mt_init, mt_out);
        }
        if (ft->parsed()) {
            pipeline::FineTuneConfig cfg =
                ft_config.empty() ? pipeline::FineTuneConfig{}
                                  : pipeline::FineTuneConfig::from_json(read_text_file(ft_config));
            if (ft_seed >= 0) cfg.seed = uint64_t(ft_seed);
            if (ft_k >= 0) cfg.retrieve_k = ft_k;
            return run_fine_tune(ft_config, cfg, ft_split, ft_bank, ft_index, ft_vocab,
                                 ft_model_config, ft_init, ft_out);
        }
        if (ev->parsed())
            return run_evaluate(ev_task, ev_pool, ev_bank, ev_index, ev_vocab, ev_model_config,
                                ev_model, ev_metric, ev_k, ev_seeds, ev_shots, ev_fine_tune,
                                ev_ft_config, ev_seed, ev_out);
        if (ab_oracle->parsed()) return run_ablate_oracle(ac);
        if (ab_docs->parsed()) return run_ablate_num_docs(ac, ab_klist);
        if (ab_hit->parsed()) return run_ablate_hit_rate(ac, ab_retriever);
        if (ab_bins->parsed()) return run_ablate_freq_bins(ac);
        if (ab_sub->parsed())
            return run_ablate_subsample(ab_sub_tasks, ab_sub_shots, ab_sub_budget, ab_sub_cap,
                                        ab_sub_embedder, ab_sub_vocab, ab_sub_model_config,
                                        ab_sub_model, ab_sub_seed, ab_sub_out);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IndexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
