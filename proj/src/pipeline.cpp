#include "retgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "retgen/marginal.hpp"
#include "retgen/metrics.hpp"

namespace retgen::pipeline {

using nlohmann::json;
using namespace retgen::model;
using namespace retgen::num;
namespace fs = std::filesystem;

void MetaTrainConfig::validate() const {
    if (per_task_cap < 1 || max_steps < 1 || effective_batch < 1 || checkpoint_interval < 1 ||
        retrieve_k < 0 || learning_rate <= 0.0)
        throw ContractError("meta-train config fields must be positive");
}

void FineTuneConfig::validate() const {
    if (batch_size < 1 || min_steps < 1 || max_epochs < 1 || checkpoint_epoch_interval < 1 ||
        retrieve_k < 0 || learning_rate <= 0.0 || max_generate_len < 1)
        throw ContractError("fine-tune config fields must be positive");
}

MetaTrainConfig MetaTrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad meta-train config: ") + e.what());
    }
    MetaTrainConfig c;
    c.per_task_cap = j.value("per_task_cap", c.per_task_cap);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.effective_batch = j.value("effective_batch", c.effective_batch);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.retrieve_k = j.value("retrieve_k", c.retrieve_k);
    c.seed = j.value("seed", c.seed);
    c.train_retriever = j.value("train_retriever", c.train_retriever);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    if (j.contains("variant")) c.variant = bank::parse_variant(j["variant"].get<std::string>());
    c.validate();
    return c;
}

std::string MetaTrainConfig::to_json() const {
    json j{{"per_task_cap", per_task_cap},
           {"max_steps", max_steps},
           {"effective_batch", effective_batch},
           {"learning_rate", learning_rate},
           {"checkpoint_interval", checkpoint_interval},
           {"retrieve_k", retrieve_k},
           {"seed", seed},
           {"train_retriever", train_retriever},
           {"checkpoint_dir", checkpoint_dir},
           {"variant", bank::variant_name(variant)}};
    return j.dump(2) + "\n";
}

FineTuneConfig FineTuneConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad fine-tune config: ") + e.what());
    }
    FineTuneConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.min_steps = j.value("min_steps", c.min_steps);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.checkpoint_epoch_interval = j.value("checkpoint_epoch_interval", c.checkpoint_epoch_interval);
    c.retrieve_k = j.value("retrieve_k", c.retrieve_k);
    c.seed = j.value("seed", c.seed);
    c.train_retriever = j.value("train_retriever", c.train_retriever);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    c.max_generate_len = j.value("max_generate_len", c.max_generate_len);
    if (j.contains("variant")) c.variant = bank::parse_variant(j["variant"].get<std::string>());
    c.validate();
    return c;
}

std::string FineTuneConfig::to_json() const {
    json j{{"learning_rate", learning_rate},
           {"batch_size", batch_size},
           {"min_steps", min_steps},
           {"max_epochs", max_epochs},
           {"checkpoint_epoch_interval", checkpoint_epoch_interval},
           {"retrieve_k", retrieve_k},
           {"seed", seed},
           {"train_retriever", train_retriever},
           {"checkpoint_dir", checkpoint_dir},
           {"max_generate_len", max_generate_len},
           {"variant", bank::variant_name(variant)}};
    return j.dump(2) + "\n";
}

std::vector<int64_t> checkpoint_steps(int64_t max_steps, int64_t interval) {
    if (max_steps < 1 || interval < 1) throw ContractError("cadence needs positive steps");
    std::vector<int64_t> steps;
    for (int64_t s = interval; s <= max_steps; s += interval) steps.push_back(s);
    if (steps.empty() || steps.back() != max_steps) steps.push_back(max_steps);
    return steps;
}

FineTuneSchedule plan_fine_tune(int split_size, int batch_size, int64_t min_steps, int max_epochs,
                                int checkpoint_epoch_interval) {
    if (split_size < 1) throw ContractError("empty few-shot split");
    FineTuneSchedule s;
    s.steps_per_epoch = (split_size + batch_size - 1) / batch_size;
    // "whichever is larger" between the step floor and the epoch budget
    s.total_steps = std::max<int64_t>(min_steps, int64_t(max_epochs) * s.steps_per_epoch);
    s.total_epochs = int((s.total_steps + s.steps_per_epoch - 1) / s.steps_per_epoch);
    for (int e = checkpoint_epoch_interval; e <= s.total_epochs; e += checkpoint_epoch_interval)
        s.checkpoint_epochs.push_back(e);
    if (s.checkpoint_epochs.empty() || s.checkpoint_epochs.back() != s.total_epochs)
        s.checkpoint_epochs.push_back(s.total_epochs);
    return s;
}

size_t select_lowest_metric(std::span<const Checkpoint> checkpoints) {
    if (checkpoints.empty()) throw ContractError("no checkpoints to select from");
    size_t best = 0;
    for (size_t i = 1; i < checkpoints.size(); ++i)
        if (checkpoints[i].metric < checkpoints[best].metric) best = i;
    return best;
}

size_t select_highest_metric(std::span<const Checkpoint> checkpoints) {
    if (checkpoints.empty()) throw ContractError("no checkpoints to select from");
    size_t best = 0;
    for (size_t i = 1; i < checkpoints.size(); ++i)
        if (checkpoints[i].metric > checkpoints[best].metric) best = i;
    return best;
}

std::vector<bank::RawExample> cap_per_task(std::span<const bank::RawExample> examples, int cap,
                                           uint64_t seed) {
    if (cap < 1) throw ContractError("cap must be at least 1");
    // group rows by task, preserving first-seen task order
    std::vector<std::string> task_order;
    std::map<std::string, std::vector<size_t>> rows;
    for (size_t i = 0; i < examples.size(); ++i) {
        if (rows.find(examples[i].task_id) == rows.end()) task_order.push_back(examples[i].task_id);
        rows[examples[i].task_id].push_back(i);
    }
    std::vector<bool> keep(examples.size(), true);
    for (const auto& task : task_order) {
        auto& idx = rows[task];
        if (int64_t(idx.size()) <= cap) continue;
        // per-task stream so other tasks' draws stay fixed
        Rng rng(mix_seed(seed, task));
        std::vector<size_t> pool = idx;
        rng.shuffle(pool);
        for (size_t i = 0; i < idx.size(); ++i) keep[idx[i]] = false;
        for (size_t i = 0; i < size_t(cap); ++i) keep[pool[i]] = true;
    }
    std::vector<bank::RawExample> out;
    out.reserve(examples.size());
    for (size_t i = 0; i < examples.size(); ++i)
        if (keep[i]) out.push_back(examples[i]);
    return out;
}

Embedder hashed_bow_embedder(int dim) {
    if (dim < 1) throw ContractError("embedder dimension must be positive");
    return [dim](const std::string& text) {
        std::vector<float> v(size_t(dim), 0.0f);
        for (const auto& tok : split_ws(lowercase(text)))
            v[size_t(fnv1a(tok) % uint64_t(dim))] += 1.0f;
        return v;
    };
}

Embedder encoder_embedder(const RagModel<float>& m) {
    return [&m](const std::string& text) {
        auto ids = truncate_tail(m.vocab.encode(text), m.cfg.retriever.max_seq_len);
        if (ids.empty()) return std::vector<float>(size_t(m.cfg.retriever.width), 0.0f);
        return m.input_embedding_values(ids);
    };
}

namespace {

std::string example_embed_text(const bank::RawExample& ex) {
    std::string text = ex.question;
    std::string ctx = join(ex.context, " ");
    if (!ctx.empty()) text += " " + ctx;
    return text;
}

double cosine(std::span<const float> a, std::span<const float> b, bool* zero_norm) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        *zero_norm = true;
        return 0.0;
    }
    *zero_norm = false;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

double mean_pairwise_similarity(std::span<const bank::RawExample> task_examples,
                                std::span<const bank::RawExample> eval_shots,
                                const Embedder& embedder, int64_t* skipped_pairs) {
    if (task_examples.empty() || eval_shots.empty())
        throw ContractError("mean_pairwise_similarity: empty input set");
    std::vector<std::vector<float>> task_vecs, shot_vecs;
    for (const auto& ex : task_examples) task_vecs.push_back(embedder(example_embed_text(ex)));
    for (const auto& ex : eval_shots) shot_vecs.push_back(embedder(example_embed_text(ex)));
    double sum = 0.0;
    int64_t used = 0, skipped = 0;
    for (const auto& t : task_vecs)
        for (const auto& s : shot_vecs) {
            bool zero = false;
            double c = cosine(t, s, &zero);
            if (zero) {
                ++skipped;
                continue;
            }
            sum += c;
            ++used;
        }
    if (skipped_pairs) *skipped_pairs = skipped;
    if (used == 0) throw ContractError("mean_pairwise_similarity: all pairs had zero-norm embeddings");
    return sum / double(used);
}

SubsampleResult semantic_subsample(std::span<const TaskGroup> tasks,
                                   std::span<const bank::RawExample> eval_shots, int64_t budget,
                                   const Embedder& embedder) {
    if (budget < 1) throw ContractError("budget must be at least 1");
    if (tasks.empty()) throw ContractError("no tasks to subsample");
    SubsampleResult result;
    for (const auto& t : tasks) {
        RankedTask r;
        r.task_id = t.task_id;
        r.count = int64_t(t.examples.size());
        r.similarity = mean_pairwise_similarity(t.examples, eval_shots, embedder);
        result.ranking.push_back(std::move(r));
    }
    std::sort(result.ranking.begin(), result.ranking.end(), [](const RankedTask& a, const RankedTask& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.task_id < b.task_id;
    });
    int64_t cumulative = 0;
    for (auto& r : result.ranking) {
        r.selected = true;
        result.selected.push_back(r.task_id);
        cumulative += r.count;
        if (cumulative > budget) break;
    }
    result.all_included = result.selected.size() == result.ranking.size() && cumulative <= budget;
    return result;
}

// ---- training loops ----

namespace {

struct Prepared {
    std::string id;
    std::vector<int> input_ids; // generator-side, truncated
    std::vector<int> retr_ids;  // retriever-side, truncated
    std::vector<int> target_ids;
    int64_t own_row = -1;
    std::vector<float> query_emb;
    bool emb_cached = false;
};

struct TrainerCtx {
    RagModel<float>& m;
    const bank::MemoryBank& bank;
    const index::MipsIndex& ix;
    int k;
    bool train_retriever;
    std::vector<std::vector<int>> demo_ids; // generator-side tokenization per row
};

TrainerCtx make_ctx(RagModel<float>& m, const bank::MemoryBank& bank, const index::MipsIndex& ix,
                    int k, bool train_retriever) {
    TrainerCtx ctx{m, bank, ix, k, train_retriever, {}};
    if (train_retriever && m.cfg.weight_norm != WeightNorm::softmax)
        throw ContractError("retriever training requires softmax document weights");
    ctx.demo_ids.reserve(bank.demos.size());
    for (const auto& d : bank.demos) ctx.demo_ids.push_back(m.vocab.encode(d.text));
    return ctx;
}

Prepared prepare_example(const TrainerCtx& ctx, const bank::RawExample& ex,
                         bank::FormatVariant variant, int64_t* truncated_targets) {
    Prepared p;
    p.id = ex.id;
    auto f = bank::format_example(ex, variant);
    p.input_ids = truncate_tail(ctx.m.vocab.encode(f.input_text), ctx.m.cfg.generator.max_seq_len);
    p.retr_ids = truncate_tail(ctx.m.vocab.encode(f.input_text), ctx.m.cfg.retriever.max_seq_len);
    auto target = ctx.m.vocab.encode(f.target_text);
    target.push_back(Vocabulary::kEos);
    if (int(target.size()) > ctx.m.cfg.generator.max_target_len) {
        target = truncate_tail(target, ctx.m.cfg.generator.max_target_len);
        if (truncated_targets) ++*truncated_targets;
    }
    p.target_ids = std::move(target);
    p.own_row = ctx.bank.row_of(ex.id);
    return p;
}

const std::vector<float>& query_embedding(TrainerCtx& ctx, Prepared& p) {
    if (!ctx.train_retriever && p.emb_cached) return p.query_emb;
    p.query_emb = ctx.m.input_embedding_values(p.retr_ids);
    p.emb_cached = true;
    return p.query_emb;
}

MarginalContext<float> build_marginal(TrainerCtx& ctx, Prepared& p, int64_t* fallback_count) {
    MarginalContext<float> mc;
    mc.target = p.target_ids;
    const int gen_max = ctx.m.cfg.generator.max_seq_len;
    std::vector<index::SearchHit> hits;
    if (ctx.k > 0) {
        std::unordered_set<int64_t> excluded;
        if (p.own_row >= 0) excluded.insert(p.own_row);
        const auto& q = query_embedding(ctx, p);
        hits = ctx.ix.exclude_then_top_k(std::span<const float>(q), ctx.k, excluded);
    }
    if (hits.empty()) {
        if (ctx.k > 0 && fallback_count) ++*fallback_count;
        mc.contexts.push_back(p.input_ids);
        mc.log_weights = log_weight_tensor<float>(std::vector<double>{1.0});
        return mc;
    }
    for (const auto& h : hits)
        mc.contexts.push_back(assemble_context(ctx.demo_ids[size_t(h.id)], p.input_ids, gen_max));
    if (ctx.train_retriever) {
        auto q_tensor = ctx.m.input_embedding(p.retr_ids);
        std::vector<Tensor<float>> scores;
        for (const auto& h : hits) {
            auto row = ctx.ix.embedding_of(h.id);
            scores.push_back(dot(q_tensor, Tensor<float>::from({int64_t(row.size())},
                                                               std::vector<float>(row.begin(),
                                                                                  row.end()))));
        }
        auto stacked = stack_rows(std::span<const Tensor<float>>(scores)); // [K x 1]
        auto flat = pick_per_row(stacked, std::vector<int>(scores.size(), 0));
        mc.log_weights = log_softmax_vec(flat);
    } else {
        std::vector<double> raw;
        for (const auto& h : hits) raw.push_back(double(h.score));
        mc.log_weights = log_weight_tensor<float>(document_weights(raw, ctx.m.cfg.weight_norm));
    }
    return mc;
}

double run_batch(TrainerCtx& ctx, std::vector<Prepared>& prepared, std::span<const size_t> batch,
                 Adam<float>& opt, int64_t* fallback_count) {
    int64_t total_tokens = 0;
    for (size_t i : batch) total_tokens += int64_t(prepared[i].target_ids.size());
    double loss_sum = 0.0;
    for (size_t i : batch) {
        auto mc = build_marginal(ctx, prepared[i], fallback_count);
        auto lp = marginal_sequence_logprob(*ctx.m.generator, mc);
        auto loss = scale(lp, -1.0f / float(total_tokens));
        loss_sum += double(loss.item());
        num::backward(loss);
    }
    opt.step();
    opt.zero_grad();
    return loss_sum;
}

double validation_loss(TrainerCtx& ctx, std::vector<std::vector<Prepared>>& splits) {
    NoGradGuard no_grad;
    double total = 0.0;
    for (auto& split : splits) {
        double nll = 0.0;
        int64_t tokens = 0;
        for (auto& p : split) {
            auto mc = build_marginal(ctx, p, nullptr);
            nll -= double(marginal_sequence_logprob(*ctx.m.generator, mc).item());
            tokens += int64_t(p.target_ids.size());
        }
        total += nll / double(tokens); // equal weight per split
    }
    return total / double(splits.size());
}

double training_exact_match(TrainerCtx& ctx, std::vector<Prepared>& prepared,
                            std::span<const bank::RawExample> split, int max_generate_len) {
    NoGradGuard no_grad;
    int correct = 0;
    for (size_t i = 0; i < prepared.size(); ++i) {
        auto mc = build_marginal(ctx, prepared[i], nullptr);
        std::vector<float> weights(mc.contexts.size());
        for (size_t k = 0; k < weights.size(); ++k)
            weights[k] = std::exp(mc.log_weights.values()[k]);
        auto gen = generate(*ctx.m.generator, mc.contexts, std::span<const float>(weights),
                            max_generate_len);
        auto pred = eval::extract_answer(ctx.m.vocab.decode(gen.ids)).answer;
        correct += eval::exact_match(pred, split[i].answer);
    }
    return double(correct) / double(prepared.size());
}

struct SnapshotKeeper {
    std::vector<std::pair<std::string, Tensor<float>>> params;
    std::vector<std::vector<float>> best;

    explicit SnapshotKeeper(RagModel<float>& m) : params(m.named_params()) {}
    void snapshot() {
        best.clear();
        for (auto& [name, p] : params)
            best.emplace_back(p.values().begin(), p.values().end());
    }
    void restore() {
        if (best.empty()) return;
        for (size_t i = 0; i < params.size(); ++i)
            std::copy(best[i].begin(), best[i].end(), params[i].second.values().begin());
    }
};

std::string checkpoint_path(const std::string& dir, const std::string& stem) {
    return (fs::path(dir) / (stem + ".ckpt")).string();
}

std::string log_step(int64_t step, double loss, double lr) {
    json j{{"step", step}, {"loss", loss}, {"lr", lr}};
    return j.dump();
}

std::string log_event(const std::string& event, int64_t step, double metric) {
    json j{{"event", event}, {"step", step}, {"metric", metric}};
    return j.dump();
}

} // namespace

TrainResult meta_train(const MetaTrainConfig& cfg, const bank::MemoryBank& bank,
                       const index::MipsIndex& ix, RagModel<float>& m,
                       std::span<const bank::RawExample> examples,
                       std::span<const std::vector<bank::RawExample>> validation_splits) {
    cfg.validate();
    if (examples.empty()) throw ContractError("meta_train: no training examples");
    if (validation_splits.empty()) throw ContractError("meta_train: no validation splits registered");
    m.configure_trainable(cfg.train_retriever);

    TrainResult result;
    auto capped = cap_per_task(examples, cfg.per_task_cap, cfg.seed);
    TrainerCtx ctx = make_ctx(m, bank, ix, cfg.retrieve_k, cfg.train_retriever);
    std::vector<Prepared> prepared;
    prepared.reserve(capped.size());
    for (const auto& ex : capped)
        prepared.push_back(prepare_example(ctx, ex, cfg.variant, &result.truncated_targets));
    std::vector<std::vector<Prepared>> val;
    for (const auto& split : validation_splits) {
        std::vector<Prepared> v;
        for (const auto& ex : split)
            v.push_back(prepare_example(ctx, ex, cfg.variant, &result.truncated_targets));
        val.push_back(std::move(v));
    }

    std::vector<Tensor<float>> trainable;
    for (auto& [name, p] : m.named_params())
        if (p.requires_grad()) trainable.push_back(p);
    AdamConfig<float> ocfg;
    ocfg.learning_rate = float(cfg.learning_rate);
    Adam<float> opt(trainable, ocfg);

    SnapshotKeeper keeper(m);
    double best_metric = std::numeric_limits<double>::infinity();
    if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);

    std::vector<size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);
    int64_t step = 0;
    size_t cursor = 0;
    Rng order_rng(mix_seed(cfg.seed, "order"));
    order_rng.shuffle(order);
    while (step < cfg.max_steps) {
        std::vector<size_t> batch;
        for (int b = 0; b < cfg.effective_batch; ++b) {
            if (cursor == order.size()) {
                cursor = 0;
                order_rng.shuffle(order); // fresh order each epoch
                if (!batch.empty()) break; // epoch boundary closes a short batch
            }
            batch.push_back(order[cursor++]);
        }
        double loss = run_batch(ctx, prepared, batch, opt, &result.fallback_count);
        ++step;
        result.losses.push_back(loss);
        result.log_lines.push_back(log_step(step, loss, cfg.learning_rate));
        result.final_loss = loss;
        if (step % cfg.checkpoint_interval == 0 || step == cfg.max_steps) {
            double metric = validation_loss(ctx, val);
            Checkpoint c;
            c.step = step;
            c.metric = metric;
            if (!cfg.checkpoint_dir.empty()) {
                char stem[32];
                std::snprintf(stem, sizeof(stem), "step_%08lld", static_cast<long long>(step));
                c.path = checkpoint_path(cfg.checkpoint_dir, stem);
                m.save(c.path, &opt);
            }
            result.checkpoints.push_back(c);
            result.log_lines.push_back(log_event("checkpoint", step, metric));
            if (metric < best_metric) {
                best_metric = metric;
                keeper.snapshot();
            }
        }
    }
    result.selected = select_lowest_metric(result.checkpoints);
    keeper.restore();
    result.log_lines.push_back(
        log_event("selected", result.checkpoints[result.selected].step, best_metric));
    return result;
}

TrainResult fine_tune(const FineTuneConfig& cfg, const bank::MemoryBank& bank,
                      const index::MipsIndex& ix, RagModel<float>& m,
                      std::span<const bank::RawExample> split) {
    cfg.validate();
    if (split.empty()) throw ContractError("fine_tune: empty few-shot split");
    m.configure_trainable(cfg.train_retriever);

    TrainResult result;
    TrainerCtx ctx = make_ctx(m, bank, ix, cfg.retrieve_k, cfg.train_retriever);
    std::vector<Prepared> prepared;
    for (const auto& ex : split)
        prepared.push_back(prepare_example(ctx, ex, cfg.variant, &result.truncated_targets));

    std::vector<Tensor<float>> trainable;
    for (auto& [name, p] : m.named_params())
        if (p.requires_grad()) trainable.push_back(p);
    AdamConfig<float> ocfg;
    ocfg.learning_rate = float(cfg.learning_rate);
    Adam<float> opt(trainable, ocfg);

    auto schedule = plan_fine_tune(int(split.size()), cfg.batch_size, cfg.min_steps, cfg.max_epochs,
                                   cfg.checkpoint_epoch_interval);
    SnapshotKeeper keeper(m);
    double best_metric = -1.0;
    if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);

    std::vector<size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(mix_seed(cfg.seed, "order"));
    int64_t step = 0;
    std::vector<int> ckpt_epochs = schedule.checkpoint_epochs;
    size_t next_ckpt = 0;
    for (int epoch = 1; epoch <= schedule.total_epochs && step < schedule.total_steps; ++epoch) {
        order_rng.shuffle(order);
        for (size_t start = 0; start < order.size() && step < schedule.total_steps;
             start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            std::vector<size_t> batch(order.begin() + long(start), order.begin() + long(end));
            double loss = run_batch(ctx, prepared, batch, opt, &result.fallback_count);
            ++step;
            result.losses.push_back(loss);
            result.log_lines.push_back(log_step(step, loss, cfg.learning_rate));
            result.final_loss = loss;
        }
        bool due = next_ckpt < ckpt_epochs.size() && epoch == ckpt_epochs[next_ckpt];
        if (due || step >= schedule.total_steps) {
            if (due) ++next_ckpt;
            double metric = training_exact_match(ctx, prepared, split, cfg.max_generate_len);
            Checkpoint c;
            c.step = step;
            c.epoch = epoch;
            c.metric = metric;
            if (!cfg.checkpoint_dir.empty()) {
                char stem[32];
                std::snprintf(stem, sizeof(stem), "epoch_%06d", epoch);
                c.path = checkpoint_path(cfg.checkpoint_dir, stem);
                m.save(c.path, &opt);
            }
            result.checkpoints.push_back(c);
            result.log_lines.push_back(log_event("checkpoint", step, metric));
            if (metric > best_metric) {
                best_metric = metric;
                keeper.snapshot();
            }
        }
    }
    result.selected = select_highest_metric(result.checkpoints);
    keeper.restore();
    result.log_lines.push_back(
        log_event("selected", result.checkpoints[result.selected].step, best_metric));
    return result;
}

void write_checkpoint_manifest(const std::string& dir, const TrainResult& result,
                               const std::string& metric_kind) {
    json j;
    j["metric"] = metric_kind;
    json arr = json::array();
    for (const auto& c : result.checkpoints)
        arr.push_back({{"step", c.step}, {"epoch", c.epoch}, {"metric", c.metric}, {"path", c.path}});
    j["checkpoints"] = arr;
    j["selected"] = result.checkpoints.empty() ? json() : arr[result.selected];
    j["fallback_count"] = result.fallback_count;
    j["truncated_targets"] = result.truncated_targets;
    write_text_file((fs::path(dir) / "checkpoints.json").string(), j.dump(2) + "\n");
}

} // namespace retgen::pipeline
