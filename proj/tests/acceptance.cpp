// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures. An optional argument restricts
// the run to a single criterion number.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "retgen/evalrun.hpp"
#include "retgen/pipeline.hpp"
#include "retgen/synth.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/op_gradients.hpp"

using namespace retgen;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    int number;
    const char* name;
    std::function<void(std::ostringstream&)> run; // throws on failure
};

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw CheckFailure(what);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------- 1: gradient oracle ----------

void criterion_gradients(std::ostringstream& detail) {
    auto t0 = Clock::now();
    // every primitive operation, on randomized small shapes
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        std::string failure = test::check_all_op_gradients(seed);
        require(failure.empty(), failure);
    }
    Rng rng(404);
    using T64 = num::Tensor<double>;
    auto check = [&](const char* name, auto&& forward, std::vector<T64> params) {
        auto r = test::check_gradients(forward, params, 1e-5, 1e-4, 1e-8);
        require(r.ok, std::string(name) + ": " + r.detail);
    };
    for (int trial = 0; trial < 3; ++trial) {
        int64_t n = 2 + int64_t(rng.bounded(3));
        int64_t d = 3 + int64_t(rng.bounded(4));
        int64_t v = 4 + int64_t(rng.bounded(5));
        auto x = test::random_tensor({n, d}, rng, true);
        auto w = test::random_tensor({d, v}, rng, true);
        auto b = test::random_tensor({v}, rng, true);
        std::vector<int> targets(size_t(n), 0);
        for (auto& t : targets) t = int(rng.bounded(uint64_t(v)));
        check("linear+logsoftmax+cross_entropy",
              [&] {
                  return num::cross_entropy(num::log_softmax_rows(num::apply_linear(x, w, b)),
                                            targets, -1);
              },
              {x, w, b});
        auto g = test::random_tensor({d}, rng, true);
        auto bias = test::random_tensor({d}, rng, true);
        check("layer_norm+gelu+mean",
              [&] {
                  auto h = num::gelu(num::layer_norm_rows(x, g, bias));
                  return num::dot(num::mean_rows(h), num::mean_rows(h));
              },
              {x, g, bias});
    }
    // a full transformer step through the marginal loss
    model::ModelConfig cfg;
    cfg.retriever = {1, 8, 2, 16, 32, 0.0};
    cfg.retriever_init = model::EncoderInit::random;
    cfg.generator.layers = 1;
    cfg.generator.width = 8;
    cfg.generator.heads = 2;
    cfg.generator.ffn_width = 16;
    cfg.generator.max_seq_len = 32;
    cfg.generator.max_target_len = 16;
    cfg.vocab_cap = 300;
    std::vector<std::string> corpus{"question: what color is the sky ? \\n answer: blue",
                                    "context: alpha beta gamma"};
    auto m = model::RagModel<double>::init(cfg, model::Vocabulary::build(corpus, 300), 3);
    auto input = m.vocab.encode("question: what color is the sky ? \\n answer: [MASK]");
    auto demo = m.vocab.encode("question: what color is the sky ? \\n answer: blue");
    auto target = m.vocab.encode("question: what color is the sky ? \\n answer: blue");
    target.push_back(model::Vocabulary::kEos);
    model::MarginalContext<double> ctx;
    ctx.contexts = {model::assemble_context(demo, input, 32), input};
    ctx.log_weights = model::log_weight_tensor<double>(std::vector<double>{0.7, 0.3});
    ctx.target = target;
    model::NamedParams<double> named;
    m.generator->collect_params("generator", named);
    std::vector<num::Tensor<double>> sample;
    for (auto& [name, p] : named)
        if (name == "generator.tok_emb" ||
            name.find("dec_layer0.cross_attn.v.weight") != std::string::npos ||
            name.find("enc_layer0.attn.out.weight") != std::string::npos ||
            name.find("dec_layer0.ffn_out.bias") != std::string::npos)
            sample.push_back(p);
    require(sample.size() == 4, "parameter sample incomplete");
    std::vector<model::MarginalContext<double>> batch{ctx};
    check("marginal loss through the generator",
          [&] {
              return model::marginal_loss(*m.generator,
                                          std::span<const model::MarginalContext<double>>(batch));
          },
          sample);
    double elapsed = seconds_since(t0);
    require(elapsed < 120.0, "gradient suite exceeded two minutes");
    detail << "finite differences matched everywhere, " << elapsed << "s";
}

// ---------- 2: MIPS oracle ----------

std::vector<index::SearchHit> naive_top_k(const std::vector<float>& embs, int64_t dim,
                                          std::span<const float> q, int64_t k) {
    std::vector<index::SearchHit> hits;
    const int64_t n = int64_t(embs.size()) / dim;
    for (int64_t r = 0; r < n; ++r) {
        float s = 0.0f;
        for (int64_t j = 0; j < dim; ++j) s += embs[size_t(r * dim + j)] * q[size_t(j)];
        hits.push_back({r, s});
    }
    std::sort(hits.begin(), hits.end(), [](const index::SearchHit& a, const index::SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    hits.resize(std::min(size_t(k), hits.size()));
    return hits;
}

void criterion_mips(std::ostringstream& detail) {
    Rng rng(2025);
    int64_t checked = 0;
    for (int64_t n : {10, 1000, 10000}) {
        for (int64_t dim : {8, 64}) {
            std::vector<float> embs(size_t(n * dim), 0.0f);
            for (auto& v : embs) v = float(rng.normal());
            std::vector<int64_t> ids(size_t(n), 0);
            for (int64_t i = 0; i < n; ++i) ids[size_t(i)] = i;
            auto exact = index::MipsIndex::build_exact(embs, dim, ids);
            for (int qi = 0; qi < 200; ++qi) {
                std::vector<float> q(size_t(dim), 0.0f);
                for (auto& v : q) v = float(rng.normal());
                int64_t k = 1 + int64_t(rng.bounded(8));
                auto got = exact.top_k(q, k);
                auto want = naive_top_k(embs, dim, q, k);
                require(got.size() == want.size(), "result size mismatch");
                for (size_t i = 0; i < got.size(); ++i)
                    require(got[i].id == want[i].id && got[i].score == want[i].score,
                            "exact scan differs from the naive oracle at n=" + std::to_string(n));
                ++checked;
            }
        }
    }
    // clustered: probing everything equals exact; recall@5 non-decreasing
    {
        const int64_t n = 2000, dim = 16;
        std::vector<float> embs(size_t(n * dim), 0.0f);
        for (auto& v : embs) v = float(rng.normal());
        std::vector<int64_t> ids(size_t(n), 0);
        for (int64_t i = 0; i < n; ++i) ids[size_t(i)] = i;
        auto exact = index::MipsIndex::build_exact(embs, dim, ids);
        auto clustered =
            index::MipsIndex::build_clustered(embs, dim, ids, index::ClusterOptions{16, 16, 10, 9});
        std::vector<std::vector<float>> queries;
        for (int qi = 0; qi < 50; ++qi) {
            std::vector<float> q(size_t(dim), 0.0f);
            for (auto& v : q) v = float(rng.normal());
            queries.push_back(q);
        }
        for (const auto& q : queries) {
            auto a = clustered.top_k(q, 5);
            auto b = exact.top_k(q, 5);
            require(a.size() == b.size(), "clustered probe-all size");
            for (size_t i = 0; i < a.size(); ++i)
                require(a[i].id == b[i].id && a[i].score == b[i].score,
                        "clustered with probes == clusters differs from exact");
        }
        double prev = -1.0;
        for (int probes = 1; probes <= 16; ++probes) {
            clustered.set_probes(probes);
            int found = 0, total = 0;
            for (const auto& q : queries) {
                auto truth = exact.top_k(q, 5);
                auto got = clustered.top_k(q, 5);
                for (const auto& t : truth) {
                    ++total;
                    for (const auto& g : got)
                        if (g.id == t.id) {
                            ++found;
                            break;
                        }
                }
            }
            double recall = double(found) / double(total);
            require(recall >= prev, "recall@5 decreased with more probes");
            prev = recall;
        }
        require(prev == 1.0, "full probing should reach recall 1.0");
    }
    detail << checked << " queries matched the naive scan bit-for-bit; clustered recall monotone";
}

// ---------- 3: marginalization identities ----------

void criterion_identities(std::ostringstream& detail) {
    model::ModelConfig cfg;
    cfg.retriever = {1, 8, 2, 16, 48, 0.0};
    cfg.retriever_init = model::EncoderInit::random;
    cfg.generator.layers = 2;
    cfg.generator.width = 16;
    cfg.generator.heads = 2;
    cfg.generator.ffn_width = 32;
    cfg.generator.max_seq_len = 48;
    cfg.generator.max_target_len = 24;
    cfg.vocab_cap = 400;
    std::vector<std::string> corpus{"question: what color is the sky ? \\n answer: blue",
                                    "question: where does the river go ? \\n answer: north",
                                    "context: alpha beta gamma delta"};
    auto m = model::RagModel<double>::init(cfg, model::Vocabulary::build(corpus, 400), 77);
    const auto& gen = *m.generator;
    auto input = m.vocab.encode("question: where does the river go ? \\n answer: [MASK]");
    auto demo1 = m.vocab.encode("question: where does the river go ? \\n answer: north");
    auto demo2 = m.vocab.encode("context: alpha beta gamma delta");
    auto target = m.vocab.encode("question: where does the river go ? \\n answer: north");
    target.push_back(model::Vocabulary::kEos);
    auto ctx1 = model::assemble_context(demo1, input, cfg.generator.max_seq_len);
    auto ctx2 = model::assemble_context(demo2, input, cfg.generator.max_seq_len);
    auto make = [&](std::vector<std::vector<int>> ctxs, std::vector<double> w) {
        model::MarginalContext<double> mc;
        mc.contexts = std::move(ctxs);
        mc.log_weights = model::log_weight_tensor<double>(w);
        mc.target = target;
        return mc;
    };

    double single = model::sequence_logprob_single(gen, ctx1, target).item();
    double k1 = model::marginal_sequence_logprob(gen, make({ctx1}, {1.0})).item();
    require(std::abs(k1 - single) <= 1e-12, "k=1 reduction beyond 1e-12");

    double degenerate = model::marginal_sequence_logprob(gen, make({ctx1, ctx2}, {1.0, 0.0})).item();
    require(degenerate == single, "degenerate weights (1,0) not exact");

    std::vector<std::vector<double>> steps;
    std::vector<double> w{0.5, 0.5};
    model::generate(gen, {ctx1, ctx2}, std::span<const double>(w), 10, &steps);
    require(!steps.empty(), "no decode steps recorded");
    std::vector<std::vector<double>> s1, s2;
    std::vector<double> w1{1.0};
    model::generate(gen, {ctx1}, std::span<const double>(w1), 1, &s1);
    model::generate(gen, {ctx2}, std::span<const double>(w1), 1, &s2);
    for (const auto& dist : steps) {
        double sum = 0.0;
        for (double p : dist) sum += p;
        require(std::abs(sum - 1.0) < 1e-9, "marginal distribution does not sum to 1");
    }
    for (size_t j = 0; j < steps[0].size(); ++j)
        require(std::abs(steps[0][j] - 0.5 * (s1[0][j] + s2[0][j])) < 1e-9,
                "uniform weights broke the arithmetic-mean property");
    detail << "k=1 bit-consistent, degenerate exact, sums within 1e-9, mean property within 1e-9";
}

// ---------- 4: format fidelity ----------

void criterion_formats(std::ostringstream& detail) {
    auto ex = test::sunlight_example();
    const std::string options =
        "(A) during the day (B) Kills it (C) it can be seen (D) Helps it survive "
        "(E) Helps it drink water (F) It gets heated up (G) adding heat (H) Makes the color darker";
    const std::string head = "question: What does sunlight do for a plant?";
    const std::string ctx =
        "A plant requires food for survival. All plants require sunlight to make their food.";
    struct Expect {
        bank::FormatVariant variant;
        std::string input, target;
    };
    std::vector<Expect> table{
        {bank::FormatVariant::options_in_question_generate_letter,
         head + " " + options + " \\n answer: [MASK] \\n context: " + ctx,
         head + " \\n answer: D"},
        {bank::FormatVariant::options_in_question_generate_answer,
         head + " " + options + " \\n answer: [MASK] \\n context: " + ctx,
         head + " \\n answer: Helps it survive"},
        {bank::FormatVariant::options_in_context_generate_answer,
         head + " \\n answer: [MASK] \\n context: " + options + ". " + ctx,
         head + " \\n answer: Helps it survive"},
        {bank::FormatVariant::no_options_generate_answer,
         head + " \\n answer: [MASK] \\n context: " + ctx,
         head + " \\n answer: Helps it survive"},
    };
    for (const auto& row : table) {
        auto f = bank::format_example(ex, row.variant);
        require(f.input_text == row.input,
                "input bytes differ for " + bank::variant_name(row.variant));
        require(f.target_text == row.target,
                "target bytes differ for " + bank::variant_name(row.variant));
    }
    // round-trip parse across all four kinds, 200 fixtures
    auto fixtures = test::mixed_fixtures(50, 2026);
    require(fixtures.size() == 200, "fixture count");
    for (const auto& fx : fixtures) {
        auto f = bank::format_example(fx);
        auto parsed = bank::parse_input(f.input_text);
        require(parsed.question == fx.question, "question did not round-trip: " + fx.id);
        require(parsed.has_mask, "mask lost in formatting: " + fx.id);
        if (fx.kind == bank::TaskKind::multiple_choice_qa)
            require(parsed.options == fx.options, "options did not round-trip: " + fx.id);
        if (fx.kind == bank::TaskKind::single_sentence_classification)
            require(parsed.options == fx.labels, "labels did not round-trip: " + fx.id);
        require(bank::parse_target_answer(f.target_text) == fx.answer,
                "answer did not round-trip: " + fx.id);
    }
    detail << "all four template variants byte-exact; 200 fixtures round-tripped";
}

// ---------- 5: leakage filter ----------

void criterion_leakage(std::ostringstream& detail) {
    auto question = [](int shared, int unique, const std::string& tag) {
        std::string q;
        for (int i = 0; i < shared; ++i) q += "common" + std::to_string(i) + " ";
        for (int i = 0; i < unique; ++i) q += tag + std::to_string(i) + " ";
        return trim(q);
    };
    auto make = [](const std::string& task, const std::string& id, const std::string& q,
                   const std::string& a) {
        bank::RawExample ex;
        ex.task_id = task;
        ex.kind = bank::TaskKind::extractive_qa;
        ex.id = id;
        ex.question = q;
        ex.answer = a;
        return ex;
    };
    std::vector<bank::RawExample> eval_examples{
        make("eval", "ev-0", question(24, 1, "eval"), "blue"),
        make("eval", "ev-1", question(17, 2, "evalb"), "green")};
    std::vector<bank::RawExample> meta;
    // jaccard 24/26 = 0.923 with matching answer -> removed
    meta.push_back(make("meta", "dup", question(24, 1, "meta"), "Blue"));
    // same overlap, different answer -> kept
    meta.push_back(make("meta", "keep-answer", question(24, 1, "metb"), "red"));
    // jaccard 17/20 = 0.85 with matching answer -> kept
    meta.push_back(make("meta", "keep-threshold", question(17, 1, "metc"), "green"));
    for (int i = 0; i < 997; ++i)
        meta.push_back(make("meta", "clean-" + std::to_string(i),
                            "unrelated question " + std::to_string(i), "x"));
    require(meta.size() == 1000, "fixture size");
    auto [kept, report] = bank::leakage_filter(meta, eval_examples);
    require(report.removed.size() == 1 && report.removed[0].meta_id == "dup",
            "exactly the planted duplicate should go");
    require(report.removed[0].jaccard > 0.9, "recorded jaccard");
    bool keep_answer = false, keep_threshold = false;
    for (const auto& ex : kept) {
        keep_answer = keep_answer || ex.id == "keep-answer";
        keep_threshold = keep_threshold || ex.id == "keep-threshold";
    }
    require(keep_answer, "high-overlap different-answer item was dropped");
    require(keep_threshold, "jaccard 0.85 same-answer item was dropped");
    auto [kept2, report2] = bank::leakage_filter(kept, eval_examples);
    require(report2.removed.empty() && kept2.size() == kept.size(), "filter is not idempotent");
    detail << "planted duplicate removed (j=0.923), conjunction respected, idempotent on 1000";
}

// ---------- 6: schedule arithmetic ----------

void criterion_schedules(std::ostringstream& detail) {
    require(pipeline::checkpoint_steps(30000, 2000).size() == 15,
            "default cadence is not 15 checkpoints");
    auto plan16 = pipeline::plan_fine_tune(16, 4, 1000, 35, 2);
    require(plan16.total_steps == 1000, "16-shot should run 1000 steps");
    auto plan128 = pipeline::plan_fine_tune(128, 4, 1000, 35, 2);
    require(plan128.total_steps == 1120 && plan128.total_epochs == 35,
            "128-shot should run 35 epochs");
    require(plan128.checkpoint_epochs.size() == 18, "cadence should be 17 checkpoints plus final");

    std::vector<pipeline::Checkpoint> planted{
        {1, 0, 0.8, ""}, {2, 0, 0.3, ""}, {3, 0, 0.2, ""}, {4, 0, 0.2, ""}, {5, 0, 0.5, ""}};
    require(pipeline::select_lowest_metric(planted) == 2, "lowest-loss selection or tie-break");
    std::vector<pipeline::Checkpoint> em{{1, 2, 0.5, ""}, {2, 4, 0.9, ""}, {3, 6, 0.9, ""}};
    require(pipeline::select_highest_metric(em) == 1, "highest-EM selection or tie-break");
    detail << "30000/2000 -> 15; 16-shot -> 1000 steps; selections and tie-breaks verified";
}

// ---------- 7: directional mechanism reproduction ----------

void criterion_recall(std::ostringstream& detail) {
    auto t0 = Clock::now();
    synth::RecallOptions opts;
    opts.n_keys = 500;
    opts.n_eval = 100;
    opts.n_values = 100;
    opts.queries_per_key = 1;
    opts.seed = 7;
    auto corpus = synth::make_recall_corpus(opts);
    auto memory = bank::build_bank(corpus.bank_examples, {});
    require(memory.demos.size() == 500, "bank size");

    std::vector<std::string> texts;
    for (const auto& d : memory.demos) texts.push_back(d.text);
    for (const auto& ex : corpus.train_queries)
        texts.push_back(bank::format_example(ex).target_text);
    auto vocab = model::Vocabulary::build(texts, 2048);

    model::ModelConfig cfg;
    cfg.retriever = {1, 32, 1, 32, 64, 0.0};
    cfg.generator.layers = 2;
    cfg.generator.width = 64;
    cfg.generator.heads = 4;
    cfg.generator.ffn_width = 192;
    cfg.generator.max_seq_len = 48;
    cfg.generator.max_target_len = 16;
    auto m = model::RagModel<float>::init(cfg, std::move(vocab), 11);
    auto embeddings = eval::encode_bank(m, memory);
    std::vector<int64_t> ids(memory.demos.size(), 0);
    for (size_t i = 0; i < ids.size(); ++i) ids[size_t(i)] = int64_t(i);
    auto ix = index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                            std::move(ids));

    pipeline::MetaTrainConfig tc;
    tc.max_steps = 1500;
    tc.checkpoint_interval = 300;
    tc.effective_batch = 8;
    tc.learning_rate = 1e-3;
    tc.retrieve_k = 5;
    tc.seed = 1;
    std::vector<std::vector<bank::RawExample>> val{corpus.validation_16shot};
    std::cerr << "  [criterion 7] meta-training 1500 steps on the recall corpus...\n";
    auto result = pipeline::meta_train(tc, memory, ix, m, corpus.train_queries, val);
    double train_seconds = seconds_since(t0);
    require(train_seconds < 1800.0, "training exceeded the 30-minute budget");

    // training loss, averaged over disjoint 50-step windows, never increases
    size_t windows = result.losses.size() / 50;
    double prev = std::numeric_limits<double>::infinity();
    for (size_t w = 0; w < windows; ++w) {
        double mean = 0.0;
        for (size_t i = 0; i < 50; ++i) mean += result.losses[w * 50 + i];
        mean /= 50.0;
        require(mean <= prev, "50-step loss window increased at window " + std::to_string(w));
        prev = mean;
    }

    eval::EvalRunConfig ecfg;
    ecfg.k = 5;
    ecfg.metric = eval::MetricKind::em;
    ecfg.max_generate_len = 16;
    auto with_retrieval = eval::evaluate_examples(m, memory, ix, corpus.eval_queries, ecfg);
    ecfg.k = 0;
    auto without = eval::evaluate_examples(m, memory, ix, corpus.eval_queries, ecfg);
    require(with_retrieval.score >= 0.90,
            "k=5 exact match " + std::to_string(with_retrieval.score) + " below 0.90");
    require(without.score <= 0.20,
            "k=0 exact match " + std::to_string(without.score) + " above 0.20");
    detail << "EM(k=5)=" << with_retrieval.score << ", EM(k=0)=" << without.score << ", "
           << int(train_seconds) << "s train, loss windows non-increasing";
}

// ---------- 8: hit-rate metric ----------

void criterion_hit_rate(std::ostringstream& detail) {
    // oracle memory: every query's own demonstration is retrievable
    {
        synth::RecallOptions opts;
        opts.n_keys = 60;
        opts.n_eval = 20;
        opts.n_values = 12;
        opts.seed = 13;
        auto corpus = synth::make_recall_corpus(opts);
        auto oracle = bank::build_oracle_bank(corpus.eval_queries);
        std::vector<std::string> texts;
        for (const auto& d : oracle.demos) texts.push_back(d.text);
        auto vocab = model::Vocabulary::build(texts, 1024);
        model::ModelConfig cfg;
        cfg.retriever = {1, 16, 1, 16, 64, 0.0};
        cfg.generator.layers = 1;
        cfg.generator.width = 16;
        cfg.generator.heads = 2;
        cfg.generator.ffn_width = 32;
        cfg.generator.max_seq_len = 48;
        cfg.generator.max_target_len = 16;
        auto m = model::RagModel<float>::init(cfg, std::move(vocab), 5);
        auto embeddings = eval::encode_bank(m, oracle);
        std::vector<int64_t> ids(oracle.demos.size(), 0);
        for (size_t i = 0; i < ids.size(); ++i) ids[size_t(i)] = int64_t(i);
        auto ix = index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                                std::move(ids));
        eval::EvalRunConfig ecfg;
        ecfg.k = 5;
        ecfg.metric = eval::MetricKind::em;
        ecfg.allow_self_retrieval = true;
        auto run = eval::evaluate_examples(m, oracle, ix, corpus.eval_queries, ecfg);
        double hit = eval::answer_hit_rate(run.examples, corpus.eval_queries, oracle);
        require(hit == 1.0, "oracle hit rate " + std::to_string(hit) + " is not 1.0");
    }
    // half-coverage construction: exactly one half, regardless of retrieval
    {
        auto fixture = synth::make_half_coverage(40, 25, 17);
        std::vector<std::string> texts;
        for (const auto& d : fixture.bank.demos) texts.push_back(d.text);
        auto vocab = model::Vocabulary::build(texts, 1024);
        model::ModelConfig cfg;
        cfg.retriever = {1, 16, 1, 16, 64, 0.0};
        cfg.generator.layers = 1;
        cfg.generator.width = 16;
        cfg.generator.heads = 2;
        cfg.generator.ffn_width = 32;
        cfg.generator.max_seq_len = 64;
        cfg.generator.max_target_len = 16;
        auto m = model::RagModel<float>::init(cfg, std::move(vocab), 6);
        auto embeddings = eval::encode_bank(m, fixture.bank);
        std::vector<int64_t> ids(fixture.bank.demos.size(), 0);
        for (size_t i = 0; i < ids.size(); ++i) ids[size_t(i)] = int64_t(i);
        auto ix = index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                                std::move(ids));
        eval::EvalRunConfig ecfg;
        ecfg.k = 5;
        auto run = eval::evaluate_examples(m, fixture.bank, ix, fixture.eval_examples, ecfg);
        double hit = eval::answer_hit_rate(run.examples, fixture.eval_examples, fixture.bank);
        require(hit == 0.5, "half-coverage hit rate " + std::to_string(hit) + " is not 0.5");
    }
    detail << "oracle bank -> 1.0 exactly; half-coverage construction -> 0.5 exactly";
}

// ---------- 9: semantic subsampling ----------

void criterion_subsample(std::ostringstream& detail) {
    auto planted = [](const std::string& text) -> std::vector<float> {
        auto vec = [](double c) {
            return std::vector<float>{float(c), float(std::sqrt(1.0 - c * c))};
        };
        if (text.find("taskhigh") != std::string::npos) return vec(0.9);
        if (text.find("taskmid") != std::string::npos) return vec(0.5);
        if (text.find("tasklow") != std::string::npos) return vec(0.1);
        return {1.0f, 0.0f};
    };
    std::vector<pipeline::TaskGroup> tasks;
    for (const char* name : {"taskmid", "tasklow", "taskhigh"}) {
        pipeline::TaskGroup g;
        g.task_id = name;
        for (int i = 0; i < 100; ++i) {
            bank::RawExample ex;
            ex.task_id = name;
            ex.kind = bank::TaskKind::extractive_qa;
            ex.id = std::string(name) + "-" + std::to_string(i);
            ex.question = std::string(name) + " item " + std::to_string(i);
            ex.answer = "y";
            g.examples.push_back(ex);
        }
        tasks.push_back(std::move(g));
    }
    std::vector<bank::RawExample> shots;
    for (int i = 0; i < 16; ++i) {
        bank::RawExample ex;
        ex.task_id = "shots";
        ex.kind = bank::TaskKind::extractive_qa;
        ex.id = "shot-" + std::to_string(i);
        ex.question = "shot " + std::to_string(i);
        ex.answer = "z";
        shots.push_back(ex);
    }
    auto r150 = pipeline::semantic_subsample(tasks, shots, 150, planted);
    require(r150.selected.size() == 2 && r150.selected[0] == "taskhigh" &&
                r150.selected[1] == "taskmid",
            "budget 150 should take the two most similar tasks in order");
    std::vector<std::string> prev;
    for (int64_t budget : {1, 150, 1000}) {
        auto r = pipeline::semantic_subsample(tasks, shots, budget, planted);
        require(r.selected.size() >= prev.size(), "selection shrank with a larger budget");
        for (size_t i = 0; i < prev.size(); ++i)
            require(prev[i] == r.selected[i], "selection prefix changed with a larger budget");
        prev = r.selected;
    }
    require(prev.size() == 3, "budget 1000 should include every task");
    detail << "engineered similarities ranked 0.9 > 0.5 > 0.1; budget monotone over {1,150,1000}";
}

// ---------- 10: metric oracle ----------

void criterion_metrics(std::ostringstream& detail) {
    using namespace retgen::eval;
    int cases = 0;
    auto expect = [&](double got, double want, const std::string& name) {
        require(std::abs(got - want) < 1e-12, name + ": got " + std::to_string(got));
        ++cases;
    };
    expect(squad_f1("same words", "same words"), 1.0, "identical f1");
    expect(double(exact_match("same words", "same words")), 1.0, "identical em");
    expect(squad_f1("the cat sat", "cat sat", true), 1.0, "article-stripped f1");
    expect(squad_f1("the cat sat", "cat sat", false), 0.8, "precision 2/3 recall 1 f1");
    expect(squad_f1("alpha beta", "gamma delta"), 0.0, "disjoint f1");
    expect(squad_f1("", ""), 1.0, "both empty");
    expect(squad_f1("x x y", "x y y"), 2.0 / 3.0, "multiset overlap");
    std::vector<std::string> labels{"yes", "no"};
    std::vector<std::string> preds{"yes", "yes", "yes", "yes"};
    std::vector<std::string> golds{"yes", "yes", "no", "no"};
    expect(classification_metric(preds, golds, labels, ClsMetric::accuracy), 0.5,
           "degenerate accuracy");
    expect(classification_metric(preds, golds, labels, ClsMetric::macro_f1), 1.0 / 3.0,
           "degenerate macro-f1");
    auto agg = aggregate(std::vector<double>{0.0, 1.0});
    expect(agg.mean, 0.5, "aggregate mean");
    expect(agg.stddev, 0.5, "population stddev");
    detail << cases << " hand-computed cases matched exactly";
}

// ---------- 11: determinism ----------

void criterion_determinism(std::ostringstream& detail) {
    auto chain = [&]() {
        synth::RecallOptions opts;
        opts.n_keys = 30;
        opts.n_eval = 8;
        opts.n_values = 10;
        opts.seed = 23;
        auto corpus = synth::make_recall_corpus(opts);
        auto memory = bank::build_bank(corpus.bank_examples, {});
        std::vector<std::string> texts;
        for (const auto& d : memory.demos) texts.push_back(d.text);
        for (const auto& ex : corpus.train_queries)
            texts.push_back(bank::format_example(ex).target_text);
        auto vocab = model::Vocabulary::build(texts, 800);
        model::ModelConfig cfg;
        cfg.retriever = {1, 16, 1, 16, 64, 0.0};
        cfg.generator.layers = 1;
        cfg.generator.width = 24;
        cfg.generator.heads = 2;
        cfg.generator.ffn_width = 48;
        cfg.generator.max_seq_len = 48;
        cfg.generator.max_target_len = 16;
        auto m = model::RagModel<float>::init(cfg, std::move(vocab), 9);
        auto embeddings = eval::encode_bank(m, memory);
        std::vector<int64_t> ids(memory.demos.size(), 0);
        for (size_t i = 0; i < ids.size(); ++i) ids[size_t(i)] = int64_t(i);
        auto ix = index::MipsIndex::build_exact(std::move(embeddings), m.cfg.retriever.width,
                                                std::move(ids));
        pipeline::MetaTrainConfig tc;
        tc.max_steps = 30;
        tc.checkpoint_interval = 10;
        tc.effective_batch = 4;
        tc.learning_rate = 2e-3;
        tc.retrieve_k = 3;
        tc.seed = 4;
        std::vector<std::vector<bank::RawExample>> val{corpus.validation_16shot};
        auto meta = pipeline::meta_train(tc, memory, ix, m, corpus.train_queries, val);

        pipeline::FineTuneConfig fc;
        fc.batch_size = 4;
        fc.min_steps = 8;
        fc.max_epochs = 2;
        fc.checkpoint_epoch_interval = 2;
        fc.retrieve_k = 3;
        fc.learning_rate = 2e-3;
        fc.seed = 5;
        std::vector<bank::RawExample> split(corpus.train_queries.begin(),
                                            corpus.train_queries.begin() + 8);
        auto ft = pipeline::fine_tune(fc, memory, ix, m, split);

        eval::EvalRunConfig ecfg;
        ecfg.k = 3;
        ecfg.metric = eval::MetricKind::em;
        ecfg.max_generate_len = 16;
        auto run = eval::evaluate_examples(m, memory, ix, corpus.eval_queries, ecfg);
        std::vector<uint64_t> seeds{4};
        std::vector<double> scores{run.score};
        auto report = eval::make_report("recall-eval", eval::MetricKind::em, 8,
                                        int(corpus.eval_queries.size()), 3, false, seeds, scores);
        std::string log;
        for (const auto& line : meta.log_lines) log += line + "\n";
        for (const auto& line : ft.log_lines) log += line + "\n";
        std::vector<float> params;
        for (auto& [name, p] : m.named_params())
            params.insert(params.end(), p.values().begin(), p.values().end());
        return std::tuple{report.to_json(), log, params};
    };
    auto [report1, log1, params1] = chain();
    auto [report2, log2, params2] = chain();
    require(report1 == report2, "metric reports differ between identical runs");
    require(log1 == log2, "training logs differ between identical runs");
    require(params1 == params2, "final parameters differ between identical runs");
    detail << "meta-train + fine-tune + evaluate reproduced byte-identically";
}

} // namespace

int main(int argc, char** argv) {
    int only = argc > 1 ? std::atoi(argv[1]) : 0;
    std::vector<Criterion> criteria{
        {1, "gradient oracle (central finite differences)", criterion_gradients},
        {2, "mips oracle (naive-scan equality, clustered recall)", criterion_mips},
        {3, "marginalization identities", criterion_identities},
        {4, "format fidelity (template variants, round trip)", criterion_formats},
        {5, "leakage filter", criterion_leakage},
        {6, "schedule arithmetic and checkpoint selection", criterion_schedules},
        {7, "directional mechanism reproduction (associative recall)", criterion_recall},
        {8, "answer hit-rate metric", criterion_hit_rate},
        {9, "semantic subsampling", criterion_subsample},
        {10, "metric oracle", criterion_metrics},
        {11, "end-to-end determinism", criterion_determinism},
    };
    int failures = 0;
    for (auto& c : criteria) {
        if (only != 0 && c.number != only) continue;
        std::ostringstream detail;
        auto t0 = Clock::now();
        try {
            c.run(detail);
            std::printf("PASS %2d %s — %s (%.1fs)\n", c.number, c.name, detail.str().c_str(),
                        seconds_since(t0));
        } catch (const std::exception& e) {
            ++failures;
            std::printf("FAIL %2d %s — %s (%.1fs)\n", c.number, c.name, e.what(),
                        seconds_since(t0));
        }
        std::fflush(stdout);
    }
    return failures;
}
