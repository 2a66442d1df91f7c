#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "retgen/bank.hpp"
#include "support/fixtures.hpp"

using namespace retgen;
using namespace retgen::bank;
using retgen::test::mixed_fixtures;
using retgen::test::sunlight_example;

namespace {

const std::string kSunlightOptions =
    "(A) during the day (B) Kills it (C) it can be seen (D) Helps it survive "
    "(E) Helps it drink water (F) It gets heated up (G) adding heat (H) Makes the color darker";

} // namespace

TEST_CASE("multiple-choice template variants render the expected bytes") {
    auto ex = sunlight_example();

    SUBCASE("options in context, generate answer (default)") {
        auto f = format_example(ex);
        CHECK(f.input_text ==
              "question: What does sunlight do for a plant? \\n answer: [MASK] \\n context: " +
                  kSunlightOptions +
                  ". A plant requires food for survival. All plants require sunlight to make "
                  "their food.");
        CHECK(f.target_text ==
              "question: What does sunlight do for a plant? \\n answer: Helps it survive");
        CHECK(f.target_text.substr(f.answer_begin, f.answer_end - f.answer_begin) ==
              "Helps it survive");
    }

    SUBCASE("options in question, generate letter") {
        auto f = format_example(ex, FormatVariant::options_in_question_generate_letter);
        CHECK(f.input_text == "question: What does sunlight do for a plant? " + kSunlightOptions +
                                  " \\n answer: [MASK] \\n context: A plant requires food for "
                                  "survival. All plants require sunlight to make their food.");
        CHECK(f.target_text == "question: What does sunlight do for a plant? \\n answer: D");
    }

    SUBCASE("options in question, generate answer") {
        auto f = format_example(ex, FormatVariant::options_in_question_generate_answer);
        CHECK(f.input_text == "question: What does sunlight do for a plant? " + kSunlightOptions +
                                  " \\n answer: [MASK] \\n context: A plant requires food for "
                                  "survival. All plants require sunlight to make their food.");
        CHECK(f.target_text ==
              "question: What does sunlight do for a plant? \\n answer: Helps it survive");
    }

    SUBCASE("no options, generate answer") {
        auto f = format_example(ex, FormatVariant::no_options_generate_answer);
        CHECK(f.input_text ==
              "question: What does sunlight do for a plant? \\n answer: [MASK] \\n context: A "
              "plant requires food for survival. All plants require sunlight to make their food.");
        CHECK(f.target_text ==
              "question: What does sunlight do for a plant? \\n answer: Helps it survive");
    }
}

TEST_CASE("formatted inputs carry exactly one mask and parse back") {
    auto fixtures = mixed_fixtures(50, 77);
    for (const auto& ex : fixtures) {
        for (auto variant :
             {FormatVariant::options_in_context_generate_answer,
              FormatVariant::options_in_question_generate_answer,
              FormatVariant::no_options_generate_answer}) {
            auto f = format_example(ex, variant);
            size_t first = f.input_text.find("[MASK]");
            REQUIRE(first != std::string::npos);
            CHECK(f.input_text.find("[MASK]", first + 1) == std::string::npos);
            CHECK(f.target_text.find("[MASK]") == std::string::npos);

            auto parsed = parse_input(f.input_text);
            CHECK(parsed.question == ex.question);
            CHECK(parsed.has_mask);
            if (variant != FormatVariant::no_options_generate_answer) {
                if (ex.kind == TaskKind::multiple_choice_qa)
                    CHECK(parsed.options == ex.options);
                if (ex.kind == TaskKind::single_sentence_classification)
                    CHECK(parsed.options == ex.labels);
            }
            CHECK(parse_target_answer(f.target_text) == ex.answer);
            CHECK(parse_target_question(f.target_text) == ex.question);
        }
    }
}

TEST_CASE("degenerate context keeps the header and round-trips") {
    RawExample ex;
    ex.task_id = "t";
    ex.kind = TaskKind::extractive_qa;
    ex.id = "t-0";
    ex.question = "Where is the harbor?";
    ex.answer = "north";
    auto f = format_example(ex);
    CHECK(f.input_text == "question: Where is the harbor? \\n answer: [MASK] \\n context: ");
    auto parsed = parse_input(f.input_text);
    CHECK(parsed.question == ex.question);
    CHECK(parsed.context.empty());
    CHECK(parsed.has_mask);
}

TEST_CASE("demonstrations fill the answer and the title equals it") {
    auto ex = sunlight_example();
    auto d = render_demonstration(ex);
    CHECK(d.text.find("[MASK]") == std::string::npos);
    CHECK(d.text.find(" \\n answer: Helps it survive \\n context: ") != std::string::npos);
    CHECK(d.text.find(kSunlightOptions) != std::string::npos); // options block retained
    CHECK(d.title == "Helps it survive");

    for (const auto& fx : mixed_fixtures(25, 3)) {
        auto demo = render_demonstration(fx);
        auto parsed = parse_demonstration(demo.text);
        CHECK(parsed.answer == fx.answer);
        CHECK(demo.title == parsed.answer);
        CHECK(parsed.question.find(fx.question) != std::string::npos);
    }
}

TEST_CASE("jaccard") {
    std::unordered_set<std::string> a{"a", "b", "c"}, b{"b", "c", "d"}, empty;
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, {"x", "y"}) == 0.0);
    CHECK(jaccard(a, b) == 0.5); // 2 shared / 4 total
    CHECK(jaccard(empty, empty) == 1.0);
    CHECK(jaccard(a, empty) == 0.0);
}

TEST_CASE("question tokenization lowercases and strips punctuation") {
    auto t = question_token_set("What, exactly, FEEDS the river?");
    CHECK(t.count("what"));
    CHECK(t.count("exactly"));
    CHECK(t.count("feeds"));
    CHECK(t.count("river"));
    CHECK(!t.count("river?"));
}

namespace {

RawExample make_q(const std::string& task, const std::string& id, const std::string& question,
                  const std::string& answer) {
    RawExample ex;
    ex.task_id = task;
    ex.kind = TaskKind::extractive_qa;
    ex.id = id;
    ex.question = question;
    ex.answer = answer;
    ex.context = {"filler context."};
    return ex;
}

// questions with a controlled token overlap: `shared` common tokens plus
// per-side unique tokens
std::string overlap_question(int shared, int unique, const std::string& tag) {
    std::string q;
    for (int i = 0; i < shared; ++i) q += "common" + std::to_string(i) + " ";
    for (int i = 0; i < unique; ++i) q += tag + std::to_string(i) + " ";
    return trim(q);
}

} // namespace

TEST_CASE("leakage filter: threshold, answer conjunction, idempotence") {
    // eval question: 24 shared + 1 unique -> meta (24 shared + 1 unique):
    // jaccard 24/26 = 0.923
    std::vector<RawExample> eval_examples{
        make_q("eval-task", "ev-0", overlap_question(24, 1, "evalside"), "blue"),
        make_q("eval-task", "ev-1", overlap_question(17, 2, "evalother"), "green")};

    std::vector<RawExample> meta;
    meta.push_back(make_q("meta-task", "dup-same", overlap_question(24, 1, "metaside"), "Blue "));
    meta.push_back(make_q("meta-task", "dup-diff", overlap_question(24, 1, "metaside2"), "red"));
    // 17 shared, meta has 1 unique, eval has 2: jaccard 17/20 = 0.85
    meta.push_back(make_q("meta-task", "close-same", overlap_question(17, 1, "metaside3"), "green"));
    meta.push_back(make_q("eval-task", "task-overlap-1", "anything at all", "x"));
    for (int i = 0; i < 996; ++i)
        meta.push_back(make_q("meta-task", "clean-" + std::to_string(i),
                              "unrelated question number " + std::to_string(i), "answer"));

    auto [kept, report] = leakage_filter(meta, eval_examples);
    CHECK(report.removed.size() == 2);
    bool saw_dup = false, saw_task = false;
    for (const auto& r : report.removed) {
        if (r.meta_id == "dup-same") {
            saw_dup = true;
            CHECK(r.reason == "near-duplicate");
            CHECK(r.eval_id == "ev-0");
            CHECK(r.jaccard > 0.9);
        }
        if (r.meta_id == "task-overlap-1") {
            saw_task = true;
            CHECK(r.reason == "task-overlap");
        }
    }
    CHECK(saw_dup);
    CHECK(saw_task);
    auto find_kept = [&](const std::string& id) {
        for (const auto& ex : kept)
            if (ex.id == id) return true;
        return false;
    };
    CHECK(find_kept("dup-diff"));      // high overlap but different answer
    CHECK(find_kept("close-same"));   // same answer but jaccard 0.85

    // filtering twice removes nothing new
    auto [kept2, report2] = leakage_filter(kept, eval_examples);
    CHECK(report2.removed.empty());
    CHECK(kept2.size() == kept.size());
}

TEST_CASE("bank construction") {
    auto fixtures = mixed_fixtures(10, 5); // 4 tasks x 10 examples

    SUBCASE("no exclusions keeps everything") {
        auto bank = build_bank(fixtures, {});
        CHECK(bank.demos.size() == 40);
        CHECK(bank.provenance.size() == 4);
        CHECK(!bank.oracle);
    }

    SUBCASE("excluded tasks are dropped") {
        BankOptions opts;
        opts.exclude_tasks = {"fx-choice"};
        auto bank = build_bank(fixtures, opts);
        CHECK(bank.demos.size() == 30);
    }

    SUBCASE("evaluation tasks in the inputs are refused") {
        BankOptions opts;
        opts.eval_tasks = {"fx-pair"};
        CHECK_THROWS_AS(build_bank(fixtures, opts), ContractError);
        opts.exclude_tasks = {"fx-pair"};
        CHECK(build_bank(fixtures, opts).demos.size() == 30);
    }

    SUBCASE("oracle bank from an eval split") {
        std::vector<RawExample> eval_split(fixtures.begin(), fixtures.begin() + 20);
        auto bank = build_oracle_bank(eval_split);
        CHECK(bank.demos.size() == 20);
        CHECK(bank.oracle);
    }

    SUBCASE("non-oracle bank shares no ids with the eval split") {
        BankOptions opts;
        opts.eval_tasks = {"fx-pair"};
        opts.exclude_tasks = {"fx-pair"};
        auto bank = build_bank(fixtures, opts);
        for (const auto& ex : fixtures)
            if (ex.task_id == "fx-pair") CHECK(bank.row_of(ex.id) == -1);
    }

    SUBCASE("save and load round trip") {
        auto bank = build_bank(fixtures, {});
        bank.save("bank_test_dir");
        auto back = MemoryBank::load("bank_test_dir");
        CHECK(back.demos.size() == bank.demos.size());
        CHECK(back.oracle == bank.oracle);
        CHECK(back.provenance == bank.provenance);
        CHECK(back.demos[7].text == bank.demos[7].text);
        CHECK(back.row_of(bank.demos[3].id) == 3);
        std::filesystem::remove_all("bank_test_dir");
    }
}

TEST_CASE("ingest validates records and reports rejects") {
    const std::string path = "ingest_test.jsonl";
    {
        std::string lines =
            R"({"task":"t1","kind":"extractive-qa","id":"a","question":"Where?","context":"here.","answer":"north"})"
            "\n"
            R"({"task":"t1","kind":"extractive-qa","id":"b","question":"Who?","context":"there.","answer":"someone"})"
            "\n"
            R"({"task":"t1","kind":"extractive-qa","id":"c","question":"Why?","context":"x.","answer":"because"})"
            "\n";
        write_text_file(path, lines);
        IngestReport report;
        auto examples = ingest_task(path, "", std::nullopt, &report);
        CHECK(examples.size() == 3);
        CHECK(report.rejects.empty());
    }
    {
        std::string lines =
            R"({"task":"t1","kind":"extractive-qa","id":"a","question":"Where?","answer":"north"})"
            "\n"
            R"({"task":"t1","kind":"extractive-qa","id":"missing-answer","question":"Who?"})"
            "\n"
            R"({"task":"t1","kind":"multiple-choice-qa","id":"bad-mc","question":"Which?","options":["x","y"],"answer":"z"})"
            "\n"
            "not json at all\n";
        write_text_file(path, lines);
        IngestReport report;
        auto examples = ingest_task(path, "", std::nullopt, &report);
        CHECK(examples.size() == 1);
        REQUIRE(report.rejects.size() == 3);
        CHECK(report.rejects[0].line == 2);
        CHECK(report.rejects[0].reason == "missing answer");
        CHECK(report.rejects[1].line == 3);
        CHECK(report.rejects[1].reason == "answer is not among the options");
        CHECK(report.rejects[2].line == 4);
    }
    {
        write_text_file(path, R"({"task":"t1","id":"no-answer","question":"Who?"})" "\n");
        CHECK_THROWS_AS(ingest_task(path, "", TaskKind::extractive_qa), DataError);
        CHECK_THROWS_AS(ingest_task("no_such_file.jsonl"), IoError);
    }
    std::remove(path.c_str());
}
