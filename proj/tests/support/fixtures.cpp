#include "support/fixtures.hpp"

#include "retgen/common.hpp"

namespace retgen::test {

using bank::RawExample;
using bank::TaskKind;

namespace {

const char* kNouns[] = {"river", "engine", "forest", "signal", "harbor", "crystal",
                        "meadow", "circuit", "glacier", "lantern"};
const char* kVerbs[] = {"feeds", "drives", "shields", "carries", "warms", "splits"};
const char* kAdjectives[] = {"quiet", "rapid", "narrow", "bright", "deep", "steady"};

std::string pick(Rng& rng, std::span<const char* const> words) {
    return words[size_t(rng.bounded(words.size()))];
}

} // namespace

std::vector<RawExample> mixed_fixtures(int per_kind, uint64_t seed) {
    Rng rng(seed);
    std::vector<RawExample> out;
    int serial = 0;
    for (int i = 0; i < per_kind; ++i) {
        {
            RawExample ex;
            ex.task_id = "fx-extractive";
            ex.kind = TaskKind::extractive_qa;
            ex.id = "fx-ex-" + std::to_string(serial++);
            std::string noun = pick(rng, kNouns);
            ex.question = "What " + pick(rng, kVerbs) + " the " + noun + "?";
            ex.answer = "the " + pick(rng, kAdjectives) + " " + pick(rng, kNouns);
            ex.context = {"The " + noun + " sits beyond the " + pick(rng, kNouns) + ".",
                          "Many call it " + ex.answer + "."};
            out.push_back(ex);
        }
        {
            RawExample ex;
            ex.task_id = "fx-choice";
            ex.kind = TaskKind::multiple_choice_qa;
            ex.id = "fx-mc-" + std::to_string(serial++);
            ex.question = "Which word fits the " + pick(rng, kNouns) + "?";
            for (int o = 0; o < 4; ++o)
                ex.options.push_back(pick(rng, kAdjectives) + " " + std::to_string(o));
            ex.answer = ex.options[size_t(rng.bounded(4))];
            ex.context = {"One sentence of support.", "Another sentence of support."};
            out.push_back(ex);
        }
        {
            RawExample ex;
            ex.task_id = "fx-single";
            ex.kind = TaskKind::single_sentence_classification;
            ex.id = "fx-sc-" + std::to_string(serial++);
            ex.question = "The " + pick(rng, kNouns) + " " + pick(rng, kVerbs) + " the " +
                          pick(rng, kNouns) + ".";
            ex.labels = {"description", "entity", "location", "number"};
            ex.answer = ex.labels[size_t(rng.bounded(4))];
            out.push_back(ex);
        }
        {
            RawExample ex;
            ex.task_id = "fx-pair";
            ex.kind = TaskKind::sentence_pair_classification;
            ex.id = "fx-sp-" + std::to_string(serial++);
            ex.question = "A " + pick(rng, kAdjectives) + " " + pick(rng, kNouns) + " " +
                          pick(rng, kVerbs) + " something.";
            ex.context = {"The " + pick(rng, kNouns) + " " + pick(rng, kVerbs) + " the " +
                          pick(rng, kNouns) + "."};
            ex.labels = {"entailment", "neutral", "contradiction"};
            ex.answer = ex.labels[size_t(rng.bounded(3))];
            out.push_back(ex);
        }
    }
    return out;
}

} // namespace retgen::test
