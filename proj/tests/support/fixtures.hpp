#pragma once

#include <string>
#include <vector>

#include "retgen/records.hpp"

namespace retgen::test {

// The eight-option plant question used for multiple-choice format checks.
inline bank::RawExample sunlight_example() {
    bank::RawExample ex;
    ex.task_id = "qasc";
    ex.kind = bank::TaskKind::multiple_choice_qa;
    ex.id = "qasc-sunlight";
    ex.question = "What does sunlight do for a plant?";
    ex.options = {"during the day",       "Kills it",      "it can be seen",
                  "Helps it survive",     "Helps it drink water",
                  "It gets heated up",    "adding heat",   "Makes the color darker"};
    ex.answer = "Helps it survive";
    ex.context = {"A plant requires food for survival.",
                  "All plants require sunlight to make their food."};
    return ex;
}

// Deterministic mixed-kind fixtures for round-trip checks.
std::vector<bank::RawExample> mixed_fixtures(int per_kind, uint64_t seed);

} // namespace retgen::test
