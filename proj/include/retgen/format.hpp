#pragma once

#include <string>
#include <vector>

#include "retgen/records.hpp"

namespace retgen::bank {

// Multiple-choice template variants. Options-in-context with the full answer
// string as the target is the default; the others exist for format ablations.
enum class FormatVariant {
    options_in_context_generate_answer,
    options_in_question_generate_letter,
    options_in_question_generate_answer,
    no_options_generate_answer,
};

FormatVariant parse_variant(std::string_view name);
std::string variant_name(FormatVariant v);

struct FormattedExample {
    std::string input_text;  // "question: ... \n answer: [MASK] \n context: ..."
    std::string target_text; // "question: ... \n answer: <gold>"
    size_t answer_begin = 0; // span of the gold answer inside target_text
    size_t answer_end = 0;
};

FormattedExample format_example(const RawExample& ex,
                                FormatVariant variant = FormatVariant::options_in_context_generate_answer);

struct ParsedInput {
    std::string question;
    std::string context;
    bool has_mask = false;
    std::vector<std::string> options; // parsed from the head of the context field
};

ParsedInput parse_input(std::string_view input_text);
std::string parse_target_answer(std::string_view target_text);
std::string parse_target_question(std::string_view target_text);

// A memory entry: the filled-in template plus a title equal to the answer.
struct Demonstration {
    std::string id;      // source example id
    std::string task_id;
    std::string title;
    std::string text;    // "question: ... \n answer: <gold> \n context: ..."
};

Demonstration render_demonstration(const RawExample& ex,
                                   FormatVariant variant = FormatVariant::options_in_context_generate_answer);

struct ParsedDemonstration {
    std::string question;
    std::string answer;
    std::string context;
};

ParsedDemonstration parse_demonstration(std::string_view text);

} // namespace retgen::bank
