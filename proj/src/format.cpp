#include "retgen/format.hpp"

#include <algorithm>

namespace retgen::bank {

namespace {

// The templates join fields with the literal two-character "\n" marker,
// matching the question/answer/context convention the record formats feed.
constexpr const char* kQuestionHeader = "question: ";
constexpr const char* kAnswerHeader = " \\n answer: ";
constexpr const char* kContextHeader = " \\n context: ";
constexpr const char* kMaskToken = "[MASK]";

std::string letter_block(std::span<const std::string> items) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += ' ';
        out += '(';
        out += char('A' + int(i));
        out += ") ";
        out += items[i];
    }
    return out;
}

// Splits "(A) ... (B) ..." into items plus whatever follows the block.
bool parse_letter_block(std::string_view s, std::vector<std::string>& items, std::string& rest) {
    if (s.rfind("(A) ", 0) != 0) return false;
    size_t cursor = 4;
    char letter = 'A';
    while (true) {
        std::string next_marker = std::string(" (") + char(letter + 1) + ") ";
        size_t next = s.find(next_marker, cursor);
        if (next != std::string_view::npos) {
            items.emplace_back(s.substr(cursor, next - cursor));
            cursor = next + next_marker.size();
            ++letter;
            continue;
        }
        size_t dot = s.find(". ", cursor);
        if (dot != std::string_view::npos) {
            items.emplace_back(s.substr(cursor, dot - cursor));
            rest = std::string(s.substr(dot + 2));
        } else {
            std::string last(s.substr(cursor));
            if (!last.empty() && last.back() == '.') last.pop_back();
            items.emplace_back(std::move(last));
            rest.clear();
        }
        return true;
    }
}

struct Fields {
    std::string question;
    std::string context;
};

// Places the option/label inventory per the variant; sentence-pair tasks
// never carry an inventory.
Fields assemble_fields(const RawExample& ex, FormatVariant variant) {
    std::span<const std::string> head;
    if (ex.kind == TaskKind::multiple_choice_qa)
        head = ex.options;
    else if (ex.kind == TaskKind::single_sentence_classification)
        head = ex.labels;

    Fields f;
    f.question = ex.question;
    std::string joined = join(ex.context, " ");
    switch (variant) {
        case FormatVariant::options_in_context_generate_answer:
            if (!head.empty()) {
                f.context = letter_block(head) + ".";
                if (!joined.empty()) f.context += " " + joined;
            } else {
                f.context = joined;
            }
            break;
        case FormatVariant::options_in_question_generate_letter:
        case FormatVariant::options_in_question_generate_answer:
            if (!head.empty()) f.question += " " + letter_block(head);
            f.context = joined;
            break;
        case FormatVariant::no_options_generate_answer:
            f.context = joined;
            break;
        default:
            throw ContractError("unknown format variant");
    }
    return f;
}

std::string target_answer(const RawExample& ex, FormatVariant variant) {
    if (variant == FormatVariant::options_in_question_generate_letter) {
        std::span<const std::string> head =
            ex.kind == TaskKind::multiple_choice_qa ? std::span<const std::string>(ex.options)
                                                    : std::span<const std::string>(ex.labels);
        auto it = std::find(head.begin(), head.end(), ex.answer);
        if (it == head.end()) throw DataError("answer not found among options: " + ex.id);
        return std::string(1, char('A' + int(it - head.begin())));
    }
    return ex.answer;
}

} // namespace

FormatVariant parse_variant(std::string_view name) {
    if (name == "options-in-context") return FormatVariant::options_in_context_generate_answer;
    if (name == "options-in-question-letter") return FormatVariant::options_in_question_generate_letter;
    if (name == "options-in-question") return FormatVariant::options_in_question_generate_answer;
    if (name == "no-options") return FormatVariant::no_options_generate_answer;
    throw ContractError("unknown format variant: " + std::string(name));
}

std::string variant_name(FormatVariant v) {
    switch (v) {
        case FormatVariant::options_in_context_generate_answer: return "options-in-context";
        case FormatVariant::options_in_question_generate_letter: return "options-in-question-letter";
        case FormatVariant::options_in_question_generate_answer: return "options-in-question";
        case FormatVariant::no_options_generate_answer: return "no-options";
    }
    throw ContractError("unknown format variant value");
}

FormattedExample format_example(const RawExample& ex, FormatVariant variant) {
    std::string problem = validate_example(ex);
    if (!problem.empty()) throw DataError(problem + " (" + ex.id + ")");
    Fields f = assemble_fields(ex, variant);
    FormattedExample out;
    out.input_text =
        kQuestionHeader + f.question + kAnswerHeader + kMaskToken + kContextHeader + f.context;
    std::string gold = target_answer(ex, variant);
    out.target_text = kQuestionHeader + ex.question + kAnswerHeader;
    out.answer_begin = out.target_text.size();
    out.target_text += gold;
    out.answer_end = out.target_text.size();
    return out;
}

ParsedInput parse_input(std::string_view input_text) {
    if (input_text.rfind(kQuestionHeader, 0) != 0)
        throw FormatError("formatted input does not start with the question header");
    size_t a = input_text.find(kAnswerHeader);
    if (a == std::string_view::npos) throw FormatError("formatted input has no answer header");
    size_t c = input_text.find(kContextHeader, a);
    if (c == std::string_view::npos) throw FormatError("formatted input has no context header");
    ParsedInput out;
    out.question = std::string(input_text.substr(10, a - 10));
    std::string slot(input_text.substr(a + 12, c - (a + 12)));
    out.has_mask = slot == kMaskToken;
    out.context = std::string(input_text.substr(c + 13));

    std::vector<std::string> items;
    std::string rest;
    if (parse_letter_block(out.context, items, rest)) {
        out.options = std::move(items);
    } else {
        size_t blk = out.question.find(" (A) ");
        if (blk != std::string::npos) {
            items.clear();
            if (parse_letter_block(std::string_view(out.question).substr(blk + 1), items, rest)) {
                out.options = std::move(items);
                out.question.resize(blk);
            }
        }
    }
    return out;
}

std::string parse_target_answer(std::string_view target_text) {
    size_t a = target_text.rfind("answer:");
    if (a == std::string_view::npos) return "";
    return trim(target_text.substr(a + 7));
}

std::string parse_target_question(std::string_view target_text) {
    if (target_text.rfind(kQuestionHeader, 0) != 0) return "";
    size_t a = target_text.find(kAnswerHeader);
    if (a == std::string_view::npos) return "";
    return std::string(target_text.substr(10, a - 10));
}

Demonstration render_demonstration(const RawExample& ex, FormatVariant variant) {
    std::string problem = validate_example(ex);
    if (!problem.empty()) throw DataError(problem + " (" + ex.id + ")");
    Fields f = assemble_fields(ex, variant);
    Demonstration d;
    d.id = ex.id;
    d.task_id = ex.task_id;
    d.title = ex.answer; // the title is simply the answer
    d.text = kQuestionHeader + f.question + kAnswerHeader + ex.answer + kContextHeader + f.context;
    return d;
}

ParsedDemonstration parse_demonstration(std::string_view text) {
    if (text.rfind(kQuestionHeader, 0) != 0)
        throw FormatError("demonstration does not start with the question header");
    size_t a = text.find(kAnswerHeader);
    if (a == std::string_view::npos) throw FormatError("demonstration has no answer header");
    size_t c = text.find(kContextHeader, a);
    if (c == std::string_view::npos) throw FormatError("demonstration has no context header");
    ParsedDemonstration out;
    out.question = std::string(text.substr(10, a - 10));
    out.answer = std::string(text.substr(a + 12, c - (a + 12)));
    out.context = std::string(text.substr(c + 13));
    return out;
}

} // namespace retgen::bank
