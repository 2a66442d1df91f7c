#include "retgen/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace retgen::model {

namespace {
std::string byte_token(unsigned char b) {
    static const char* digits = "0123456789ABCDEF";
    std::string s = "<0x";
    s += digits[b >> 4];
    s += digits[b & 0xf];
    s += '>';
    return s;
}
} // namespace

void Vocabulary::add_reserved() {
    tokens_ = {"<pad>", "<s>", "</s>", "[MASK]", "<sep>"};
    for (int b = 0; b < 256; ++b) tokens_.push_back(byte_token(static_cast<unsigned char>(b)));
}

void Vocabulary::index_tokens() {
    index_.clear();
    for (size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = int(i);
    if (index_.size() != tokens_.size()) throw DataError("vocabulary contains duplicate tokens");
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, size_t max_size) {
    Vocabulary v;
    v.add_reserved();
    if (max_size <= v.tokens_.size())
        throw ContractError("vocabulary size cap leaves no room for corpus words");
    // std::map keeps word order deterministic among equal counts
    std::map<std::string, int64_t> counts;
    for (const auto& text : texts)
        for (auto& w : split_ws(text)) counts[w] += 1;
    std::vector<std::pair<std::string, int64_t>> words(counts.begin(), counts.end());
    std::stable_sort(words.begin(), words.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [w, c] : words) {
        (void)c;
        if (v.tokens_.size() >= max_size) break;
        if (w == "<pad>" || w == "<s>" || w == "</s>" || w == "[MASK]" || w == "<sep>") continue;
        if (w.size() == 6 && w.rfind("<0x", 0) == 0 && w.back() == '>') continue;
        v.tokens_.push_back(w);
    }
    v.index_tokens();
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) v.tokens_.push_back(line);
    if (v.tokens_.size() < size_t(kFirstWord)) throw FormatError("vocabulary file too short: " + path);
    Vocabulary expect;
    expect.add_reserved();
    for (size_t i = 0; i < expect.tokens_.size(); ++i)
        if (v.tokens_[i] != expect.tokens_[i])
            throw FormatError("vocabulary reserved tokens are malformed: " + path);
    v.index_tokens();
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary: " + path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw IoError("short write: " + path);
}

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || size_t(id) >= tokens_.size())
        throw IndexError("token id out of range: " + std::to_string(id));
    return tokens_[size_t(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    for (auto& w : split_ws(text)) {
        int id = this->id(w);
        if (id >= 0) {
            out.push_back(id);
        } else {
            for (unsigned char b : w) out.push_back(kByteBase + int(b));
        }
    }
    return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    bool in_bytes = false;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        const bool is_byte = id >= kByteBase && id < kFirstWord;
        if (is_byte) {
            if (!in_bytes && !out.empty()) out += ' ';
            out += char(id - kByteBase);
            in_bytes = true;
        } else {
            if (!out.empty()) out += ' ';
            out += token(id);
            in_bytes = false;
        }
    }
    return out;
}

} // namespace retgen::model
