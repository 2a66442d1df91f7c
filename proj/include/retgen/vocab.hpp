#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "retgen/common.hpp"

namespace retgen::model {

// Whitespace-level token vocabulary with byte fallback, so every corpus
// token is encodable. Reserved ids come first, then the 256 byte tokens,
// then corpus words ordered by (frequency desc, word asc).
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kMask = 3;
    static constexpr int kSep = 4;
    static constexpr int kByteBase = 5;
    static constexpr int kFirstWord = kByteBase + 256;

    static Vocabulary build(std::span<const std::string> texts, size_t max_size);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int id(std::string_view token) const; // -1 when absent
    const std::string& token(int id) const;
    size_t size() const { return tokens_.size(); }

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

    Vocabulary() = default; // empty; fill via build() or load()

  private:
    void add_reserved();
    void index_tokens();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

} // namespace retgen::model
