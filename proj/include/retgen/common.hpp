#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace retgen {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size disagreement between arrays.
struct DimensionError : Error { using Error::Error; };
// Caller broke an operation precondition.
struct ContractError : Error { using Error::Error; };
// Id or position outside the valid range.
struct IndexError : Error { using Error::Error; };
// Persisted file is corrupt, truncated, or has an unknown version.
struct FormatError : Error { using Error::Error; };
// Input data failed validation.
struct DataError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Deterministic RNG. mt19937_64 raw output is pinned by the standard; the
// derived draws below are implemented explicitly so identical seeds give
// identical streams on every platform and standard library.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next() { return gen_(); }

    // Unbiased draw in [0, n). n must be positive.
    uint64_t bounded(uint64_t n);

    // [0, 1) with 53 random bits.
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

uint64_t fnv1a(std::string_view data, uint64_t h = 14695981039346656037ull);
std::string hex64(uint64_t v);
std::string hash_file(const std::string& path);

// Derives an independent seed for a named substream of a run seed.
uint64_t mix_seed(uint64_t seed, std::string_view tag);

// Toggle for the finite-value guard applied to kernel outputs.
bool finite_checks_enabled();
void set_finite_checks(bool on);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

std::vector<std::string> split_ws(std::string_view text);
std::string lowercase(std::string_view s);
std::string trim(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);

namespace io {

// Little-endian binary primitives. Reads throw FormatError on truncation.
void write_u8(std::ostream& os, uint8_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_i64(std::ostream& os, int64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, std::string_view s);

uint8_t read_u8(std::istream& is);
uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
int64_t read_i64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is);

} // namespace io

} // namespace retgen
