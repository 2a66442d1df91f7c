#include "retgen/common.hpp"

#include <atomic>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace retgen {

uint64_t Rng::bounded(uint64_t n) {
    if (n == 0) throw ContractError("Rng::bounded: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

uint64_t fnv1a(std::string_view data, uint64_t h) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path);
    uint64_t h = 14695981039346656037ull;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(std::string_view(buf, size_t(in.gcount())), h);
    }
    return hex64(h);
}

uint64_t mix_seed(uint64_t seed, std::string_view tag) {
    return fnv1a(tag, 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull));
}

namespace {
std::atomic<bool> g_finite_checks{true};
}

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw IoError("short write: " + path);
}

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

namespace io {

namespace {
void put(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
    if (!os) throw IoError("binary write failed");
}
void get(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(is.gcount()) != n) throw FormatError("unexpected end of file");
}
} // namespace

void write_u8(std::ostream& os, uint8_t v) { put(os, &v, 1); }

void write_u32(std::ostream& os, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    put(os, b, 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    put(os, b, 8);
}

void write_i64(std::ostream& os, int64_t v) { write_u64(os, uint64_t(v)); }
void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<uint32_t>(v)); }
void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<uint64_t>(v)); }

void write_string(std::ostream& os, std::string_view s) {
    write_u32(os, uint32_t(s.size()));
    put(os, s.data(), s.size());
}

uint8_t read_u8(std::istream& is) {
    uint8_t v;
    get(is, &v, 1);
    return v;
}

uint32_t read_u32(std::istream& is) {
    uint8_t b[4];
    get(is, b, 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t read_u64(std::istream& is) {
    uint8_t b[8];
    get(is, b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

int64_t read_i64(std::istream& is) { return int64_t(read_u64(is)); }
float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }
double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

std::string read_string(std::istream& is) {
    uint32_t n = read_u32(is);
    if (n > (1u << 28)) throw FormatError("string length out of range");
    std::string s(n, '\0');
    get(is, s.data(), n);
    return s;
}

} // namespace io

} // namespace retgen
