#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

// UTF-8 helpers. Character counts throughout the pipeline are Unicode scalar
// counts, never byte counts.

/// Replaces every ill-formed UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

/// Number of Unicode scalars in well-formed UTF-8 text.
std::size_t scalar_count(std::string_view text);

std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view scalars);

std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);
bool is_blank(std::string_view s);

/// Collapses whitespace runs to one space and strips both ends.
std::string normalize_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);
bool starts_with_icase(std::string_view text, std::string_view prefix);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Stable per-item seed: mixes a run seed with an item key (e.g. a document id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Seeded random source. The engine output is fixed by the standard; the
/// distributions are done here so draws match across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Uniform integer in [lo, hi].
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi);
    double unit();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace forge
