#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ralbench {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic randomness.
//
// All seeded behavior in the harness (corruption sampling, negative sampling,
// batch shuffling) goes through this wrapper around std::mt19937_64. The raw
// engine output is specified bit-exactly by the C++ standard; the integer
// draws below avoid std::uniform_int_distribution, whose mapping is
// implementation-defined, so manifests reproduce across platforms.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform integer in [0, n), n > 0. Rejection sampling on the raw stream.
    std::uint64_t uniform_below(std::uint64_t n);

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform01();

    // In-place Fisher-Yates shuffle with portable index draws.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(uniform_below(i + 1));
            std::swap(items[i], items[j]);
        }
    }

    // First k elements of a shuffled [0, n) index range (sampling without
    // replacement), returned in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

// FNV-1a 64-bit hash, used for content addressing (embedding cache keys,
// generation cache keys, fixture embeddings).
std::uint64_t fnv1a64(std::string_view text);
std::string fnv1a64_hex(std::string_view text);

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------
std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);

// Case-fold + collapse runs of whitespace to single spaces; the comparison
// normal form used when matching answers against gold values.
std::string normalize_answer_text(std::string_view text);

// ---------------------------------------------------------------------------
// Filesystem helpers
// ---------------------------------------------------------------------------
std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Write via a temp file in the same directory followed by rename, so
// concurrent readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace ralbench
