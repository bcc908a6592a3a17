#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace synth {

// Number of Unicode scalar values in a UTF-8 string. Invalid bytes count as one
// character each.
std::size_t utf8_length(std::string_view s);

// Longest prefix holding at most `n_chars` scalar values.
std::string_view utf8_prefix(std::string_view s, std::size_t n_chars);

// Decode to code points; invalid sequences become U+FFFD.
std::u32string utf8_decode(std::string_view s);
void utf8_append(std::string& out, char32_t cp);
std::string utf8_encode(std::u32string_view s);

bool is_ascii_space(char c);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::size_t word_count(std::string_view s);

std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

// Simple lowercase mapping for Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t fold_case(char32_t cp);
bool is_letter(char32_t cp);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Unbiased integer in [0, bound) from a 64-bit engine. Used instead of
// std::uniform_int_distribution so draws are identical across standard
// libraries.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

// Uniform double in [0, 1) with 53 random bits.
double unit_draw(std::mt19937_64& rng);

// Standard normal via Box-Muller on unit_draw.
double normal_draw(std::mt19937_64& rng);

template <typename T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded_draw(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace synth
