#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mlmprobe {

inline constexpr std::string_view kMaskSentinel = "[MASK]";
inline constexpr std::string_view kSeparator = "[SEP]";

// Splits on every tab; "a\t\tb" yields three fields.
std::vector<std::string_view> split_tabs(std::string_view line);

// Strips a trailing '\r' (files written on Windows).
std::string_view chomp(std::string_view line);

// Collapses whitespace runs to one space and trims both ends.
std::string normalize_spaces(std::string_view text);

std::vector<std::string_view> split_words(std::string_view text);

std::string ascii_lower(std::string_view text);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

// Whole-word, ASCII case-insensitive search. A word character is an ASCII
// letter or digit, '_' or any byte >= 0x80 (so UTF-8 letters never act as
// boundaries). Returns the byte offsets of non-overlapping matches.
std::vector<std::size_t> find_whole_word(std::string_view haystack, std::string_view word);

// Escapes '\\', '\t', '\n' and '\r' so a field survives a TSV round trip.
std::string escape_field(std::string_view text);
std::string unescape_field(std::string_view text);

// 64-bit FNV-1a. Stable across platforms; used for ids and cache keys.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view bytes);
  Fnv1a& add(std::uint64_t value);
  // Length-prefixed, so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& field(std::string_view bytes);
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

// Fixed-point rendering used everywhere numbers are written to disk.
std::string format_fixed(double value, int decimals = 6);

}  // namespace mlmprobe
