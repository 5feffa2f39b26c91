// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sentence chunking on the literal '.' delimiter. No abbreviation or decimal
// handling: "3.5" counts as a boundary.

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>

namespace mrgd {

inline constexpr char kSentenceDelimiter = '.';

struct ChunkSplit {
  std::string chunk;
  std::string remainder;
  int boundaries_found = 0;

  friend bool operator==(const ChunkSplit&, const ChunkSplit&) = default;
};

inline int count_boundaries(std::string_view text) {
  return static_cast<int>(std::count(text.begin(), text.end(), kSentenceDelimiter));
}

/// Splits `text` right after its T-th delimiter. Whitespace following that
/// delimiter stays in the remainder. With fewer than T delimiters the whole
/// text is the chunk. Requires T >= 1.
inline ChunkSplit truncate_after_boundaries(std::string_view text, int T) {
  int found = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != kSentenceDelimiter) continue;
    if (++found == T) {
      return {std::string(text.substr(0, i + 1)), std::string(text.substr(i + 1)), found};
    }
  }
  return {std::string(text), std::string(), found};
}

/// Whitespace-separated word count. Token counts of fixture and simulated
/// candidates and caption lengths use this convention.
inline int count_words(std::string_view text) {
  int words = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

/// Keeps at most the first `max_words` words; trailing whitespace is dropped.
inline std::string truncate_to_words(std::string_view text, int max_words) {
  std::size_t pos = 0;
  int words = 0;
  bool in_word = false;
  for (; pos < text.size(); ++pos) {
    bool space = std::isspace(static_cast<unsigned char>(text[pos])) != 0;
    if (!space && !in_word && ++words > max_words) break;
    in_word = !space;
  }
  std::string out(text.substr(0, pos));
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
  return out;
}

}  // namespace mrgd
