// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mrgd/error.hpp"
#include "mrgd/rewards.hpp"

namespace mrgd {

namespace detail {
inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

inline bool is_word(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_alpha);
}
}  // namespace detail

/// Object vocabulary: surface forms (plurals, synonyms) folded onto
/// canonical labels. Lookups are case-insensitive.
class Lexicon {
 public:
  Lexicon() = default;

  /// Registers `canonical` and every surface form as mapping to it.
  void add(std::string_view canonical, const std::vector<std::string>& surfaces = {}) {
    auto canon = detail::to_lower(canonical);
    canonicals_.insert(canon);
    entries_[canon] = canon;
    for (const auto& s : surfaces) entries_[detail::to_lower(s)] = canon;
  }

  std::optional<std::string> lookup(std::string_view surface) const {
    auto it = entries_.find(detail::to_lower(surface));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool is_canonical(std::string_view label) const { return canonicals_.count(std::string(label)) > 0; }
  const std::set<std::string>& canonical_labels() const { return canonicals_; }
  bool empty() const { return canonicals_.empty(); }

  /// Parses `canonical: surface1, surface2, ...` records, one per line.
  /// Blank lines and '#' comments are skipped. Every label must be a single
  /// alphabetic word.
  static Lexicon parse(std::istream& in, std::string_view source = "lexicon") {
    Lexicon lex;
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::Parse, std::string(source) + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view view(line);
      if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
      view = detail::trim(view);
      if (view.empty()) continue;

      auto colon = view.find(':');
      auto canonical = detail::trim(view.substr(0, colon));
      if (!detail::is_word(canonical)) fail("invalid canonical label '" + std::string(canonical) + "'");

      std::vector<std::string> surfaces;
      if (colon != std::string_view::npos) {
        std::string_view rest = view.substr(colon + 1);
        while (!rest.empty()) {
          auto comma = rest.find(',');
          auto item = detail::trim(rest.substr(0, comma));
          if (!item.empty()) {
            if (!detail::is_word(item)) fail("invalid surface form '" + std::string(item) + "'");
            surfaces.emplace_back(item);
          }
          if (comma == std::string_view::npos) break;
          rest.remove_prefix(comma + 1);
        }
      }
      lex.add(canonical, surfaces);
    }
    return lex;
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot read lexicon '" + path + "'");
    return parse(in, path);
  }

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::set<std::string> canonicals_;
};

/// Resolves one word to its canonical label. Listed surfaces win; otherwise a
/// regular plural ending (-s, -es, -ies) is stripped if the stem resolves.
inline std::optional<std::string> canonicalize(std::string_view word, const Lexicon& lexicon) {
  auto lower = detail::to_lower(word);
  if (auto hit = lexicon.lookup(lower)) return hit;
  auto ends_with = [&](std::string_view suffix) {
    return lower.size() > suffix.size() &&
           std::string_view(lower).substr(lower.size() - suffix.size()) == suffix;
  };
  if (ends_with("ies")) {
    if (auto hit = lexicon.lookup(lower.substr(0, lower.size() - 3) + "y")) return hit;
  }
  if (ends_with("es")) {
    if (auto hit = lexicon.lookup(lower.substr(0, lower.size() - 2))) return hit;
  }
  if (ends_with("s")) {
    if (auto hit = lexicon.lookup(lower.substr(0, lower.size() - 1))) return hit;
  }
  return std::nullopt;
}

/// Splits on every non-alphabetic character.
inline std::vector<std::string_view> word_tokens(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !detail::is_alpha(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && detail::is_alpha(text[i])) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

/// Object mentions in order of first occurrence, one per canonical label.
inline std::vector<ObjectMention> extract_object_mentions(std::string_view caption,
                                                          const Lexicon& lexicon) {
  std::vector<ObjectMention> mentions;
  std::unordered_set<std::string> seen;
  for (auto token : word_tokens(caption)) {
    auto canonical = canonicalize(token, lexicon);
    if (canonical && seen.insert(*canonical).second) {
      mentions.push_back({std::string(token), *canonical});
    }
  }
  return mentions;
}

/// Pluggable O_pred producer: the lexicon extractor offline, a tagging
/// service in live runs.
class ObjectExtractor {
 public:
  virtual ~ObjectExtractor() = default;
  virtual std::vector<ObjectMention> extract(std::string_view caption) const = 0;
  /// True when extract() is a service call (counted in the compute proxy).
  virtual bool is_remote() const { return false; }
};

class LexiconExtractor final : public ObjectExtractor {
 public:
  explicit LexiconExtractor(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

  std::vector<ObjectMention> extract(std::string_view caption) const override {
    return extract_object_mentions(caption, lexicon_);
  }

  const Lexicon& lexicon() const { return lexicon_; }

 private:
  Lexicon lexicon_;
};

}  // namespace mrgd
