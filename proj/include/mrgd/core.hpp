// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Shared domain types for guided caption decoding.
 *
 * Everything here is a plain value type: immutable after construction and
 * safe to share across threads. Validation functions return their input
 * unchanged or throw a single OUT_OF_RANGE Error naming the first violated
 * field in declaration order.
 */

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mrgd/error.hpp"

namespace mrgd {

// ============================================================================
// Prompt and generation parameters
// ============================================================================

struct VisualContext {
  std::string image_ref;
  std::string instruction;

  friend bool operator==(const VisualContext&, const VisualContext&) = default;
};

/// Sentence period between reward evaluations. Infinity is a distinct mode
/// (single round of complete responses), not a large integer.
class SentencePeriod {
 public:
  static constexpr SentencePeriod every(int sentences) {
    return SentencePeriod(Kind::Sentences, sentences);
  }
  static constexpr SentencePeriod infinity() {
    return SentencePeriod(Kind::Infinity, 0);
  }

  constexpr bool is_infinite() const { return kind_ == Kind::Infinity; }
  /// Only meaningful when !is_infinite().
  constexpr int sentences() const { return sentences_; }

  std::string to_string() const {
    return is_infinite() ? std::string("inf") : std::to_string(sentences_);
  }

  /// Accepts a decimal integer or "inf" / "INFINITY" (case-insensitive).
  static SentencePeriod parse(std::string_view text) {
    std::string lower;
    for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "inf" || lower == "infinity") return infinity();
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
      throw Error(ErrorCode::Parse, "T: expected integer or 'inf', got '" + std::string(text) + "'");
    }
    return every(value);
  }

  friend constexpr bool operator==(const SentencePeriod&, const SentencePeriod&) = default;

 private:
  enum class Kind { Sentences, Infinity };
  constexpr SentencePeriod(Kind kind, int sentences) : kind_(kind), sentences_(sentences) {}
  Kind kind_;
  int sentences_;
};

struct GenerationParams {
  int k = 30;
  SentencePeriod T = SentencePeriod::every(1);
  double temperature = 1.0;
  int max_total_tokens = 512;
  int max_iterations = 64;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

enum class HalNormalization { None, MinMax };
enum class HalScope { FullPrefix, LastChunk };

struct GuidanceConfig {
  double w = 1.0;
  double tau = 0.5;
  HalNormalization hal_normalization = HalNormalization::None;
  HalScope hal_scope = HalScope::FullPrefix;

  friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

inline std::string_view to_string(HalNormalization n) {
  return n == HalNormalization::MinMax ? "MINMAX" : "NONE";
}
inline std::string_view to_string(HalScope s) {
  return s == HalScope::LastChunk ? "LAST_CHUNK" : "FULL_PREFIX";
}

inline HalNormalization parse_hal_normalization(std::string_view v) {
  if (v == "NONE" || v == "none") return HalNormalization::None;
  if (v == "MINMAX" || v == "minmax") return HalNormalization::MinMax;
  throw Error(ErrorCode::Parse, "hal_normalization: unknown value '" + std::string(v) + "'");
}

inline HalScope parse_hal_scope(std::string_view v) {
  if (v == "FULL_PREFIX" || v == "full_prefix") return HalScope::FullPrefix;
  if (v == "LAST_CHUNK" || v == "last_chunk") return HalScope::LastChunk;
  throw Error(ErrorCode::Parse, "hal_scope: unknown value '" + std::string(v) + "'");
}

// ============================================================================
// Validation
// ============================================================================

namespace detail {
// NaN fails every comparison, so it is rejected by the same checks.
inline bool in_closed(double v, double lo, double hi) { return v >= lo && v <= hi; }
}  // namespace detail

inline const GuidanceConfig& validate_guidance_config(const GuidanceConfig& cfg) {
  if (!detail::in_closed(cfg.w, 0.0, 1.0)) throw Error(ErrorCode::OutOfRange, "w");
  if (!detail::in_closed(cfg.tau, -1.0, 1.0)) throw Error(ErrorCode::OutOfRange, "tau");
  return cfg;
}

inline const GenerationParams& validate_generation_params(const GenerationParams& p) {
  if (p.k < 1) throw Error(ErrorCode::OutOfRange, "k");
  if (!p.T.is_infinite() && p.T.sentences() < 1) throw Error(ErrorCode::OutOfRange, "T");
  if (!(p.temperature >= 0.0) || std::isinf(p.temperature))
    throw Error(ErrorCode::OutOfRange, "temperature");
  if (p.max_total_tokens < 1) throw Error(ErrorCode::OutOfRange, "max_total_tokens");
  if (p.max_iterations < 1) throw Error(ErrorCode::OutOfRange, "max_iterations");
  return p;
}

// ============================================================================
// Candidates and the accumulated response
// ============================================================================

struct Candidate {
  std::string text;
  bool finished = false;
  int token_count = 0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// The response y under construction: the concatenation of selected chunks.
class PartialResponse {
 public:
  const std::string& text() const { return text_; }
  int chunks_selected() const { return chunks_selected_; }
  bool finished() const { return finished_; }

  /// Appends a selected chunk. Appending after a finished chunk is a logic
  /// error in the caller.
  void append(const Candidate& chunk) {
    if (finished_) throw std::logic_error("append to a finished response");
    text_ += chunk.text;
    ++chunks_selected_;
    finished_ = chunk.finished;
  }

 private:
  std::string text_;
  int chunks_selected_ = 0;
  bool finished_ = false;
};

// ============================================================================
// Episode trace
// ============================================================================

struct IterationRecord {
  int iteration = 0;
  std::vector<Candidate> candidates;
  std::vector<double> r_hal;
  std::vector<double> r_rec;
  std::vector<double> combined;
  std::size_t selected = 0;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct EpisodeTrace {
  std::vector<IterationRecord> iterations;
  std::uint64_t seed = 0;
  std::int64_t total_generated_tokens = 0;
  std::int64_t total_backend_calls = 0;

  friend bool operator==(const EpisodeTrace&, const EpisodeTrace&) = default;
};

// ============================================================================
// Seeded randomness
// ============================================================================

namespace detail {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Keyed counter-based stream. Draw i is a pure function of (key, i), and
/// split(tag) derives an independent child key, so any consumer can be handed
/// its own stream (or a plain 64-bit seed) without sharing mutable state.
class SeedStream {
 public:
  constexpr explicit SeedStream(std::uint64_t seed) : key_(detail::mix64(seed ^ 0x6d72676421ULL)) {}

  constexpr SeedStream split(std::uint64_t tag) const {
    SeedStream child(0);
    child.key_ = detail::mix64(key_ ^ detail::mix64(tag + detail::kGolden));
    child.counter_ = 0;
    return child;
  }

  /// A 64-bit seed identifying this stream, for handing to a backend.
  constexpr std::uint64_t seed() const { return key_; }

  constexpr std::uint64_t next() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform double in [0, 1) with 53 bits of resolution.
  constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform index in [0, n); n must be positive.
  constexpr std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mrgd
