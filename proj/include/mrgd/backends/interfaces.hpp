// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Backend boundary: generation, hallucination scoring, object detection,
 * word embedding and (optionally) object tagging.
 *
 * Implementations must be safe for concurrent calls; the decoder may issue
 * the k requests of one round from several threads. Backends never own
 * randomness: every GenerateRequest carries an explicit seed.
 */

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrgd/core.hpp"
#include "mrgd/extraction.hpp"
#include "mrgd/rewards.hpp"

namespace mrgd {

inline constexpr const char* kProtocolVersion = "mrgd/1";

/// Stop condition: after N sentence delimiters, or run to end of sequence.
struct StopCondition {
  std::optional<int> sentence_boundaries;  // nullopt means to_eos

  static StopCondition after(int n) { return {n}; }
  static StopCondition to_eos() { return {std::nullopt}; }
  bool is_to_eos() const { return !sentence_boundaries.has_value(); }

  friend bool operator==(const StopCondition&, const StopCondition&) = default;
};

struct GenerateRequest {
  std::string image_ref;
  std::string instruction;
  std::string prefix;
  int num_samples = 1;
  double temperature = 1.0;
  StopCondition stop;
  int max_tokens = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const GenerateRequest&, const GenerateRequest&) = default;
};

struct GenerateResponse {
  std::vector<Candidate> candidates;
  std::string reason;  // set when fewer than num_samples were returned

  friend bool operator==(const GenerateResponse&, const GenerateResponse&) = default;
};

struct ScoreRequest {
  std::string image_ref;
  std::string instruction;
  std::string response;

  friend bool operator==(const ScoreRequest&, const ScoreRequest&) = default;
};

struct Detection {
  std::string label;
  double confidence = 1.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenerateResponse generate(const GenerateRequest& req) const = 0;
};

/// r_hal provider; replies must lie in [0, 1].
class HallucinationScorer {
 public:
  virtual ~HallucinationScorer() = default;
  virtual double score(const ScoreRequest& req) const = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const std::string& image_ref) const = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> labels) const = 0;
};

static_assert(EmbeddingProvider<Embedder>);

struct BackendSet {
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const HallucinationScorer> scorer;
  std::shared_ptr<const Detector> detector;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const ObjectExtractor> extractor;
  /// Folds detector labels onto canonical labels; labels it does not know
  /// are used lowercased.
  std::shared_ptr<const Lexicon> lexicon;
  /// Detections below this confidence are dropped before forming O_ref.
  double detect_floor = 0.1;
};

}  // namespace mrgd
