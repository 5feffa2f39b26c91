// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Reward-guided decoding.
 *
 * One episode grows a single partial response. Each round asks the generator
 * for k continuations of the current prefix (each cut after T sentences),
 * scores every prefix+continuation with
 *
 *     s = w * r_hal + (1 - w) * r_rec
 *
 * and appends the best one (smallest index on ties). The episode ends when
 * the selected continuation is finished, or a token/iteration cap trips.
 *
 * With T = infinity there is exactly one round of k complete responses:
 * best-of-k.
 *
 * Randomness: the episode seed feeds a SeedStream; round i, attempt a uses
 * the seed of stream.split(i).split(a). Backends see only that seed, so
 * results do not depend on how scoring is scheduled.
 */

#include <algorithm>
#include <future>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgd/backends/interfaces.hpp"
#include "mrgd/core.hpp"
#include "mrgd/extraction.hpp"
#include "mrgd/rewards.hpp"
#include "mrgd/segmenter.hpp"

namespace mrgd {

enum class Termination { Eos, MaxTokens, MaxIterations };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Eos: return "EOS";
    case Termination::MaxTokens: return "MAX_TOKENS";
    case Termination::MaxIterations: return "MAX_ITERATIONS";
  }
  return "UNKNOWN";
}

struct DecodeResult {
  std::string final_text;
  EpisodeTrace trace;
  Termination termination = Termination::Eos;

  friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

struct DecodeOptions {
  double minmax_epsilon = 1e-6;
  /// Score the k candidates of a round on separate threads. Selection still
  /// waits for all k scores.
  bool parallel_scoring = false;
};

/// Smallest index attaining the maximum.
inline std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyCandidates, "select_best");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

class GuidedDecoder {
 public:
  explicit GuidedDecoder(BackendSet backends, DecodeOptions options = {})
      : backends_(std::move(backends)), options_(options) {}

  DecodeResult decode_episode(const VisualContext& ctx, const GenerationParams& params,
                              const GuidanceConfig& guidance, std::uint64_t seed) const {
    validate_generation_params(params);
    validate_guidance_config(guidance);
    Episode ep = begin(ctx, guidance, seed);

    for (int iteration = 0; iteration < params.max_iterations; ++iteration) {
      run_round(ep, iteration, params, guidance);
      if (ep.response.finished()) return finish(ep, Termination::Eos);
      if (params.T.is_infinite() || ep.response_tokens >= params.max_total_tokens) {
        return finish(ep, Termination::MaxTokens);
      }
    }
    return finish(ep, Termination::MaxIterations);
  }

  /// Single round of k complete responses, one scoring pass, one selection.
  DecodeResult best_of_k(const VisualContext& ctx, const GenerationParams& params,
                         const GuidanceConfig& guidance, std::uint64_t seed) const {
    GenerationParams single = params;
    single.T = SentencePeriod::infinity();
    validate_generation_params(single);
    validate_guidance_config(guidance);
    Episode ep = begin(ctx, guidance, seed);
    run_round(ep, 0, single, guidance);
    return finish(ep, ep.response.finished() ? Termination::Eos : Termination::MaxTokens);
  }

  struct ResponseScore {
    std::optional<double> r_hal;
    std::optional<double> r_rec;
    double combined = 0.0;
  };

  /// Scores a complete response. Rewards with non-zero weight are required;
  /// a zero-weight reward is still reported when its backends are present.
  ResponseScore score_response(const VisualContext& ctx, const std::string& response,
                               const GuidanceConfig& guidance) const {
    validate_guidance_config(guidance);
    GuidanceConfig probe = guidance;
    const bool have_hal = backends_.scorer != nullptr;
    const bool have_rec = backends_.detector && backends_.embedder && backends_.extractor;
    Episode ep = begin(ctx, guidance, 0, guidance.w > 0.0 || have_hal, guidance.w < 1.0 || have_rec);
    probe.hal_scope = HalScope::FullPrefix;
    CandidateScore s;
    try {
      s = score_candidate(ep, probe, Candidate{response, true, count_words(response) + 1});
    } catch (const Error& e) {
      rethrow_as_backend_failure(e, "score");
    }
    ResponseScore out{s.r_hal, s.r_rec, 0.0};
    out.combined = combine_scores(guidance.w > 0.0 ? *s.r_hal : 0.0, guidance.w < 1.0 ? *s.r_rec : 0.0, guidance.w);
    return out;
  }

  const BackendSet& backends() const { return backends_; }
  const DecodeOptions& options() const { return options_; }

 private:
  struct Episode {
    VisualContext ctx;
    SeedStream stream{0};
    PartialResponse response;
    int response_tokens = 0;
    bool need_hal = true;
    bool need_rec = true;
    std::vector<EmbeddingVector> ref_vectors;
    EpisodeTrace trace;
  };

  struct CandidateScore {
    std::optional<double> r_hal;
    std::optional<double> r_rec;
    std::int64_t calls = 0;
  };

  [[noreturn]] static void rethrow_as_backend_failure(const Error& e, const std::string& where) {
    if (e.code() == ErrorCode::EmptyCandidates || e.code() == ErrorCode::BackendFailure) throw;
    throw Error(ErrorCode::BackendFailure, where + ": " + e.what(), e.code());
  }

  Episode begin(const VisualContext& ctx, const GuidanceConfig& guidance, std::uint64_t seed) const {
    require(backends_.generator != nullptr, "generator");
    return begin(ctx, guidance, seed, guidance.w > 0.0, guidance.w < 1.0);
  }

  Episode begin(const VisualContext& ctx, const GuidanceConfig&, std::uint64_t seed, bool need_hal,
                bool need_rec) const {
    if (ctx.instruction.empty()) throw Error(ErrorCode::OutOfRange, "instruction");
    Episode ep;
    ep.ctx = ctx;
    ep.stream = SeedStream(seed);
    ep.trace.seed = seed;
    ep.need_hal = need_hal;
    ep.need_rec = need_rec;
    if (ep.need_hal) require(backends_.scorer != nullptr, "scorer");
    if (ep.need_rec) {
      require(backends_.detector != nullptr, "detector");
      require(backends_.embedder != nullptr, "embedder");
      require(backends_.extractor != nullptr, "extractor");
      try {
        auto refs = reference_objects(ctx.image_ref);
        ep.trace.total_backend_calls += 1;
        if (!refs.empty()) {
          ep.ref_vectors = backends_.embedder->embed(canonical_labels(refs));
          ep.trace.total_backend_calls += 1;
        }
      } catch (const Error& e) {
        rethrow_as_backend_failure(e, "iteration 0 (reference objects)");
      }
    }
    return ep;
  }

  static void require(bool present, const char* what) {
    if (!present) throw Error(ErrorCode::Parse, std::string("no ") + what + " backend configured");
  }

  /// O_ref: detections above the confidence floor, folded to canonical
  /// labels and deduplicated.
  std::vector<ObjectMention> reference_objects(const std::string& image_ref) const {
    std::vector<ObjectMention> refs;
    for (const auto& d : backends_.detector->detect(image_ref)) {
      if (d.confidence < backends_.detect_floor) continue;
      std::optional<std::string> canon;
      if (backends_.lexicon) canon = canonicalize(d.label, *backends_.lexicon);
      refs.push_back({d.label, canon ? *canon : detail::to_lower(d.label)});
    }
    return dedup_by_canonical(refs);
  }

  /// Applies the client-side stop condition and the response token cap.
  static Candidate enforce_limits(Candidate c, const GenerationParams& params, int remaining_tokens) {
    if (!params.T.is_infinite()) {
      auto split = truncate_after_boundaries(c.text, params.T.sentences());
      if (!detail::trim(split.remainder).empty()) {
        c.text = std::move(split.chunk);
        c.finished = false;
        c.token_count = count_words(c.text);
      }
    }
    if (c.token_count > remaining_tokens) {
      c.text = truncate_to_words(c.text, remaining_tokens);
      c.finished = false;
      c.token_count = std::min(remaining_tokens, count_words(c.text));
    }
    return c;
  }

  static bool degenerate(const std::vector<Candidate>& candidates) {
    return std::all_of(candidates.begin(), candidates.end(),
                       [](const Candidate& c) { return c.text.empty() && !c.finished; });
  }

  std::vector<Candidate> sample_round(Episode& ep, int iteration, const GenerationParams& params) const {
    const int remaining = params.max_total_tokens - ep.response_tokens;
    GenerateRequest req;
    req.image_ref = ep.ctx.image_ref;
    req.instruction = ep.ctx.instruction;
    req.prefix = ep.response.text();
    req.num_samples = params.k;
    req.temperature = params.temperature;
    req.stop = params.T.is_infinite() ? StopCondition::to_eos() : StopCondition::after(params.T.sentences());
    req.max_tokens = remaining;

    const SeedStream round = ep.stream.split(static_cast<std::uint64_t>(iteration));
    // Degenerate rounds (no candidates, or only empty unfinished ones) get
    // one retry on a fresh seed split.
    for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
      req.seed = round.split(attempt).seed();
      auto resp = backends_.generator->generate(req);
      ep.trace.total_backend_calls += 1;
      std::vector<Candidate> candidates;
      for (auto& c : resp.candidates) candidates.push_back(enforce_limits(std::move(c), params, remaining));
      for (const auto& c : candidates) ep.trace.total_generated_tokens += c.token_count;
      if (!candidates.empty() && !degenerate(candidates)) return candidates;
    }
    throw Error(ErrorCode::EmptyCandidates, "iteration " + std::to_string(iteration));
  }

  CandidateScore score_candidate(const Episode& ep, const GuidanceConfig& guidance,
                                 const Candidate& c) const {
    CandidateScore out;
    const std::string full = ep.response.text() + c.text;
    if (ep.need_hal) {
      const std::string& scored = guidance.hal_scope == HalScope::FullPrefix ? full : c.text;
      double r = backends_.scorer->score({ep.ctx.image_ref, ep.ctx.instruction, scored});
      out.calls += 1;
      if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::Schema, "r_hal outside [0,1]");
      out.r_hal = r;
    }
    if (ep.need_rec) {
      auto preds = dedup_by_canonical(backends_.extractor->extract(full));
      if (backends_.extractor->is_remote()) out.calls += 1;
      std::vector<EmbeddingVector> pred_vectors;
      if (!ep.ref_vectors.empty() && !preds.empty()) {
        pred_vectors = backends_.embedder->embed(canonical_labels(preds));
        out.calls += 1;
      }
      out.r_rec = recall_from_embeddings(ep.ref_vectors, pred_vectors, guidance.tau);
    }
    return out;
  }

  std::vector<CandidateScore> score_all(const Episode& ep, const GuidanceConfig& guidance,
                                        const std::vector<Candidate>& candidates) const {
    std::vector<CandidateScore> scores;
    scores.reserve(candidates.size());
    if (!options_.parallel_scoring || candidates.size() < 2) {
      for (const auto& c : candidates) scores.push_back(score_candidate(ep, guidance, c));
      return scores;
    }
    std::vector<std::future<CandidateScore>> pending;
    pending.reserve(candidates.size());
    for (const auto& c : candidates) {
      pending.push_back(std::async(std::launch::async,
                                   [this, &ep, &guidance, &c] { return score_candidate(ep, guidance, c); }));
    }
    // Barrier: every future is drained before any error propagates, and the
    // first failure in candidate order wins.
    std::exception_ptr first_error;
    for (auto& f : pending) {
      try {
        scores.push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
    return scores;
  }

  void run_round(Episode& ep, int iteration, const GenerationParams& params,
                 const GuidanceConfig& guidance) const {
    IterationRecord record;
    record.iteration = iteration;
    try {
      record.candidates = sample_round(ep, iteration, params);
      auto scores = score_all(ep, guidance, record.candidates);
      for (const auto& s : scores) {
        ep.trace.total_backend_calls += s.calls;
        if (s.r_hal) record.r_hal.push_back(*s.r_hal);
        if (s.r_rec) record.r_rec.push_back(*s.r_rec);
      }
    } catch (const Error& e) {
      rethrow_as_backend_failure(e, "iteration " + std::to_string(iteration));
    }

    if (ep.need_hal && guidance.hal_normalization == HalNormalization::MinMax) {
      record.r_hal = minmax_normalize(record.r_hal, options_.minmax_epsilon);
    }
    for (std::size_t j = 0; j < record.candidates.size(); ++j) {
      const double hal = ep.need_hal ? record.r_hal[j] : 0.0;
      const double rec = ep.need_rec ? record.r_rec[j] : 0.0;
      record.combined.push_back(combine_scores(hal, rec, guidance.w));
    }
    record.selected = select_best(record.combined);

    const Candidate& chosen = record.candidates[record.selected];
    ep.response.append(chosen);
    ep.response_tokens += chosen.token_count;
    ep.trace.iterations.push_back(std::move(record));
  }

  static DecodeResult finish(Episode& ep, Termination termination) {
    return {ep.response.text(), std::move(ep.trace), termination};
  }

  BackendSet backends_;
  DecodeOptions options_;
};

inline DecodeResult decode_episode(const VisualContext& ctx, const GenerationParams& params,
                                   const GuidanceConfig& guidance, const BackendSet& backends,
                                   std::uint64_t seed, DecodeOptions options = {}) {
  return GuidedDecoder(backends, options).decode_episode(ctx, params, guidance, seed);
}

inline DecodeResult best_of_k(const VisualContext& ctx, const GenerationParams& params,
                              const GuidanceConfig& guidance, const BackendSet& backends,
                              std::uint64_t seed, DecodeOptions options = {}) {
  return GuidedDecoder(backends, options).best_of_k(ctx, params, guidance, seed);
}

// ============================================================================
// Trace serialization (one JSON object per iteration, one per line)
// ============================================================================

inline nlohmann::json to_json(const IterationRecord& record, const std::string& image_ref = {}) {
  nlohmann::json texts = nlohmann::json::array();
  nlohmann::json finished = nlohmann::json::array();
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& c : record.candidates) {
    texts.push_back(c.text);
    finished.push_back(c.finished);
    tokens.push_back(c.token_count);
  }
  nlohmann::json doc;
  if (!image_ref.empty()) doc["image_ref"] = image_ref;
  doc["iteration"] = record.iteration;
  doc["candidates"] = texts;
  doc["finished"] = finished;
  doc["token_count"] = tokens;
  doc["r_hal"] = record.r_hal;
  doc["r_rec"] = record.r_rec;
  doc["combined"] = record.combined;
  doc["selected"] = record.selected;
  return doc;
}

inline void write_trace(std::ostream& out, const EpisodeTrace& trace, const std::string& image_ref = {}) {
  for (const auto& record : trace.iterations) out << to_json(record, image_ref).dump() << '\n';
}

/// Canonical byte form of a result; equal results serialize identically.
inline std::string serialize(const DecodeResult& result) {
  std::ostringstream out;
  nlohmann::json header = {{"final_text", result.final_text},
                           {"termination", std::string(to_string(result.termination))},
                           {"seed", result.trace.seed},
                           {"total_generated_tokens", result.trace.total_generated_tokens},
                           {"total_backend_calls", result.trace.total_backend_calls}};
  out << header.dump() << '\n';
  write_trace(out, result.trace);
  return out.str();
}

}  // namespace mrgd
