// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Reward algebra for guided decoding.
 *
 *  - combine_scores:   s = w * r_hal + (1 - w) * r_rec
 *  - recall_reward:    fraction of reference objects covered by predicted
 *                      objects, matched by embedding similarity above tau
 *  - minmax_normalize: rescale a candidate set's scores onto [0, 1)
 *  - rm_pairwise_loss: Bradley-Terry preference loss plus the two squared
 *                      anchors pulling chosen -> 1 and rejected -> 0
 */

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mrgd/error.hpp"

namespace mrgd {

struct RewardScore {
  double r_hal = 0.0;
  double r_rec = 0.0;
  double combined = 0.0;

  friend bool operator==(const RewardScore&, const RewardScore&) = default;
};

struct ObjectMention {
  std::string surface;
  std::string canonical;

  friend bool operator==(const ObjectMention&, const ObjectMention&) = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Anything that maps labels to unit-norm vectors, one per label, in order.
template <class P>
concept EmbeddingProvider = requires(const P& p, std::span<const std::string> labels) {
  { p.embed(labels) } -> std::convertible_to<std::vector<EmbeddingVector>>;
};

struct PreferencePair {
  double r_plus = 0.0;
  double r_minus = 0.0;
};

// ----------------------------------------------------------------------------

inline double combine_scores(double r_hal, double r_rec, double w) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(r_hal)) throw Error(ErrorCode::OutOfRange, "r_hal");
  if (!in_unit(r_rec)) throw Error(ErrorCode::OutOfRange, "r_rec");
  if (!in_unit(w)) throw Error(ErrorCode::OutOfRange, "w");
  return w * r_hal + (1.0 - w) * r_rec;
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) sum += a.values[i] * b.values[i];
  return sum;
}

inline double max_similarity(const EmbeddingVector& pred, std::span<const EmbeddingVector> refs) {
  if (refs.empty()) throw Error(ErrorCode::EmptyReferences, "max_similarity");
  double best = dot(pred, refs.front());
  for (const auto& ref : refs.subspan(1)) best = std::max(best, dot(pred, ref));
  return best;
}

/// Recall estimate from already-embedded objects. `preds` must already be
/// deduplicated by label; n is refs.size().
inline double recall_from_embeddings(std::span<const EmbeddingVector> refs,
                                     std::span<const EmbeddingVector> preds, double tau) {
  if (refs.empty()) return 1.0;
  std::size_t true_positives = 0;
  for (const auto& p : preds) {
    if (max_similarity(p, refs) > tau) ++true_positives;
  }
  double ratio = static_cast<double>(true_positives) / static_cast<double>(refs.size());
  return std::clamp(ratio, 0.0, 1.0);
}

/// Drops repeated canonical labels, keeping first occurrences.
inline std::vector<ObjectMention> dedup_by_canonical(std::span<const ObjectMention> mentions) {
  std::vector<ObjectMention> out;
  std::unordered_set<std::string> seen;
  for (const auto& m : mentions) {
    if (seen.insert(m.canonical).second) out.push_back(m);
  }
  return out;
}

inline std::vector<std::string> canonical_labels(std::span<const ObjectMention> mentions) {
  std::vector<std::string> labels;
  labels.reserve(mentions.size());
  for (const auto& m : mentions) labels.push_back(m.canonical);
  return labels;
}

/// r_rec. Returns 1.0 for an empty reference set; duplicate predictions
/// count once; a prediction is a true positive only if its best similarity
/// is strictly greater than tau.
template <EmbeddingProvider Embedder>
double recall_reward(std::span<const ObjectMention> ref_objects,
                     std::span<const ObjectMention> pred_objects, const Embedder& embed,
                     double tau) {
  if (ref_objects.empty()) return 1.0;
  auto preds = dedup_by_canonical(pred_objects);
  if (preds.empty()) return 0.0;

  auto ref_vectors = embed.embed(canonical_labels(ref_objects));
  auto pred_vectors = embed.embed(canonical_labels(preds));

  std::size_t true_positives = 0;
  for (const auto& p : pred_vectors) {
    if (max_similarity(p, ref_vectors) > tau) ++true_positives;
  }
  double ratio = static_cast<double>(true_positives) / static_cast<double>(ref_objects.size());
  return std::clamp(ratio, 0.0, 1.0);
}

/// (s - min) / (max - min + epsilon) over the candidate set.
inline std::vector<double> minmax_normalize(std::span<const double> scores, double epsilon) {
  std::vector<double> out;
  if (scores.empty()) return out;
  auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo + epsilon;
  out.reserve(scores.size());
  for (double s : scores) out.push_back((s - lo) / range);
  return out;
}

/// -log(sigmoid(margin)), evaluated without overflow for large |margin|.
inline double bradley_terry_nll(double margin) {
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

inline double rm_pairwise_loss(const PreferencePair& pair) {
  const double anchor_plus = (pair.r_plus - 1.0) * (pair.r_plus - 1.0);
  const double anchor_minus = pair.r_minus * pair.r_minus;
  return bradley_terry_nll(pair.r_plus - pair.r_minus) + anchor_plus + anchor_minus;
}

}  // namespace mrgd
