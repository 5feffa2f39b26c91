// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Seeded synthetic world used to exercise guided decoding without models.
 *
 * Each image_ref deterministically owns a ground-truth object set (drawn
 * from the vocabulary), the remaining vocabulary as distractors, and a
 * sentence budget. Captions are sequences of "There is a {label}." sentences
 * where the label is ground truth with probability truth_rate. The
 * hallucination score is the exact object precision of the response, which
 * makes it an oracle stand-in for a trained reward model.
 *
 * World file (JSON):
 *   {"format": "mrgd-sim/1", "seed": 0, "truth_rate": 0.6,
 *    "objects_per_image": 6, "min_sentences": 3, "max_sentences": 6,
 *    "episodes": 200, "vocabulary": ["cat", ...]?}
 */

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgd/backends/fixture.hpp"
#include "mrgd/backends/interfaces.hpp"
#include "mrgd/segmenter.hpp"

namespace mrgd {

struct SimWorldConfig {
  std::uint64_t seed = 0;
  double truth_rate = 0.6;
  int objects_per_image = 6;
  int min_sentences = 3;
  int max_sentences = 6;
  int episodes = 200;
  std::vector<std::string> vocabulary = default_vocabulary();

  static std::vector<std::string> default_vocabulary() {
    return {"person", "bicycle", "car",      "motorcycle", "airplane", "train",    "truck",
            "boat",   "bench",   "bird",     "cat",        "dog",      "horse",    "sheep",
            "cow",    "elephant", "bear",    "zebra",      "giraffe",  "backpack", "umbrella",
            "tie",    "suitcase", "frisbee", "kite",       "skateboard", "bottle", "cup",
            "fork",   "spoon",   "bowl",     "banana",     "apple",    "sandwich", "orange",
            "carrot", "pizza",   "donut",    "cake",       "chair"};
  }
};

struct SimEpisode {
  std::vector<std::string> ground_truth;  // sorted
  std::vector<std::string> distractors;   // sorted, disjoint from ground_truth
  int sentence_budget = 1;
};

namespace detail {
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class SimWorld final : public Generator, public HallucinationScorer, public Detector, public Embedder {
 public:
  explicit SimWorld(SimWorldConfig config)
      : config_(validated(std::move(config))),
        embedder_(TableEmbedder::one_hot(config_.vocabulary)) {
    for (const auto& label : config_.vocabulary) lexicon_.add(label, {label + "s"});
  }

  static SimWorld from_json(const nlohmann::json& doc, const std::string& source = "world") {
    if (!doc.is_object() || doc.value("format", "") != "mrgd-sim/1")
      detail::parse_fail(source, "expected format 'mrgd-sim/1'");
    SimWorldConfig c;
    try {
      c.seed = doc.value("seed", c.seed);
      c.truth_rate = doc.value("truth_rate", c.truth_rate);
      c.objects_per_image = doc.value("objects_per_image", c.objects_per_image);
      c.min_sentences = doc.value("min_sentences", c.min_sentences);
      c.max_sentences = doc.value("max_sentences", c.max_sentences);
      c.episodes = doc.value("episodes", c.episodes);
      if (doc.contains("vocabulary")) c.vocabulary = doc["vocabulary"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      detail::parse_fail(source, e.what());
    }
    return SimWorld(std::move(c));
  }

  static SimWorld load(const std::string& path) {
    return from_json(detail::load_json_file(path), path);
  }

  const SimWorldConfig& config() const { return config_; }
  const Lexicon& lexicon() const { return lexicon_; }

  static std::string image_ref_for(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sim-%04d", index);
    return buf;
  }

  SimEpisode episode(const std::string& image_ref) const {
    SeedStream stream = SeedStream(config_.seed).split(detail::fnv1a(image_ref));
    std::vector<std::string> pool = config_.vocabulary;
    // Partial Fisher-Yates: the first objects_per_image slots become ground truth.
    const auto g = static_cast<std::size_t>(config_.objects_per_image);
    for (std::size_t i = 0; i < g; ++i) {
      std::size_t j = i + stream.index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    SimEpisode ep;
    ep.ground_truth.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(g));
    ep.distractors.assign(pool.begin() + static_cast<std::ptrdiff_t>(g), pool.end());
    std::sort(ep.ground_truth.begin(), ep.ground_truth.end());
    std::sort(ep.distractors.begin(), ep.distractors.end());
    const auto span = static_cast<std::size_t>(config_.max_sentences - config_.min_sentences + 1);
    ep.sentence_budget = config_.min_sentences + static_cast<int>(stream.index(span));
    return ep;
  }

  /// Annotations for images sim-0000 .. sim-(episodes-1).
  AnnotationSet annotations() const {
    AnnotationSet set;
    for (int i = 0; i < config_.episodes; ++i) {
      auto ref = image_ref_for(i);
      auto ep = episode(ref);
      set.records.push_back({ref, {ep.ground_truth.begin(), ep.ground_truth.end()}});
    }
    return set;
  }

  /// Draws one label from `stream`: ground truth with probability truth_rate.
  static std::string draw_label(const SimEpisode& ep, double truth_rate, SeedStream& stream) {
    const double u = stream.uniform();
    const bool truthful = (u < truth_rate && !ep.ground_truth.empty()) || ep.distractors.empty();
    const auto& pool = truthful ? ep.ground_truth : ep.distractors;
    return pool[stream.index(pool.size())];
  }

  static constexpr int kTokensPerSentence = 4;  // "There is a {label}."

  /// Sample j is drawn from SeedStream(req.seed).split(j); samples finish
  /// when the prefix plus generated sentences reach the sentence budget.
  GenerateResponse generate(const GenerateRequest& req) const override {
    const SimEpisode ep = episode(req.image_ref);
    const int already = count_boundaries(req.prefix);
    const int limit = req.stop.is_to_eos() ? ep.sentence_budget : *req.stop.sentence_boundaries;
    GenerateResponse resp;
    for (int j = 0; j < req.num_samples; ++j) {
      SeedStream stream = SeedStream(req.seed).split(static_cast<std::uint64_t>(j));
      Candidate c;
      int produced = 0;
      while (produced < limit && already + produced < ep.sentence_budget) {
        if (!req.prefix.empty() || produced > 0) c.text += ' ';
        c.text += "There is a " + draw_label(ep, config_.truth_rate, stream) + ".";
        ++produced;
      }
      c.finished = already + produced >= ep.sentence_budget;
      c.token_count = produced * kTokensPerSentence + (c.finished ? 1 : 0);
      if (c.token_count > req.max_tokens) truncate_words(c, req.max_tokens);
      resp.candidates.push_back(std::move(c));
    }
    return resp;
  }

  /// Object precision of the response against the image's ground truth;
  /// 1.0 when no object is mentioned.
  double score(const ScoreRequest& req) const override {
    return precision(req.image_ref, req.response);
  }

  double precision(const std::string& image_ref, std::string_view response) const {
    const SimEpisode ep = episode(image_ref);
    auto mentions = extract_object_mentions(response, lexicon_);
    if (mentions.empty()) return 1.0;
    std::size_t correct = 0;
    for (const auto& m : mentions) {
      if (std::binary_search(ep.ground_truth.begin(), ep.ground_truth.end(), m.canonical)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(mentions.size());
  }

  std::vector<Detection> detect(const std::string& image_ref) const override {
    std::vector<Detection> out;
    for (const auto& label : episode(image_ref).ground_truth) out.push_back({label, 1.0});
    return out;
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> labels) const override {
    return embedder_.embed(labels);
  }

 private:
  static SimWorldConfig validated(SimWorldConfig c) {
    if (!(c.truth_rate >= 0.0 && c.truth_rate <= 1.0)) throw Error(ErrorCode::OutOfRange, "truth_rate");
    if (c.vocabulary.empty()) throw Error(ErrorCode::OutOfRange, "vocabulary");
    if (c.objects_per_image < 0 || c.objects_per_image > static_cast<int>(c.vocabulary.size()))
      throw Error(ErrorCode::OutOfRange, "objects_per_image");
    if (c.min_sentences < 1 || c.max_sentences < c.min_sentences)
      throw Error(ErrorCode::OutOfRange, "min_sentences");
    if (c.episodes < 0) throw Error(ErrorCode::OutOfRange, "episodes");
    std::vector<std::string> sorted = c.vocabulary;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error(ErrorCode::OutOfRange, "vocabulary");
    for (const auto& label : c.vocabulary) {
      if (!detail::is_word(label)) throw Error(ErrorCode::OutOfRange, "vocabulary");
    }
    return c;
  }

  static void truncate_words(Candidate& c, int max_tokens) {
    c.text = truncate_to_words(c.text, max_tokens);
    c.finished = false;
    c.token_count = count_words(c.text);
  }

  SimWorldConfig config_;
  TableEmbedder embedder_;
  Lexicon lexicon_;
};

}  // namespace mrgd
