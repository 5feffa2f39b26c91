// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * File-backed backends. All of them are pure functions of (file contents,
 * request) and ignore seeds.
 *
 * Tree file (JSON):
 *   {"format": "mrgd-tree/1",
 *    "default_score": 0.5,                       // optional
 *    "nodes":  {"<prefix>": [candidate, ...], ...},
 *    "images": {"<image_ref>": {"<prefix>": [candidate, ...]}}}   // optional
 *   candidate = {"text": "...", "finished": bool?, "token_count": int?, "score": real?}
 *   A text ending in "<EOS>" is finished; the marker is stripped.
 *
 * Score file (JSON):
 *   {"format": "mrgd-scores/1", "default": real?, "scores": {"<response>": real},
 *    "images": {"<image_ref>": {"<response>": real}}}
 *
 * Embedding table (text): one "label v1 v2 ... vd" row per line, '#' comments.
 *
 * Annotation file (JSON):
 *   {"format": "mrgd-annotations/1", "lexicon": "relative/or/absolute.txt"?,
 *    "images": [{"image_ref": "...", "objects": ["cat", ...]}, ...]}
 */

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgd/backends/interfaces.hpp"
#include "mrgd/segmenter.hpp"

namespace mrgd {

inline constexpr std::string_view kEosMarker = "<EOS>";

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Parse, "cannot read '" + path + "'");
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw Error(ErrorCode::Parse, "'" + path + "' is not valid JSON");
  return doc;
}

[[noreturn]] inline void parse_fail(const std::string& source, const std::string& why) {
  throw Error(ErrorCode::Parse, source + ": " + why);
}

/// Runs a JSON-walking parser, reporting nlohmann type errors as PARSE.
template <class Fn>
auto json_guard(const std::string& source, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    parse_fail(source, e.what());
  }
}

}  // namespace detail

// ============================================================================
// Fixture tree generator
// ============================================================================

class FixtureTree final : public Generator {
 public:
  struct Entry {
    Candidate candidate;
    std::optional<double> score;
  };
  using Nodes = std::map<std::string, std::vector<Entry>>;

  FixtureTree(Nodes nodes, std::map<std::string, Nodes> per_image = {},
              std::optional<double> default_score = std::nullopt)
      : nodes_(std::move(nodes)), per_image_(std::move(per_image)), default_score_(default_score) {}

  static FixtureTree from_json(const nlohmann::json& doc, const std::string& source = "tree") {
    return detail::json_guard(source, [&] {
      if (!doc.is_object() || doc.value("format", "") != "mrgd-tree/1")
        detail::parse_fail(source, "expected format 'mrgd-tree/1'");
      auto parse_nodes = [&](const nlohmann::json& obj) {
        if (!obj.is_object()) detail::parse_fail(source, "'nodes' must be an object");
        Nodes nodes;
        for (const auto& [prefix, list] : obj.items()) {
          if (!list.is_array()) detail::parse_fail(source, "node '" + prefix + "' must be an array");
          auto& entries = nodes[prefix];
          for (const auto& rec : list) entries.push_back(parse_entry(rec, source));
        }
        return nodes;
      };
      Nodes nodes = doc.contains("nodes") ? parse_nodes(doc["nodes"]) : Nodes{};
      std::map<std::string, Nodes> per_image;
      if (doc.contains("images")) {
        if (!doc["images"].is_object()) detail::parse_fail(source, "'images' must be an object");
        for (const auto& [image, obj] : doc["images"].items()) per_image[image] = parse_nodes(obj);
      }
      std::optional<double> default_score;
      if (doc.contains("default_score")) default_score = doc["default_score"].get<double>();
      return FixtureTree(std::move(nodes), std::move(per_image), default_score);
    });
  }

  static FixtureTree load(const std::string& path) {
    return from_json(detail::load_json_file(path), path);
  }

  /// Sentence-bounded requests return the first num_samples candidates listed
  /// for the exact prefix. to_eos requests complete each of those candidates
  /// by following the first-listed child until a finished record.
  GenerateResponse generate(const GenerateRequest& req) const override {
    const auto& entries = lookup(req.image_ref, req.prefix);
    GenerateResponse resp;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(req.num_samples, 0)), entries.size());
    for (std::size_t i = 0; i < n; ++i) {
      Candidate c = entries[i].candidate;
      if (req.stop.is_to_eos()) c = complete(req.image_ref, req.prefix, c);
      resp.candidates.push_back(std::move(c));
    }
    if (static_cast<int>(n) < req.num_samples) {
      resp.reason = "fixture lists " + std::to_string(entries.size()) + " candidates for this prefix";
    }
    return resp;
  }

  const Nodes& nodes() const { return nodes_; }
  const std::map<std::string, Nodes>& per_image() const { return per_image_; }
  std::optional<double> default_score() const { return default_score_; }

  static Candidate make_candidate(std::string text, std::optional<bool> finished = std::nullopt,
                                  std::optional<int> token_count = std::nullopt) {
    Candidate c;
    bool marker = text.size() >= kEosMarker.size() &&
                  std::string_view(text).substr(text.size() - kEosMarker.size()) == kEosMarker;
    if (marker) text.resize(text.size() - kEosMarker.size());
    c.finished = finished.value_or(marker);
    c.text = std::move(text);
    c.token_count = token_count.value_or(std::max(1, count_words(c.text) + (c.finished ? 1 : 0)));
    return c;
  }

 private:
  static Entry parse_entry(const nlohmann::json& rec, const std::string& source) {
    if (rec.is_string()) return {make_candidate(rec.get<std::string>()), std::nullopt};
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
      detail::parse_fail(source, "candidate records need a string 'text'");
    std::optional<bool> finished;
    std::optional<int> tokens;
    std::optional<double> score;
    if (rec.contains("finished")) finished = rec["finished"].get<bool>();
    if (rec.contains("token_count")) tokens = rec["token_count"].get<int>();
    if (rec.contains("score")) {
      score = rec["score"].get<double>();
      if (!(*score >= 0.0 && *score <= 1.0)) detail::parse_fail(source, "score outside [0,1]");
    }
    return {make_candidate(rec["text"].get<std::string>(), finished, tokens), score};
  }

  const std::vector<Entry>* find(const std::string& image_ref, const std::string& prefix) const {
    if (auto img = per_image_.find(image_ref); img != per_image_.end()) {
      if (auto it = img->second.find(prefix); it != img->second.end()) return &it->second;
    }
    if (auto it = nodes_.find(prefix); it != nodes_.end()) return &it->second;
    return nullptr;
  }

  const std::vector<Entry>& lookup(const std::string& image_ref, const std::string& prefix) const {
    if (const auto* entries = find(image_ref, prefix)) return *entries;
    throw Error(ErrorCode::UnknownPrefix, "'" + prefix + "'");
  }

  Candidate complete(const std::string& image_ref, const std::string& prefix, Candidate c) const {
    // Bounded walk; a cyclic tree would otherwise never terminate.
    for (std::size_t depth = 0; !c.finished && depth < 4096; ++depth) {
      const auto* next = find(image_ref, prefix + c.text);
      if (next == nullptr || next->empty()) break;
      const auto& child = next->front().candidate;
      c.text += child.text;
      c.token_count += child.token_count;
      c.finished = child.finished;
    }
    return c;
  }

  Nodes nodes_;
  std::map<std::string, Nodes> per_image_;
  std::optional<double> default_score_;
};

// ============================================================================
// Fixture scorer
// ============================================================================

/// r_hal looked up by exact response text (per image first, then global),
/// falling back to a default when one is configured.
class FixtureScorer final : public HallucinationScorer {
 public:
  using Table = std::unordered_map<std::string, double>;

  FixtureScorer(Table global, std::unordered_map<std::string, Table> per_image = {},
                std::optional<double> fallback = std::nullopt)
      : global_(std::move(global)), per_image_(std::move(per_image)), fallback_(fallback) {}

  /// Score overrides embedded in a tree are keyed by prefix + candidate text.
  static FixtureScorer from_tree(const FixtureTree& tree) {
    auto collect = [](const FixtureTree::Nodes& nodes) {
      Table table;
      for (const auto& [prefix, entries] : nodes) {
        for (const auto& e : entries) {
          if (e.score) table[prefix + e.candidate.text] = *e.score;
        }
      }
      return table;
    };
    std::unordered_map<std::string, Table> per_image;
    for (const auto& [image, nodes] : tree.per_image()) per_image[image] = collect(nodes);
    return FixtureScorer(collect(tree.nodes()), std::move(per_image), tree.default_score());
  }

  static FixtureScorer from_json(const nlohmann::json& doc, const std::string& source = "scores") {
    return detail::json_guard(source, [&] {
      if (doc.is_object() && doc.value("format", "") == "mrgd-tree/1") {
        return from_tree(FixtureTree::from_json(doc, source));
      }
      if (!doc.is_object() || doc.value("format", "") != "mrgd-scores/1")
        detail::parse_fail(source, "expected format 'mrgd-scores/1' or 'mrgd-tree/1'");
      auto parse_table = [&](const nlohmann::json& obj) {
        Table table;
        for (const auto& [text, value] : obj.items()) {
          double s = value.get<double>();
          if (!(s >= 0.0 && s <= 1.0)) detail::parse_fail(source, "score outside [0,1]");
          table[text] = s;
        }
        return table;
      };
      Table global = doc.contains("scores") ? parse_table(doc["scores"]) : Table{};
      std::unordered_map<std::string, Table> per_image;
      if (doc.contains("images")) {
        for (const auto& [image, obj] : doc["images"].items()) per_image[image] = parse_table(obj);
      }
      std::optional<double> fallback;
      if (doc.contains("default")) {
        fallback = doc["default"].get<double>();
        if (!(*fallback >= 0.0 && *fallback <= 1.0)) detail::parse_fail(source, "default outside [0,1]");
      }
      return FixtureScorer(std::move(global), std::move(per_image), fallback);
    });
  }

  static FixtureScorer load(const std::string& path) {
    return from_json(detail::load_json_file(path), path);
  }

  double score(const ScoreRequest& req) const override {
    if (auto img = per_image_.find(req.image_ref); img != per_image_.end()) {
      if (auto it = img->second.find(req.response); it != img->second.end()) return it->second;
    }
    if (auto it = global_.find(req.response); it != global_.end()) return it->second;
    if (fallback_) return *fallback_;
    throw Error(ErrorCode::UnknownPrefix, "no fixture score for '" + req.response + "'");
  }

 private:
  Table global_;
  std::unordered_map<std::string, Table> per_image_;
  std::optional<double> fallback_;
};

// ============================================================================
// Fixture embeddings
// ============================================================================

class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::unordered_map<std::string, EmbeddingVector> table)
      : table_(std::move(table)) {}

  /// Builds orthogonal unit vectors, one per label, in the given order.
  static TableEmbedder one_hot(const std::vector<std::string>& labels) {
    std::unordered_map<std::string, EmbeddingVector> table;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      EmbeddingVector v{std::vector<double>(labels.size(), 0.0)};
      v.values[i] = 1.0;
      table[labels[i]] = std::move(v);
    }
    return TableEmbedder(std::move(table));
  }

  static TableEmbedder parse(std::istream& in, const std::string& source = "embeddings") {
    std::unordered_map<std::string, EmbeddingVector> table;
    std::string line;
    int line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream row(line);
      std::string label;
      if (!(row >> label)) continue;
      EmbeddingVector v;
      std::string field;
      while (row >> field) {
        try {
          std::size_t used = 0;
          v.values.push_back(std::stod(field, &used));
          if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
          detail::parse_fail(source + ":" + std::to_string(line_no), "bad number '" + field + "'");
        }
      }
      if (v.values.empty()) detail::parse_fail(source + ":" + std::to_string(line_no), "empty vector");
      if (dim == 0) dim = v.dimension();
      if (v.dimension() != dim) detail::parse_fail(source + ":" + std::to_string(line_no), "dimension mismatch");
      double norm2 = 0.0;
      for (double x : v.values) norm2 += x * x;
      if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6)
        detail::parse_fail(source + ":" + std::to_string(line_no), "vector is not unit norm");
      table[label] = std::move(v);
    }
    return TableEmbedder(std::move(table));
  }

  static TableEmbedder load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot read '" + path + "'");
    return parse(in, path);
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> labels) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(labels.size());
    for (const auto& label : labels) {
      auto it = table_.find(label);
      if (it == table_.end()) throw Error(ErrorCode::EmbeddingUnavailable, label);
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
};

// ============================================================================
// Annotations and fixture detector
// ============================================================================

struct AnnotationRecord {
  std::string image_ref;
  std::set<std::string> ground_truth_objects;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct AnnotationSet {
  std::vector<AnnotationRecord> records;
  /// Lexicon path named by the file, resolved against the file's directory.
  std::optional<std::string> lexicon_path;

  const AnnotationRecord* find(const std::string& image_ref) const {
    for (const auto& r : records) {
      if (r.image_ref == image_ref) return &r;
    }
    return nullptr;
  }

  /// Folds every label onto its canonical form; unknown labels are kept
  /// lowercased.
  AnnotationSet canonicalized(const Lexicon& lexicon) const {
    AnnotationSet out{{}, lexicon_path};
    for (const auto& r : records) {
      AnnotationRecord c{r.image_ref, {}};
      for (const auto& label : r.ground_truth_objects) {
        auto canon = canonicalize(label, lexicon);
        c.ground_truth_objects.insert(canon ? *canon : detail::to_lower(label));
      }
      out.records.push_back(std::move(c));
    }
    return out;
  }

  static AnnotationSet from_json(const nlohmann::json& doc, const std::string& source = "annotations",
                                 const std::filesystem::path& base_dir = {}) {
    return detail::json_guard(source, [&] {
      if (!doc.is_object() || doc.value("format", "") != "mrgd-annotations/1")
        detail::parse_fail(source, "expected format 'mrgd-annotations/1'");
      AnnotationSet set;
      if (doc.contains("lexicon")) {
        std::filesystem::path p = doc["lexicon"].get<std::string>();
        set.lexicon_path = (p.is_absolute() ? p : base_dir / p).string();
      }
      if (!doc.contains("images") || !doc["images"].is_array())
        detail::parse_fail(source, "'images' must be an array");
      for (const auto& item : doc["images"]) {
        if (!item.is_object() || !item.contains("image_ref") || !item.contains("objects"))
          detail::parse_fail(source, "image records need 'image_ref' and 'objects'");
        AnnotationRecord r;
        r.image_ref = item["image_ref"].get<std::string>();
        for (const auto& label : item["objects"]) {
          auto s = label.get<std::string>();
          if (s.empty()) detail::parse_fail(source, "empty object label");
          r.ground_truth_objects.insert(s);
        }
        set.records.push_back(std::move(r));
      }
      return set;
    });
  }

  static AnnotationSet load(const std::string& path) {
    return from_json(detail::load_json_file(path), path, std::filesystem::path(path).parent_path());
  }
};

class FixtureDetector final : public Detector {
 public:
  explicit FixtureDetector(AnnotationSet annotations) : annotations_(std::move(annotations)) {}

  std::vector<Detection> detect(const std::string& image_ref) const override {
    const auto* record = annotations_.find(image_ref);
    if (record == nullptr) throw Error(ErrorCode::UnknownImage, image_ref);
    std::vector<Detection> out;
    for (const auto& label : record->ground_truth_objects) out.push_back({label, 1.0});
    return out;
  }

 private:
  AnnotationSet annotations_;
};

}  // namespace mrgd
