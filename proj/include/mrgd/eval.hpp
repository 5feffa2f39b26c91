// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Caption-level object metrics, the benchmark runner and the (w, k, T)
 * sweep harness.
 *
 *   C_i    = hallucinated mentions / all mentions          (0 with no mentions)
 *   C_s    = captions with a hallucinated mention / captions
 *   recall = ground-truth objects mentioned / ground-truth objects (1 if none)
 *
 * All three are micro-averaged over the corpus. Mentions are per-caption
 * sets of canonical labels. Accumulation is over integer counts, so any
 * split or ordering of the corpus gives identical results.
 */

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgd/backends/fixture.hpp"
#include "mrgd/decoder.hpp"
#include "mrgd/extraction.hpp"

namespace mrgd {

struct CaptionEval {
  std::set<std::string> mentions;
  std::set<std::string> ground_truth;
  int words = 0;
};

struct ComputeProxy {
  std::int64_t total_generated_tokens = 0;
  std::int64_t total_backend_calls = 0;

  friend bool operator==(const ComputeProxy&, const ComputeProxy&) = default;
};

struct MetricsReport {
  double c_instance = 0.0;
  double c_sentence = 0.0;
  double recall = 1.0;
  double avg_length = 0.0;
  std::int64_t captions_evaluated = 0;
  ComputeProxy compute_proxy;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

class MetricsAccumulator {
 public:
  void add(const CaptionEval& caption) {
    std::int64_t hallucinated = 0;
    for (const auto& m : caption.mentions) {
      if (caption.ground_truth.count(m) == 0) ++hallucinated;
    }
    mentions_ += static_cast<std::int64_t>(caption.mentions.size());
    hallucinated_ += hallucinated;
    captions_ += 1;
    captions_with_hallucination_ += hallucinated > 0 ? 1 : 0;
    ground_truth_ += static_cast<std::int64_t>(caption.ground_truth.size());
    covered_ += static_cast<std::int64_t>(caption.mentions.size()) - hallucinated;
    words_ += caption.words;
  }

  void merge(const MetricsAccumulator& other) {
    mentions_ += other.mentions_;
    hallucinated_ += other.hallucinated_;
    captions_ += other.captions_;
    captions_with_hallucination_ += other.captions_with_hallucination_;
    ground_truth_ += other.ground_truth_;
    covered_ += other.covered_;
    words_ += other.words_;
  }

  double c_instance() const { return ratio(hallucinated_, mentions_, 0.0); }
  double c_sentence() const { return ratio(captions_with_hallucination_, captions_, 0.0); }
  double recall() const { return ratio(covered_, ground_truth_, 1.0); }
  double avg_length() const { return ratio(words_, captions_, 0.0); }
  std::int64_t captions() const { return captions_; }
  std::int64_t mentions() const { return mentions_; }

  MetricsReport report(ComputeProxy proxy = {}) const {
    return {c_instance(), c_sentence(), recall(), avg_length(), captions_, proxy};
  }

 private:
  static double ratio(std::int64_t num, std::int64_t den, double empty) {
    return den == 0 ? empty : static_cast<double>(num) / static_cast<double>(den);
  }

  std::int64_t mentions_ = 0;
  std::int64_t hallucinated_ = 0;
  std::int64_t captions_ = 0;
  std::int64_t captions_with_hallucination_ = 0;
  std::int64_t ground_truth_ = 0;
  std::int64_t covered_ = 0;
  std::int64_t words_ = 0;
};

inline MetricsAccumulator accumulate(std::span<const CaptionEval> captions) {
  MetricsAccumulator acc;
  for (const auto& c : captions) acc.add(c);
  return acc;
}

inline double chair_instance(std::span<const CaptionEval> captions) { return accumulate(captions).c_instance(); }
inline double chair_sentence(std::span<const CaptionEval> captions) { return accumulate(captions).c_sentence(); }
inline double recall_metric(std::span<const CaptionEval> captions) { return accumulate(captions).recall(); }

inline CaptionEval evaluate_caption(std::string_view caption, const AnnotationRecord& annotation,
                                    const ObjectExtractor& extractor) {
  CaptionEval eval;
  for (const auto& m : extractor.extract(caption)) eval.mentions.insert(m.canonical);
  eval.ground_truth = annotation.ground_truth_objects;
  eval.words = count_words(caption);
  return eval;
}

// ============================================================================
// Caption files: one {"image_ref": ..., "caption": ...} object per line
// ============================================================================

struct CaptionRecord {
  std::string image_ref;
  std::string caption;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

inline std::vector<CaptionRecord> read_captions(std::istream& in, const std::string& source = "captions") {
  std::vector<CaptionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("image_ref") || !doc.contains("caption") ||
        !doc["image_ref"].is_string() || !doc["caption"].is_string()) {
      throw Error(ErrorCode::Parse, source + ": malformed record on line " + std::to_string(line_no));
    }
    out.push_back({doc["image_ref"].get<std::string>(), doc["caption"].get<std::string>()});
  }
  return out;
}

inline std::vector<CaptionRecord> load_captions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Parse, "cannot read '" + path + "'");
  return read_captions(in, path);
}

inline void write_captions(std::ostream& out, std::span<const CaptionRecord> captions) {
  for (const auto& c : captions) {
    out << nlohmann::json{{"image_ref", c.image_ref}, {"caption", c.caption}}.dump() << '\n';
  }
}

/// Scores existing captions against annotations (which must already be
/// canonicalized with the same lexicon the extractor uses).
inline MetricsReport evaluate_captions(std::span<const CaptionRecord> captions, const AnnotationSet& annotations,
                                       const ObjectExtractor& extractor) {
  MetricsAccumulator acc;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto* record = annotations.find(captions[i].image_ref);
    if (record == nullptr) {
      throw Error(ErrorCode::Parse, "caption " + std::to_string(i + 1) + ": no annotation for image '" +
                                        captions[i].image_ref + "'");
    }
    acc.add(evaluate_caption(captions[i].caption, *record, extractor));
  }
  return acc.report();
}

// ============================================================================
// Benchmark runner
// ============================================================================

struct DatasetItem {
  VisualContext context;
  AnnotationRecord annotation;
};

inline std::vector<DatasetItem> make_dataset(const AnnotationSet& annotations, const std::string& instruction) {
  std::vector<DatasetItem> items;
  items.reserve(annotations.records.size());
  for (const auto& r : annotations.records) items.push_back({{r.image_ref, instruction}, r});
  return items;
}

struct BenchmarkOptions {
  DecodeOptions decode;
  /// Episodes decoded concurrently; results are gathered in dataset order.
  unsigned threads = 1;
  /// Extractor used for metrics; defaults to the backend set's extractor.
  std::shared_ptr<const ObjectExtractor> metrics_extractor;
};

struct BenchmarkRun {
  MetricsReport report;
  std::vector<CaptionEval> evaluations;
  std::vector<DecodeResult> results;
};

inline std::uint64_t episode_seed(std::uint64_t base_seed, std::size_t index) {
  return SeedStream(base_seed).split(static_cast<std::uint64_t>(index)).seed();
}

/// Decodes every item (episode i uses episode_seed(seed, i)), extracts
/// mentions and reduces the metrics and compute proxy.
inline BenchmarkRun run_benchmark_detailed(std::span<const DatasetItem> dataset, const GenerationParams& params,
                                           const GuidanceConfig& guidance, const BackendSet& backends,
                                           std::uint64_t seed, const BenchmarkOptions& options = {}) {
  validate_generation_params(params);
  validate_guidance_config(guidance);
  auto extractor = options.metrics_extractor ? options.metrics_extractor : backends.extractor;
  if (!extractor) throw Error(ErrorCode::Parse, "no extractor configured for metrics");
  const GuidedDecoder decoder(backends, options.decode);

  const std::size_t n = dataset.size();
  std::vector<std::optional<DecodeResult>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = decoder.decode_episode(dataset[i].context, params, guidance, episode_seed(seed, i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  BenchmarkRun run;
  MetricsAccumulator acc;
  ComputeProxy proxy;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        throw Error(e.code(), dataset[i].context.image_ref + ": " + e.detail(), e.cause());
      }
    }
    auto& result = *results[i];
    auto eval = evaluate_caption(result.final_text, dataset[i].annotation, *extractor);
    acc.add(eval);
    proxy.total_generated_tokens += result.trace.total_generated_tokens;
    proxy.total_backend_calls += result.trace.total_backend_calls;
    run.evaluations.push_back(std::move(eval));
    run.results.push_back(std::move(result));
  }
  run.report = acc.report(proxy);
  return run;
}

inline MetricsReport run_benchmark(std::span<const DatasetItem> dataset, const GenerationParams& params,
                                   const GuidanceConfig& guidance, const BackendSet& backends,
                                   std::uint64_t seed, const BenchmarkOptions& options = {}) {
  return run_benchmark_detailed(dataset, params, guidance, backends, seed, options).report;
}

// ============================================================================
// Sweeps
// ============================================================================

struct SweepGrid {
  std::vector<double> w;
  std::vector<int> k;
  std::vector<SentencePeriod> T;

  std::size_t size() const { return w.size() * k.size() * T.size(); }
};

struct SweepRow {
  double w = 0.0;
  int k = 1;
  SentencePeriod T = SentencePeriod::every(1);
  MetricsReport metrics;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// One benchmark per grid cell, in w-major, then k, then T order. Every cell
/// reuses the same base seed, so cells differ only in their settings.
/// `base_params` and `base_guidance` supply the non-swept fields.
inline std::vector<SweepRow> run_sweep(
    std::span<const DatasetItem> dataset, const SweepGrid& grid, const GenerationParams& base_params,
    const GuidanceConfig& base_guidance, const BackendSet& backends, std::uint64_t seed,
    const BenchmarkOptions& options = {},
    const std::function<void(std::size_t, std::size_t, const SweepRow&)>& progress = {}) {
  if (grid.size() == 0) throw Error(ErrorCode::OutOfRange, "grid");
  // Validate every cell before running any of them.
  for (double w : grid.w) validate_guidance_config({w, base_guidance.tau, base_guidance.hal_normalization, base_guidance.hal_scope});
  for (int k : grid.k) {
    for (const auto& T : grid.T) {
      GenerationParams p = base_params;
      p.k = k;
      p.T = T;
      validate_generation_params(p);
    }
  }

  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double w : grid.w) {
    for (int k : grid.k) {
      for (const auto& T : grid.T) {
        GenerationParams p = base_params;
        p.k = k;
        p.T = T;
        GuidanceConfig g = base_guidance;
        g.w = w;
        rows.push_back({w, k, T, run_benchmark(dataset, p, g, backends, seed, options)});
        if (progress) progress(rows.size(), grid.size(), rows.back());
      }
    }
  }
  return rows;
}

inline constexpr const char* kCsvHeader =
    "w,k,T,c_instance,c_sentence,recall,avg_length,total_generated_tokens,total_backend_calls";

inline std::string format_csv(std::span<const SweepRow> rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%d,%s,%.6f,%.6f,%.6f,%.6f,%lld,%lld\n", r.w, r.k,
                  r.T.to_string().c_str(), r.metrics.c_instance, r.metrics.c_sentence, r.metrics.recall,
                  r.metrics.avg_length, static_cast<long long>(r.metrics.compute_proxy.total_generated_tokens),
                  static_cast<long long>(r.metrics.compute_proxy.total_backend_calls));
    out += buf;
  }
  return out;
}

inline void emit_csv(std::span<const SweepRow> rows, const std::string& path) {
  if (rows.empty()) throw Error(ErrorCode::OutOfRange, "rows");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << format_csv(rows);
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace mrgd
