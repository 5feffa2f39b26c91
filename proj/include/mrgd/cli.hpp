// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * `mrgd` command line. Subcommands: decode, score, metrics, bench, sweep,
 * simulate. Settings resolve as defaults < --config file < flags.
 *
 * Exit codes: 0 success, 1 configuration or parse error, 2 backend or
 * runtime error.
 */

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrgd/backends/factory.hpp"
#include "mrgd/config.hpp"
#include "mrgd/decoder.hpp"
#include "mrgd/eval.hpp"

namespace mrgd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table = {
      {"detail", "Describe this image in detail"},
      {"short", "Describe this image in a few sentences"},
      {"grounded",
       "Describe this image in detail. Provide an accurate and objective description, focusing on "
       "verifiable visual elements such as colors, textures, shapes, and compositions. Avoid making "
       "assumptions, inferences, or introducing information not present in the image"},
  };
  return table;
}

inline std::string preset_instruction(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw Error(ErrorCode::Parse, "unknown preset '" + name + "'");
  return it->second;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string_view rest(text);
  while (true) {
    auto comma = rest.find(',');
    auto item = mrgd::detail::trim(rest.substr(0, comma));
    if (item.empty()) throw Error(ErrorCode::Parse, "empty item in list '" + text + "'");
    out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

/// Flags shared by every subcommand. Values stay as text and go through the
/// same parser as the config file.
struct EngineFlags {
  std::string config;
  std::map<std::string, std::string> values;
  bool parallel_scoring = false;

  void attach(CLI::App& app, bool list_valued) {
    app.add_option("--config", config, "key = value configuration file");
    const char* grid = list_valued ? " (comma-separated list)" : "";
    add(app, "--seed", "seed", "base seed");
    add(app, "--w", "w", std::string("guidance weight") + grid);
    add(app, "--tau", "tau", "recall similarity threshold");
    add(app, "--k", "k", std::string("candidates per round") + grid);
    add(app, "--T", "T", std::string("sentences per round, or inf") + grid);
    add(app, "--temperature", "temperature", "sampling temperature");
    add(app, "--max-total-tokens", "max_total_tokens", "response token cap");
    add(app, "--max-iterations", "max_iterations", "round cap");
    add(app, "--hal-normalization", "hal_normalization", "NONE or MINMAX");
    add(app, "--hal-scope", "hal_scope", "FULL_PREFIX or LAST_CHUNK");
    add(app, "--backend-generate", "backend_generate", "URL, fixture:PATH or sim:PATH");
    add(app, "--backend-score", "backend_score", "URL, fixture:PATH or sim:PATH");
    add(app, "--backend-detect", "backend_detect", "URL, fixture:PATH or sim:PATH");
    add(app, "--backend-embed", "backend_embed", "URL, fixture:PATH or sim:PATH");
    add(app, "--backend-tag", "backend_tag", "URL, fixture:PATH or sim:PATH");
    add(app, "--lexicon", "lexicon", "lexicon file");
    add(app, "--detect-floor", "detect_floor", "minimum detection confidence");
    add(app, "--threads", "threads", "episodes decoded concurrently");
    app.add_flag("--parallel-scoring", parallel_scoring, "score candidates concurrently");
  }

  void add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }

  /// Defaults, then the config file, then flags. Keys in `skip` are left to
  /// the caller (sweep grids).
  EngineConfig resolve(const std::vector<std::string>& skip = {}) const {
    EngineConfig cfg;
    if (!config.empty()) cfg = load_config(config);
    for (const auto& [key, value] : values) {
      if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
      try {
        apply_setting(cfg, key, value);
      } catch (const Error& e) {
        throw Error(ErrorCode::Parse, "--" + key + ": " + e.detail());
      }
    }
    return cfg;
  }

  std::optional<std::string> value(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

struct InstructionFlags {
  std::string instruction;
  std::string preset = "detail";

  void attach(CLI::App& app) {
    auto* ins = app.add_option("--instruction", instruction, "instruction text");
    app.add_option("--preset", preset, "detail, short or grounded")->excludes(ins);
  }

  std::string resolve() const { return instruction.empty() ? preset_instruction(preset) : instruction; }
};

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << contents;
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

inline void print_report(std::ostream& out, const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "captions_evaluated %lld\nc_instance %.6f\nc_sentence %.6f\nrecall %.6f\navg_length %.6f\n"
                "total_generated_tokens %lld\ntotal_backend_calls %lld\n",
                static_cast<long long>(r.captions_evaluated), r.c_instance, r.c_sentence, r.recall, r.avg_length,
                static_cast<long long>(r.compute_proxy.total_generated_tokens),
                static_cast<long long>(r.compute_proxy.total_backend_calls));
  out << buf;
}

inline std::string report_csv(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "captions_evaluated,c_instance,c_sentence,recall,avg_length,total_generated_tokens,"
                "total_backend_calls\n%lld,%.6f,%.6f,%.6f,%.6f,%lld,%lld\n",
                static_cast<long long>(r.captions_evaluated), r.c_instance, r.c_sentence, r.recall, r.avg_length,
                static_cast<long long>(r.compute_proxy.total_generated_tokens),
                static_cast<long long>(r.compute_proxy.total_backend_calls));
  return buf;
}

inline DecodeOptions decode_options(const EngineConfig& cfg, bool parallel_scoring) {
  DecodeOptions o;
  o.minmax_epsilon = cfg.minmax_epsilon;
  o.parallel_scoring = parallel_scoring;
  return o;
}

/// Annotations for bench/sweep: an explicit file, else whatever the detect
/// backend knows. Labels are folded with the active lexicon.
inline AnnotationSet dataset_annotations(const std::string& path, const BackendFactory& factory,
                                         const Lexicon& lexicon) {
  if (!path.empty()) return AnnotationSet::load(path).canonicalized(lexicon);
  if (factory.annotations()) return factory.annotations()->canonicalized(lexicon);
  throw Error(ErrorCode::Parse, "no dataset: pass --annotations or a fixture/sim detect backend");
}

inline SweepGrid parse_grid(const EngineFlags& flags, const EngineConfig& cfg) {
  SweepGrid grid;
  auto list = [&](const std::string& key, auto convert, auto fallback) {
    using T = decltype(fallback);
    std::vector<T> out;
    if (auto v = flags.value(key)) {
      for (const auto& item : split_list(*v)) {
        EngineConfig probe;
        try {
          apply_setting(probe, key, item);
        } catch (const Error& e) {
          throw Error(ErrorCode::Parse, "--" + key + ": " + e.detail());
        }
        out.push_back(convert(probe));
      }
    } else {
      out.push_back(fallback);
    }
    return out;
  };
  grid.w = list("w", [](const EngineConfig& c) { return c.guidance.w; }, cfg.guidance.w);
  grid.k = list("k", [](const EngineConfig& c) { return c.params.k; }, cfg.params.k);
  grid.T = list("T", [](const EngineConfig& c) { return c.params.T; }, cfg.params.T);
  return grid;
}

}  // namespace detail

/// Runs one invocation. `argv[0]` is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal reward-guided decoding engine", "mrgd"};
  app.require_subcommand(1, 1);

  // decode
  auto* decode = app.add_subcommand("decode", "decode one caption and print it");
  detail::EngineFlags decode_flags;
  detail::InstructionFlags decode_ins;
  std::string decode_image, decode_trace;
  decode_flags.attach(*decode, false);
  decode_ins.attach(*decode);
  decode->add_option("--image", decode_image, "image reference")->required();
  decode->add_option("--trace", decode_trace, "write the per-round trace (JSON lines)");

  // score
  auto* score = app.add_subcommand("score", "score a caption with both rewards");
  detail::EngineFlags score_flags;
  detail::InstructionFlags score_ins;
  std::string score_image, score_caption;
  score_flags.attach(*score, false);
  score_ins.attach(*score);
  score->add_option("--image", score_image, "image reference")->required();
  score->add_option("--caption", score_caption, "caption text")->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "object hallucination metrics for a captions file");
  std::string metrics_captions, metrics_annotations, metrics_lexicon, metrics_out;
  metrics->add_option("--captions", metrics_captions, "captions file (JSON lines)")->required();
  metrics->add_option("--annotations", metrics_annotations, "annotation file")->required();
  metrics->add_option("--lexicon", metrics_lexicon, "lexicon file (defaults to the one the annotations name)");
  metrics->add_option("--out", metrics_out, "also write the report as CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "decode a dataset and report metrics");
  detail::EngineFlags bench_flags;
  detail::InstructionFlags bench_ins;
  std::string bench_annotations, bench_out, bench_trace;
  bench_flags.attach(*bench, false);
  bench_ins.attach(*bench);
  bench->add_option("--annotations", bench_annotations, "annotation file (defaults to the detect fixture)");
  bench->add_option("--out", bench_out, "write captions (JSON lines)");
  bench->add_option("--trace", bench_trace, "write every episode trace (JSON lines)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "benchmark every (w, k, T) cell and write a CSV");
  detail::EngineFlags sweep_flags;
  detail::InstructionFlags sweep_ins;
  std::string sweep_annotations, sweep_out;
  sweep_flags.attach(*sweep, true);
  sweep_ins.attach(*sweep);
  sweep->add_option("--annotations", sweep_annotations, "annotation file (defaults to the detect fixture)");
  sweep->add_option("--out", sweep_out, "CSV output path")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "sweep against the simulated world");
  detail::EngineFlags sim_flags;
  detail::InstructionFlags sim_ins;
  std::string sim_out, sim_world;
  SimWorldConfig world_cfg;
  sim_flags.attach(*simulate, true);
  sim_ins.attach(*simulate);
  simulate->add_option("--out", sim_out, "CSV output path")->required();
  auto* world_opt = simulate->add_option("--world", sim_world, "world file (mrgd-sim/1)");
  simulate->add_option("--world-seed", world_cfg.seed, "world seed")->excludes(world_opt);
  simulate->add_option("--truth-rate", world_cfg.truth_rate, "probability a sampled object is real")->excludes(world_opt);
  simulate->add_option("--episodes", world_cfg.episodes, "number of images")->excludes(world_opt);
  simulate->add_option("--objects-per-image", world_cfg.objects_per_image, "ground-truth objects per image")
      ->excludes(world_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (decode->parsed()) {
      auto cfg = decode_flags.resolve();
      validate_engine_config(cfg);
      BackendFactory factory;
      GuidedDecoder decoder(factory.build(cfg), detail::decode_options(cfg, decode_flags.parallel_scoring));
      auto result = decoder.decode_episode({decode_image, decode_ins.resolve()}, cfg.params, cfg.guidance, cfg.seed);
      if (!decode_trace.empty()) {
        std::ostringstream trace;
        write_trace(trace, result.trace, decode_image);
        detail::write_file(decode_trace, trace.str());
      }
      out << result.final_text << '\n';
      return kExitOk;
    }

    if (score->parsed()) {
      auto cfg = score_flags.resolve();
      validate_engine_config(cfg);
      BackendFactory factory;
      GuidedDecoder decoder(factory.build(cfg), detail::decode_options(cfg, false));
      auto s = decoder.score_response({score_image, score_ins.resolve()}, score_caption, cfg.guidance);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "r_hal %.6f\nr_rec %.6f\ncombined %.6f\n", s.r_hal.value_or(0.0),
                    s.r_rec.value_or(0.0), s.combined);
      out << buf;
      return kExitOk;
    }

    if (metrics->parsed()) {
      auto raw = AnnotationSet::load(metrics_annotations);
      Lexicon lexicon;
      if (!metrics_lexicon.empty()) lexicon = Lexicon::load(metrics_lexicon);
      else if (raw.lexicon_path) lexicon = Lexicon::load(*raw.lexicon_path);
      auto annotations = raw.canonicalized(lexicon);
      auto captions = load_captions(metrics_captions);
      LexiconExtractor extractor(lexicon);
      auto report = evaluate_captions(captions, annotations, extractor);
      detail::print_report(out, report);
      if (!metrics_out.empty()) detail::write_file(metrics_out, detail::report_csv(report));
      return kExitOk;
    }

    if (bench->parsed()) {
      auto cfg = bench_flags.resolve();
      validate_engine_config(cfg);
      BackendFactory factory;
      auto backends = factory.build(cfg);
      auto annotations = detail::dataset_annotations(bench_annotations, factory, *backends.lexicon);
      auto dataset = make_dataset(annotations, bench_ins.resolve());
      BenchmarkOptions opts{detail::decode_options(cfg, bench_flags.parallel_scoring), cfg.threads, nullptr};
      auto run = run_benchmark_detailed(dataset, cfg.params, cfg.guidance, backends, cfg.seed, opts);
      if (!bench_out.empty()) {
        std::vector<CaptionRecord> captions;
        for (std::size_t i = 0; i < dataset.size(); ++i)
          captions.push_back({dataset[i].context.image_ref, run.results[i].final_text});
        std::ostringstream text;
        write_captions(text, captions);
        detail::write_file(bench_out, text.str());
      }
      if (!bench_trace.empty()) {
        std::ostringstream text;
        for (std::size_t i = 0; i < dataset.size(); ++i)
          write_trace(text, run.results[i].trace, dataset[i].context.image_ref);
        detail::write_file(bench_trace, text.str());
      }
      detail::print_report(out, run.report);
      return kExitOk;
    }

    if (sweep->parsed() || simulate->parsed()) {
      const bool sim = simulate->parsed();
      auto& flags = sim ? sim_flags : sweep_flags;
      const std::string& path = sim ? sim_out : sweep_out;
      auto cfg = flags.resolve({"w", "k", "T"});
      std::shared_ptr<const SimWorld> world;
      if (sim) {
        world = std::make_shared<const SimWorld>(sim_world.empty() ? SimWorld(world_cfg) : SimWorld::load(sim_world));
        for (auto* ep : {&cfg.backends.generate, &cfg.backends.score, &cfg.backends.detect, &cfg.backends.embed})
          *ep = "sim:";
      }
      auto grid = detail::parse_grid(flags, cfg);
      validate_engine_config(cfg);
      BackendFactory factory(world);
      auto backends = factory.build(cfg);
      auto annotations = detail::dataset_annotations(sim ? std::string() : sweep_annotations, factory, *backends.lexicon);
      auto dataset = make_dataset(annotations, (sim ? sim_ins : sweep_ins).resolve());
      BenchmarkOptions opts{detail::decode_options(cfg, flags.parallel_scoring), cfg.threads, nullptr};
      auto progress = [&err](std::size_t done, std::size_t total, const SweepRow& row) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[%zu/%zu] w=%.3f k=%d T=%s c_instance=%.4f recall=%.4f\n", done, total,
                      row.w, row.k, row.T.to_string().c_str(), row.metrics.c_instance, row.metrics.recall);
        err << buf << std::flush;
      };
      try {
        auto rows = run_sweep(dataset, grid, cfg.params, cfg.guidance, backends, cfg.seed, opts, progress);
        emit_csv(rows, path);
      } catch (...) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
        throw;
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_config_error(e.code()) ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace mrgd::cli
