// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Engine configuration file: one `key = value` per line, '#' starts a
 * comment. Keys:
 *
 *   w tau k T temperature max_total_tokens max_iterations
 *   hal_normalization hal_scope seed
 *   backend_generate backend_score backend_detect backend_embed backend_tag
 *   lexicon detect_floor minmax_epsilon threads
 *
 * Values are only parsed here; range checks happen in the validators so a
 * bad value reports OUT_OF_RANGE whether it came from a file or a flag.
 */

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "mrgd/core.hpp"
#include "mrgd/error.hpp"
#include "mrgd/extraction.hpp"

namespace mrgd {

struct BackendEndpoints {
  std::string generate;
  std::string score;
  std::string detect;
  std::string embed;
  std::string tag;

  friend bool operator==(const BackendEndpoints&, const BackendEndpoints&) = default;
};

struct EngineConfig {
  GenerationParams params;
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  BackendEndpoints backends;
  std::string lexicon;
  double detect_floor = 0.1;
  double minmax_epsilon = 1e-6;
  unsigned threads = 1;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

namespace detail {

inline double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw Error(ErrorCode::Parse, std::string(key) + ": not a number '" + std::string(v) + "'");
  return out;
}

template <class Int>
Int parse_integer(std::string_view key, std::string_view v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw Error(ErrorCode::Parse, std::string(key) + ": not an integer '" + std::string(v) + "'");
  return out;
}

}  // namespace detail

/// Applies one key/value pair. Unknown keys are a PARSE error.
inline void apply_setting(EngineConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "w") cfg.guidance.w = detail::parse_real(key, value);
  else if (key == "tau") cfg.guidance.tau = detail::parse_real(key, value);
  else if (key == "k") cfg.params.k = detail::parse_integer<int>(key, value);
  else if (key == "T") cfg.params.T = SentencePeriod::parse(value);
  else if (key == "temperature") cfg.params.temperature = detail::parse_real(key, value);
  else if (key == "max_total_tokens") cfg.params.max_total_tokens = detail::parse_integer<int>(key, value);
  else if (key == "max_iterations") cfg.params.max_iterations = detail::parse_integer<int>(key, value);
  else if (key == "hal_normalization") cfg.guidance.hal_normalization = parse_hal_normalization(value);
  else if (key == "hal_scope") cfg.guidance.hal_scope = parse_hal_scope(value);
  else if (key == "seed") cfg.seed = detail::parse_integer<std::uint64_t>(key, value);
  else if (key == "backend_generate") cfg.backends.generate = value;
  else if (key == "backend_score") cfg.backends.score = value;
  else if (key == "backend_detect") cfg.backends.detect = value;
  else if (key == "backend_embed") cfg.backends.embed = value;
  else if (key == "backend_tag") cfg.backends.tag = value;
  else if (key == "lexicon") cfg.lexicon = value;
  else if (key == "detect_floor") cfg.detect_floor = detail::parse_real(key, value);
  else if (key == "minmax_epsilon") cfg.minmax_epsilon = detail::parse_real(key, value);
  else if (key == "threads") cfg.threads = detail::parse_integer<unsigned>(key, value);
  else throw Error(ErrorCode::Parse, "unknown key '" + std::string(key) + "'");
}

/// Overlays the settings in `in` onto `cfg`.
inline void read_config(std::istream& in, EngineConfig& cfg, const std::string& source = "config") {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::Parse, source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      apply_setting(cfg, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, source + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
}

inline EngineConfig load_config(const std::string& path, EngineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Parse, "cannot read config '" + path + "'");
  read_config(in, base, path);
  return base;
}

inline const EngineConfig& validate_engine_config(const EngineConfig& cfg) {
  validate_guidance_config(cfg.guidance);
  validate_generation_params(cfg.params);
  if (!(cfg.detect_floor >= 0.0 && cfg.detect_floor <= 1.0)) throw Error(ErrorCode::OutOfRange, "detect_floor");
  if (!(cfg.minmax_epsilon > 0.0)) throw Error(ErrorCode::OutOfRange, "minmax_epsilon");
  if (cfg.threads < 1) throw Error(ErrorCode::OutOfRange, "threads");
  return cfg;
}

}  // namespace mrgd
