// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Wire protocol "mrgd/1": JSON documents POSTed to one endpoint per
 * capability.
 *
 *   POST /v1/generate
 *     {"version":"mrgd/1","image_ref":..,"instruction":..,"prefix":..,
 *      "num_samples":k,"temperature":t,
 *      "stop":{"sentence_boundaries":N} | {"to_eos":true},
 *      "max_tokens":m,"seed":s}
 *     -> {"version":"mrgd/1","candidates":[{"text":..,"finished":b,"token_count":n}],
 *         "reason":".."?}
 *   POST /v1/score   {"version","image_ref","instruction","response"} -> {"version","score"}
 *   POST /v1/detect  {"version","image_ref"} -> {"version","detections":[{"label","confidence"}]}
 *   POST /v1/embed   {"version","labels":[..]} -> {"version","vectors":[[..]]}
 *   POST /v1/tag     {"version","text"} -> {"version","objects":[{"surface","canonical"}]}
 *
 * Any reply may instead carry {"error": reason}, surfaced as SERVICE_REPORTED.
 * Replies are validated here, before they reach the engine; out-of-range
 * values are rejected, never clamped.
 */

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrgd/backends/interfaces.hpp"

namespace mrgd::protocol {

using json = nlohmann::json;

inline constexpr double kUnitNormTolerance = 1e-6;

namespace detail {

[[noreturn]] inline void schema_error(const std::string& what) {
  throw Error(ErrorCode::Schema, what);
}

inline json parse_document(const std::string& body) {
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) schema_error("reply is not a JSON object");
  return doc;
}

/// Rejects error replies and wrong versions; shared by every reply parser.
inline void check_envelope(const json& doc) {
  if (auto it = doc.find("error"); it != doc.end()) {
    throw Error(ErrorCode::ServiceReported, it->is_string() ? it->get<std::string>() : it->dump());
  }
  auto version = doc.find("version");
  if (version == doc.end() || !version->is_string()) schema_error("missing field 'version'");
  if (*version != kProtocolVersion) schema_error("unsupported version '" + version->get<std::string>() + "'");
}

inline const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) schema_error(std::string("missing field '") + field + "'");
  return *it;
}

inline std::string require_string(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_string()) schema_error(std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_number()) schema_error(std::string("field '") + field + "' must be a number");
  return v.get<double>();
}

inline long long require_integer(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_number_integer()) schema_error(std::string("field '") + field + "' must be an integer");
  return v.get<long long>();
}

inline bool require_bool(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_boolean()) schema_error(std::string("field '") + field + "' must be a boolean");
  return v.get<bool>();
}

inline const json& require_array(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_array()) schema_error(std::string("field '") + field + "' must be an array");
  return v;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// generate
// ----------------------------------------------------------------------------

inline json encode(const GenerateRequest& req) {
  json stop = req.stop.is_to_eos() ? json{{"to_eos", true}}
                                   : json{{"sentence_boundaries", *req.stop.sentence_boundaries}};
  return {{"version", kProtocolVersion},   {"image_ref", req.image_ref},
          {"instruction", req.instruction}, {"prefix", req.prefix},
          {"num_samples", req.num_samples}, {"temperature", req.temperature},
          {"stop", stop},                   {"max_tokens", req.max_tokens},
          {"seed", req.seed}};
}

inline GenerateRequest decode_generate_request(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) schema_error("request is not a JSON object");
  if (require_string(doc, "version") != kProtocolVersion) schema_error("unsupported version");
  GenerateRequest req;
  req.image_ref = require_string(doc, "image_ref");
  req.instruction = require_string(doc, "instruction");
  req.prefix = require_string(doc, "prefix");
  req.num_samples = static_cast<int>(require_integer(doc, "num_samples"));
  req.temperature = require_number(doc, "temperature");
  req.max_tokens = static_cast<int>(require_integer(doc, "max_tokens"));
  const auto& seed = require(doc, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
    schema_error("field 'seed' must be a non-negative integer");
  req.seed = seed.get<std::uint64_t>();
  const auto& stop = require(doc, "stop");
  if (!stop.is_object()) schema_error("field 'stop' must be an object");
  if (stop.contains("sentence_boundaries")) {
    req.stop = StopCondition::after(static_cast<int>(require_integer(stop, "sentence_boundaries")));
  } else if (stop.contains("to_eos") && require_bool(stop, "to_eos")) {
    req.stop = StopCondition::to_eos();
  } else {
    schema_error("field 'stop' must hold 'sentence_boundaries' or 'to_eos'");
  }
  return req;
}

inline json encode(const GenerateResponse& resp) {
  json candidates = json::array();
  for (const auto& c : resp.candidates) {
    candidates.push_back({{"text", c.text}, {"finished", c.finished}, {"token_count", c.token_count}});
  }
  json doc = {{"version", kProtocolVersion}, {"candidates", candidates}};
  if (!resp.reason.empty()) doc["reason"] = resp.reason;
  return doc;
}

inline GenerateResponse decode_generate_response(const std::string& body, int num_samples) {
  using namespace detail;
  json doc = parse_document(body);
  check_envelope(doc);
  GenerateResponse resp;
  if (auto it = doc.find("reason"); it != doc.end()) {
    if (!it->is_string()) schema_error("field 'reason' must be a string");
    resp.reason = it->get<std::string>();
  }
  for (const auto& item : require_array(doc, "candidates")) {
    if (!item.is_object()) schema_error("candidate must be an object");
    Candidate c;
    c.text = require_string(item, "text");
    c.finished = require_bool(item, "finished");
    auto tokens = require_integer(item, "token_count");
    if (tokens < 0) schema_error("field 'token_count' must be non-negative");
    c.token_count = static_cast<int>(tokens);
    resp.candidates.push_back(std::move(c));
  }
  if (static_cast<int>(resp.candidates.size()) > num_samples)
    schema_error("more candidates than requested");
  if (static_cast<int>(resp.candidates.size()) < num_samples && resp.reason.empty())
    schema_error("fewer candidates than requested without a 'reason'");
  return resp;
}

// ----------------------------------------------------------------------------
// score
// ----------------------------------------------------------------------------

inline json encode(const ScoreRequest& req) {
  return {{"version", kProtocolVersion},
          {"image_ref", req.image_ref},
          {"instruction", req.instruction},
          {"response", req.response}};
}

inline ScoreRequest decode_score_request(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) schema_error("request is not a JSON object");
  if (require_string(doc, "version") != kProtocolVersion) schema_error("unsupported version");
  return {require_string(doc, "image_ref"), require_string(doc, "instruction"),
          require_string(doc, "response")};
}

inline json encode_score_response(double score) {
  return {{"version", kProtocolVersion}, {"score", score}};
}

inline double decode_score_response(const std::string& body) {
  using namespace detail;
  json doc = parse_document(body);
  check_envelope(doc);
  double score = require_number(doc, "score");
  if (!(score >= 0.0 && score <= 1.0)) schema_error("score outside [0,1]");
  return score;
}

// ----------------------------------------------------------------------------
// detect
// ----------------------------------------------------------------------------

inline json encode_detect_request(const std::string& image_ref) {
  return {{"version", kProtocolVersion}, {"image_ref", image_ref}};
}

inline json encode(const std::vector<Detection>& detections) {
  json items = json::array();
  for (const auto& d : detections) items.push_back({{"label", d.label}, {"confidence", d.confidence}});
  return {{"version", kProtocolVersion}, {"detections", items}};
}

inline std::vector<Detection> decode_detect_response(const std::string& body) {
  using namespace detail;
  json doc = parse_document(body);
  check_envelope(doc);
  std::vector<Detection> out;
  for (const auto& item : require_array(doc, "detections")) {
    if (!item.is_object()) schema_error("detection must be an object");
    Detection d{require_string(item, "label"), require_number(item, "confidence")};
    if (d.label.empty()) schema_error("detection label must be non-empty");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) schema_error("confidence outside [0,1]");
    out.push_back(std::move(d));
  }
  return out;
}

// ----------------------------------------------------------------------------
// embed
// ----------------------------------------------------------------------------

inline json encode_embed_request(std::span<const std::string> labels) {
  return {{"version", kProtocolVersion}, {"labels", std::vector<std::string>(labels.begin(), labels.end())}};
}

inline json encode(const std::vector<EmbeddingVector>& vectors) {
  json rows = json::array();
  for (const auto& v : vectors) rows.push_back(v.values);
  return {{"version", kProtocolVersion}, {"vectors", rows}};
}

inline std::vector<EmbeddingVector> decode_embed_response(const std::string& body,
                                                          std::size_t expected_count) {
  using namespace detail;
  json doc = parse_document(body);
  check_envelope(doc);
  const auto& rows = require_array(doc, "vectors");
  if (rows.size() != expected_count) schema_error("expected one vector per label");
  std::vector<EmbeddingVector> out;
  for (const auto& row : rows) {
    if (!row.is_array() || row.empty()) schema_error("vector must be a non-empty array");
    EmbeddingVector v;
    double norm2 = 0.0;
    for (const auto& x : row) {
      if (!x.is_number()) schema_error("vector entries must be numbers");
      v.values.push_back(x.get<double>());
      norm2 += v.values.back() * v.values.back();
    }
    if (!out.empty() && out.front().dimension() != v.dimension())
      schema_error("vector dimension is not constant");
    if (std::abs(std::sqrt(norm2) - 1.0) > kUnitNormTolerance) schema_error("vector is not unit norm");
    out.push_back(std::move(v));
  }
  return out;
}

// ----------------------------------------------------------------------------
// tag
// ----------------------------------------------------------------------------

inline json encode_tag_request(std::string_view text) {
  return {{"version", kProtocolVersion}, {"text", std::string(text)}};
}

inline json encode(const std::vector<ObjectMention>& mentions) {
  json items = json::array();
  for (const auto& m : mentions) items.push_back({{"surface", m.surface}, {"canonical", m.canonical}});
  return {{"version", kProtocolVersion}, {"objects", items}};
}

inline std::vector<ObjectMention> decode_tag_response(const std::string& body) {
  using namespace detail;
  json doc = parse_document(body);
  check_envelope(doc);
  std::vector<ObjectMention> out;
  for (const auto& item : require_array(doc, "objects")) {
    if (!item.is_object()) schema_error("object must be an object");
    ObjectMention m{require_string(item, "surface"), require_string(item, "canonical")};
    if (m.canonical.empty()) schema_error("canonical label must be non-empty");
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace mrgd::protocol
