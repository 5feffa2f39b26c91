// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP clients for the mrgd/1 protocol (see protocol.hpp). A fresh
// connection is opened per request, so one client object can be shared by
// any number of threads.

#include <chrono>
#include <string>
#include <utility>

#include <httplib.h>

#include "mrgd/backends/interfaces.hpp"
#include "mrgd/backends/protocol.hpp"

namespace mrgd {

/// Base URL such as "http://localhost:8080" or "http://host:9000/prefix".
class HttpEndpoint {
 public:
  explicit HttpEndpoint(std::string base_url,
                        std::chrono::milliseconds timeout = std::chrono::seconds(120))
      : timeout_(timeout) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos || base_url.substr(0, scheme_end) != "http")
      throw Error(ErrorCode::Parse, "backend URL must start with http:// ('" + base_url + "')");
    auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
      base_path_ = base_url.substr(path_start);
      while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    }
    if (origin_.size() <= scheme_end + 3) throw Error(ErrorCode::Parse, "backend URL has no host");
  }

  /// POSTs a JSON document and returns the reply body. Non-2xx replies with
  /// an {"error": ...} body become SERVICE_REPORTED; other failures TRANSPORT.
  std::string post(const std::string& path, const protocol::json& body) const {
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto result = client.Post(base_path_ + path, body.dump(), "application/json");
    if (!result) {
      throw Error(ErrorCode::Transport, origin_ + base_path_ + path + ": " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
      auto doc = protocol::json::parse(result->body, nullptr, false);
      if (doc.is_object() && doc.contains("error") && doc["error"].is_string()) {
        throw Error(ErrorCode::ServiceReported, doc["error"].get<std::string>());
      }
      throw Error(ErrorCode::Transport, path + ": HTTP " + std::to_string(result->status));
    }
    return result->body;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::string base_path_;
  std::chrono::milliseconds timeout_;
};

class RemoteGenerator final : public Generator {
 public:
  /// With sentence_stops=false the service is asked for to_eos samples and
  /// the decoder truncates at sentence boundaries client-side.
  explicit RemoteGenerator(HttpEndpoint endpoint, bool sentence_stops = true)
      : endpoint_(std::move(endpoint)), sentence_stops_(sentence_stops) {}

  GenerateResponse generate(const GenerateRequest& req) const override {
    GenerateRequest wire = req;
    if (!sentence_stops_) wire.stop = StopCondition::to_eos();
    return protocol::decode_generate_response(endpoint_.post("/v1/generate", protocol::encode(wire)),
                                              req.num_samples);
  }

 private:
  HttpEndpoint endpoint_;
  bool sentence_stops_;
};

class RemoteScorer final : public HallucinationScorer {
 public:
  explicit RemoteScorer(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  double score(const ScoreRequest& req) const override {
    return protocol::decode_score_response(endpoint_.post("/v1/score", protocol::encode(req)));
  }

 private:
  HttpEndpoint endpoint_;
};

class RemoteDetector final : public Detector {
 public:
  explicit RemoteDetector(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::vector<Detection> detect(const std::string& image_ref) const override {
    return protocol::decode_detect_response(
        endpoint_.post("/v1/detect", protocol::encode_detect_request(image_ref)));
  }

 private:
  HttpEndpoint endpoint_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> labels) const override {
    if (labels.empty()) return {};
    return protocol::decode_embed_response(
        endpoint_.post("/v1/embed", protocol::encode_embed_request(labels)), labels.size());
  }

 private:
  HttpEndpoint endpoint_;
};

/// Live replacement for the lexicon extractor: a tagging service returns
/// the object nouns of a caption. Mentions are deduplicated client-side.
class RemoteTagger final : public ObjectExtractor {
 public:
  explicit RemoteTagger(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::vector<ObjectMention> extract(std::string_view caption) const override {
    auto mentions = protocol::decode_tag_response(
        endpoint_.post("/v1/tag", protocol::encode_tag_request(caption)));
    return dedup_by_canonical(mentions);
  }

  bool is_remote() const override { return true; }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace mrgd
