// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Builds a BackendSet from endpoint strings:
 *
 *   http://host:port[/base]   remote service speaking mrgd/1
 *   fixture:PATH              file-backed fixture (type depends on the capability)
 *   sim:PATH                  simulated world loaded from PATH
 *   sim:                      simulated world with default (or injected) settings
 *
 * Fixture files per capability: generate = tree, score = scores or tree,
 * detect = annotations, embed = embedding table, tag = lexicon.
 * Every sim: endpoint naming the same world shares one instance.
 */

#include <map>
#include <memory>
#include <string>

#include "mrgd/backends/fixture.hpp"
#include "mrgd/backends/interfaces.hpp"
#include "mrgd/backends/remote.hpp"
#include "mrgd/backends/sim.hpp"
#include "mrgd/config.hpp"

namespace mrgd {

struct EndpointSpec {
  enum class Kind { Http, Fixture, Sim };
  Kind kind = Kind::Http;
  std::string target;  // URL or file path (empty for the default world)

  static EndpointSpec parse(const std::string& text) {
    if (text.rfind("fixture:", 0) == 0) {
      if (text.size() == 8) throw Error(ErrorCode::Parse, "fixture endpoint needs a path");
      return {Kind::Fixture, text.substr(8)};
    }
    if (text.rfind("sim:", 0) == 0) return {Kind::Sim, text.substr(4)};
    if (text.rfind("http://", 0) == 0) return {Kind::Http, text};
    throw Error(ErrorCode::Parse, "unrecognized backend '" + text + "'");
  }
};

class BackendFactory {
 public:
  explicit BackendFactory(std::shared_ptr<const SimWorld> default_world = nullptr)
      : default_world_(std::move(default_world)) {}

  BackendSet build(const EngineConfig& cfg) {
    BackendSet set;
    set.detect_floor = cfg.detect_floor;
    const auto& ep = cfg.backends;

    if (!ep.generate.empty()) set.generator = make_generator(EndpointSpec::parse(ep.generate));
    if (!ep.score.empty()) set.scorer = make_scorer(EndpointSpec::parse(ep.score));
    if (!ep.detect.empty()) set.detector = make_detector(EndpointSpec::parse(ep.detect));
    if (!ep.embed.empty()) set.embedder = make_embedder(EndpointSpec::parse(ep.embed));

    set.lexicon = std::make_shared<const Lexicon>(resolve_lexicon(cfg));
    if (!ep.tag.empty()) {
      set.extractor = make_tagger(EndpointSpec::parse(ep.tag));
    } else {
      set.extractor = std::make_shared<LexiconExtractor>(*set.lexicon);
    }
    return set;
  }

  /// Ground truth known to the configured detector, if it is file- or
  /// sim-backed. Used by the metrics commands.
  const std::optional<AnnotationSet>& annotations() const { return annotations_; }

  std::shared_ptr<const SimWorld> world(const std::string& path) {
    if (path.empty()) {
      if (!default_world_) default_world_ = std::make_shared<const SimWorld>(SimWorldConfig{});
      return default_world_;
    }
    auto& slot = worlds_[path];
    if (!slot) slot = std::make_shared<const SimWorld>(SimWorld::load(path));
    return slot;
  }

 private:
  std::shared_ptr<const Generator> make_generator(const EndpointSpec& s) {
    switch (s.kind) {
      case EndpointSpec::Kind::Http: return std::make_shared<RemoteGenerator>(HttpEndpoint(s.target));
      case EndpointSpec::Kind::Fixture: return std::make_shared<FixtureTree>(FixtureTree::load(s.target));
      case EndpointSpec::Kind::Sim: return remember(world(s.target));
    }
    return nullptr;
  }

  std::shared_ptr<const HallucinationScorer> make_scorer(const EndpointSpec& s) {
    switch (s.kind) {
      case EndpointSpec::Kind::Http: return std::make_shared<RemoteScorer>(HttpEndpoint(s.target));
      case EndpointSpec::Kind::Fixture: return std::make_shared<FixtureScorer>(FixtureScorer::load(s.target));
      case EndpointSpec::Kind::Sim: return remember(world(s.target));
    }
    return nullptr;
  }

  std::shared_ptr<const Detector> make_detector(const EndpointSpec& s) {
    switch (s.kind) {
      case EndpointSpec::Kind::Http: return std::make_shared<RemoteDetector>(HttpEndpoint(s.target));
      case EndpointSpec::Kind::Fixture: {
        auto set = AnnotationSet::load(s.target);
        if (set.lexicon_path) annotation_lexicon_ = set.lexicon_path;
        annotations_ = set;
        return std::make_shared<FixtureDetector>(std::move(set));
      }
      case EndpointSpec::Kind::Sim: {
        auto w = remember(world(s.target));
        annotations_ = w->annotations();
        return w;
      }
    }
    return nullptr;
  }

  std::shared_ptr<const Embedder> make_embedder(const EndpointSpec& s) {
    switch (s.kind) {
      case EndpointSpec::Kind::Http: return std::make_shared<RemoteEmbedder>(HttpEndpoint(s.target));
      case EndpointSpec::Kind::Fixture: return std::make_shared<TableEmbedder>(TableEmbedder::load(s.target));
      case EndpointSpec::Kind::Sim: return remember(world(s.target));
    }
    return nullptr;
  }

  std::shared_ptr<const ObjectExtractor> make_tagger(const EndpointSpec& s) {
    switch (s.kind) {
      case EndpointSpec::Kind::Http: return std::make_shared<RemoteTagger>(HttpEndpoint(s.target));
      case EndpointSpec::Kind::Fixture: return std::make_shared<LexiconExtractor>(Lexicon::load(s.target));
      case EndpointSpec::Kind::Sim: return std::make_shared<LexiconExtractor>(remember(world(s.target))->lexicon());
    }
    return nullptr;
  }

  std::shared_ptr<const SimWorld> remember(std::shared_ptr<const SimWorld> w) {
    if (!first_world_) first_world_ = w;
    return w;
  }

  /// Explicit lexicon, else the one named by the annotation file, else the
  /// sim world's vocabulary, else empty.
  Lexicon resolve_lexicon(const EngineConfig& cfg) const {
    if (!cfg.lexicon.empty()) return Lexicon::load(cfg.lexicon);
    if (annotation_lexicon_) return Lexicon::load(*annotation_lexicon_);
    if (first_world_) return first_world_->lexicon();
    return {};
  }

  std::shared_ptr<const SimWorld> default_world_;
  std::map<std::string, std::shared_ptr<const SimWorld>> worlds_;
  std::shared_ptr<const SimWorld> first_world_;
  std::optional<std::string> annotation_lexicon_;
  std::optional<AnnotationSet> annotations_;
};

}  // namespace mrgd
