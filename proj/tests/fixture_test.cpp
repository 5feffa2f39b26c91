// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <gtest/gtest.h>

#include "mrgd/backends/factory.hpp"
#include "mrgd/backends/fixture.hpp"

using namespace mrgd;

namespace {

const std::string kData = MRGD_TEST_DATA_DIR;

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

GenerateRequest request(std::string prefix, int k, StopCondition stop = StopCondition::after(1)) {
  return {"img-1", "Describe", std::move(prefix), k, 1.0, stop, 100, 123};
}

}  // namespace

TEST(FixtureTree, RootLookup) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  auto resp = tree.generate(request("", 2));
  ASSERT_EQ(resp.candidates.size(), 2u);
  EXPECT_EQ(resp.candidates[0].text, "A cat.");
  EXPECT_EQ(resp.candidates[1].text, "A dog.");
  EXPECT_FALSE(resp.candidates[0].finished);
  EXPECT_TRUE(resp.reason.empty());
}

TEST(FixtureTree, EosChild) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  auto resp = tree.generate(request("A cat.", 1));
  ASSERT_EQ(resp.candidates.size(), 1u);
  EXPECT_EQ(resp.candidates[0].text, "");
  EXPECT_TRUE(resp.candidates[0].finished);
  EXPECT_EQ(resp.candidates[0].token_count, 1);
}

TEST(FixtureTree, UnknownPrefix) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  EXPECT_EQ(code_of([&] { tree.generate(request("A bird.", 1)); }), ErrorCode::UnknownPrefix);
}

TEST(FixtureTree, FewerThanRequestedCarriesReason) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  auto resp = tree.generate(request("", 5));
  EXPECT_EQ(resp.candidates.size(), 2u);
  EXPECT_FALSE(resp.reason.empty());
}

TEST(FixtureTree, SeedIndependent) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  auto a = request("", 2), b = request("", 2);
  b.seed = 999;
  EXPECT_EQ(tree.generate(a), tree.generate(b));
}

TEST(FixtureTree, ToEosFollowsFirstChild) {
  auto tree = FixtureTree::from_json(nlohmann::json::parse(R"({
    "format": "mrgd-tree/1",
    "nodes": {"": ["A.", "B."], "A.": [" C.", " D."], "A. C.": ["<EOS>"], "B.": [" E.<EOS>"]}})"));
  auto resp = tree.generate(request("", 2, StopCondition::to_eos()));
  ASSERT_EQ(resp.candidates.size(), 2u);
  EXPECT_EQ(resp.candidates[0].text, "A. C.");
  EXPECT_TRUE(resp.candidates[0].finished);
  EXPECT_EQ(resp.candidates[1].text, "B. E.");
  EXPECT_TRUE(resp.candidates[1].finished);
}

TEST(FixtureTree, PerImageNodesTakePrecedence) {
  auto tree = FixtureTree::from_json(nlohmann::json::parse(R"({
    "format": "mrgd-tree/1",
    "nodes": {"": ["Global."]},
    "images": {"img-1": {"": ["Local."]}}})"));
  EXPECT_EQ(tree.generate(request("", 1)).candidates[0].text, "Local.");
  auto other = request("", 1);
  other.image_ref = "img-9";
  EXPECT_EQ(tree.generate(other).candidates[0].text, "Global.");
}

TEST(FixtureTree, BadFilesAreParseErrors) {
  EXPECT_EQ(code_of([] { FixtureTree::from_json(nlohmann::json::parse(R"({"format":"x"})")); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { FixtureTree::from_json(nlohmann::json::parse(R"({"format":"mrgd-tree/1","nodes":{"":[{"text":1}]}})")); }),
            ErrorCode::Parse);
  EXPECT_EQ(code_of([] { FixtureTree::from_json(nlohmann::json::parse(R"({"format":"mrgd-tree/1","nodes":{"":[{"text":"a","finished":"yes"}]}})")); }),
            ErrorCode::Parse);
  EXPECT_EQ(code_of([] { FixtureTree::load("/nonexistent.json"); }), ErrorCode::Parse);
}

TEST(FixtureScorer, FromTreeAndScoreFile) {
  auto tree = FixtureTree::load(kData + "/tree.json");
  auto from_tree = FixtureScorer::from_tree(tree);
  EXPECT_DOUBLE_EQ(from_tree.score({"img-1", "q", "A cat."}), 0.9);
  EXPECT_DOUBLE_EQ(from_tree.score({"img-1", "q", "A dog."}), 0.4);
  EXPECT_EQ(code_of([&] { from_tree.score({"img-1", "q", "A bird."}); }), ErrorCode::UnknownPrefix);

  auto file = FixtureScorer::load(kData + "/scores.json");
  EXPECT_DOUBLE_EQ(file.score({"img-1", "q", "A cat and a bus."}), 0.9);
  EXPECT_DOUBLE_EQ(file.score({"img-2", "q", "A cat and a bus."}), 0.2);
}

TEST(FixtureScorer, TreeFileAcceptedAsScoreFile) {
  auto scorer = FixtureScorer::load(kData + "/tree.json");
  EXPECT_DOUBLE_EQ(scorer.score({"img-1", "q", "A cat."}), 0.9);
}

TEST(FixtureScorer, OutOfRangeScoreInFileRejected) {
  EXPECT_EQ(code_of([] { FixtureScorer::from_json(nlohmann::json::parse(R"({"format":"mrgd-scores/1","scores":{"a":1.5}})")); }),
            ErrorCode::Parse);
}

TEST(TableEmbedder, OneHotLookups) {
  auto table = TableEmbedder::load(kData + "/embeddings.txt");
  std::vector<std::string> cat{"cat"};
  EXPECT_EQ(table.embed(cat)[0].values, (std::vector<double>{1, 0, 0, 0, 0, 0}));
  std::vector<std::string> pair{"cat", "dog"};
  auto v = table.embed(pair);
  EXPECT_DOUBLE_EQ(dot(v[0], v[1]), 0.0);
  std::vector<std::string> unicorn{"unicorn"};
  EXPECT_EQ(code_of([&] { table.embed(unicorn); }), ErrorCode::EmbeddingUnavailable);
}

TEST(TableEmbedder, RejectsNonUnitAndRaggedRows) {
  std::istringstream ragged("a 1 0\nb 0 0 1\n");
  EXPECT_EQ(code_of([&] { TableEmbedder::parse(ragged); }), ErrorCode::Parse);
  std::istringstream scaled("a 2 0\n");
  EXPECT_EQ(code_of([&] { TableEmbedder::parse(scaled); }), ErrorCode::Parse);
  std::istringstream junk("a 1 x\n");
  EXPECT_EQ(code_of([&] { TableEmbedder::parse(junk); }), ErrorCode::Parse);
}

TEST(FixtureDetector, Lookups) {
  FixtureDetector det(AnnotationSet::load(kData + "/annotations.json"));
  EXPECT_EQ(det.detect("img-2").size(), 2u);
  EXPECT_TRUE(det.detect("img-empty").empty());
  for (const auto& d : det.detect("img-1")) EXPECT_DOUBLE_EQ(d.confidence, 1.0);
  EXPECT_EQ(code_of([&] { det.detect("img-404"); }), ErrorCode::UnknownImage);
}

TEST(Annotations, LexiconPathResolvesNextToFile) {
  auto set = AnnotationSet::load(kData + "/annotations.json");
  ASSERT_TRUE(set.lexicon_path.has_value());
  auto lex = Lexicon::load(*set.lexicon_path);
  auto canon = set.canonicalized(lex);
  EXPECT_EQ(canon.find("img-2")->ground_truth_objects, (std::set<std::string>{"cat", "mat"}));
}

TEST(Factory, ParsesEndpointKinds) {
  EXPECT_EQ(EndpointSpec::parse("fixture:/a/b.json").target, "/a/b.json");
  EXPECT_EQ(EndpointSpec::parse("sim:").kind, EndpointSpec::Kind::Sim);
  EXPECT_EQ(EndpointSpec::parse("http://localhost:1").kind, EndpointSpec::Kind::Http);
  EXPECT_EQ(code_of([] { EndpointSpec::parse("grpc://x"); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { EndpointSpec::parse("fixture:"); }), ErrorCode::Parse);
}

TEST(Factory, BuildsFixtureSetWithAnnotationLexicon) {
  EngineConfig cfg;
  cfg.backends = {"fixture:" + kData + "/tree.json", "fixture:" + kData + "/scores.json",
                  "fixture:" + kData + "/annotations.json", "fixture:" + kData + "/embeddings.txt", ""};
  BackendFactory factory;
  auto set = factory.build(cfg);
  EXPECT_TRUE(set.generator && set.scorer && set.detector && set.embedder && set.extractor);
  EXPECT_TRUE(set.lexicon->is_canonical("person"));
  ASSERT_TRUE(factory.annotations().has_value());
  EXPECT_EQ(factory.annotations()->records.size(), 3u);
}

TEST(Factory, SimEndpointsShareOneWorld) {
  EngineConfig cfg;
  cfg.backends = {"sim:", "sim:", "sim:", "sim:", ""};
  BackendFactory factory;
  auto set = factory.build(cfg);
  EXPECT_EQ(static_cast<const void*>(dynamic_cast<const SimWorld*>(set.generator.get())),
            static_cast<const void*>(dynamic_cast<const SimWorld*>(set.scorer.get())));
  EXPECT_TRUE(set.lexicon->is_canonical("giraffe"));
  EXPECT_EQ(factory.annotations()->records.size(), 200u);
}
