// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "mrgd/backends/sim.hpp"
#include "mrgd/eval.hpp"

using namespace mrgd;

namespace {

const std::string kData = MRGD_TEST_DATA_DIR;

CaptionEval ev(std::set<std::string> mentions, std::set<std::string> gt, int words = 0) {
  return {std::move(mentions), std::move(gt), words};
}

MetricsReport corpus_report(const std::string& captions, const std::string& annotations) {
  auto ann = AnnotationSet::load(kData + "/" + annotations);
  auto lex = Lexicon::load(*ann.lexicon_path);
  return evaluate_captions(load_captions(kData + "/" + captions), ann.canonicalized(lex), LexiconExtractor(lex));
}

BackendSet sim_set(std::shared_ptr<SimWorld> world) {
  BackendSet set;
  set.generator = world;
  set.scorer = world;
  set.detector = world;
  set.embedder = world;
  set.lexicon = std::make_shared<Lexicon>(world->lexicon());
  set.extractor = std::make_shared<LexiconExtractor>(world->lexicon());
  return set;
}

std::shared_ptr<SimWorld> small_world(int episodes = 6) {
  SimWorldConfig c;
  c.seed = 5;
  c.episodes = episodes;
  return std::make_shared<SimWorld>(c);
}

std::vector<DatasetItem> sim_dataset(const SimWorld& world) {
  return make_dataset(world.annotations(), "Describe this image in detail");
}

GenerationParams params(int k, SentencePeriod T = SentencePeriod::every(1)) {
  GenerationParams p;
  p.k = k;
  p.T = T;
  return p;
}

// Independent reference: mention precision over a corpus.
double precision_oracle(const std::vector<CaptionEval>& corpus) {
  int correct = 0, total = 0;
  for (const auto& c : corpus) {
    for (const auto& m : c.mentions) {
      ++total;
      if (std::find(c.ground_truth.begin(), c.ground_truth.end(), m) != c.ground_truth.end()) ++correct;
    }
  }
  return static_cast<double>(correct) / total;
}

std::vector<CaptionEval> random_corpus(std::mt19937_64& rng, int n) {
  const std::vector<std::string> labels{"a", "b", "c", "d", "e", "f"};
  std::vector<CaptionEval> out;
  for (int i = 0; i < n; ++i) {
    CaptionEval c;
    for (const auto& l : labels) {
      if (rng() % 3 == 0) c.mentions.insert(l);
      if (rng() % 3 == 0) c.ground_truth.insert(l);
    }
    c.words = static_cast<int>(rng() % 30);
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST(Metrics, Examples) {
  std::vector<CaptionEval> one{ev({"cat", "dog"}, {"cat"})};
  EXPECT_DOUBLE_EQ(chair_instance(one), 0.5);
  std::vector<CaptionEval> clean{ev({"cat"}, {"cat", "dog"})};
  EXPECT_DOUBLE_EQ(chair_instance(clean), 0.0);
  std::vector<CaptionEval> none{ev({}, {"cat"}), ev({}, {})};
  EXPECT_DOUBLE_EQ(chair_instance(none), 0.0);

  std::vector<CaptionEval> four{ev({"cat"}, {"cat"}), ev({"dog"}, {"cat"}), ev({}, {"x"}), ev({"x"}, {"x"})};
  EXPECT_DOUBLE_EQ(chair_sentence(four), 0.25);
  std::vector<CaptionEval> all_bad{ev({"dog"}, {"cat"}), ev({"x"}, {})};
  EXPECT_DOUBLE_EQ(chair_sentence(all_bad), 1.0);
  EXPECT_DOUBLE_EQ(chair_sentence(clean), 0.0);

  std::vector<CaptionEval> third{ev({"cat"}, {"cat", "dog", "car"})};
  EXPECT_DOUBLE_EQ(recall_metric(third), 1.0 / 3.0);
  std::vector<CaptionEval> superset{ev({"cat", "dog", "bus"}, {"cat", "dog"})};
  EXPECT_DOUBLE_EQ(recall_metric(superset), 1.0);
  std::vector<CaptionEval> empty_gt{ev({"cat"}, {}), ev({}, {})};
  EXPECT_DOUBLE_EQ(recall_metric(empty_gt), 1.0);
}

TEST(Metrics, ZeroMentionCaptionsCountInSentenceDenominator) {
  std::vector<CaptionEval> c{ev({"dog"}, {"cat"}), ev({}, {"cat"})};
  EXPECT_DOUBLE_EQ(chair_sentence(c), 0.5);
  EXPECT_DOUBLE_EQ(chair_instance(c), 1.0);
}

TEST(Metrics, EmptyCorpusIsVacuous) {
  MetricsAccumulator acc;
  auto r = acc.report();
  EXPECT_EQ(r.captions_evaluated, 0);
  EXPECT_EQ(r.c_instance, 0.0);
  EXPECT_EQ(r.c_sentence, 0.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.avg_length, 0.0);
}

TEST(Metrics, GoldenCorpus) {
  auto r = corpus_report("golden_captions.jsonl", "golden_annotations.json");
  EXPECT_EQ(r.captions_evaluated, 10);
  EXPECT_DOUBLE_EQ(r.c_instance, 5.0 / 16.0);
  EXPECT_DOUBLE_EQ(r.c_sentence, 0.4);
  EXPECT_DOUBLE_EQ(r.recall, 11.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.avg_length, 5.4);
}

TEST(Metrics, FourCaptionCorpus) {
  auto r = corpus_report("four_captions.jsonl", "four_annotations.json");
  EXPECT_EQ(r.captions_evaluated, 4);
  EXPECT_DOUBLE_EQ(r.c_instance, 0.5);
  EXPECT_DOUBLE_EQ(r.c_sentence, 0.25);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.avg_length, 4.0);
}

TEST(Metrics, PermutationInvariance) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    auto corpus = random_corpus(rng, 1 + static_cast<int>(rng() % 20));
    auto base = accumulate(corpus).report();
    std::shuffle(corpus.begin(), corpus.end(), rng);
    EXPECT_EQ(accumulate(corpus).report(), base);
  }
}

TEST(Metrics, StreamingMergeEqualsBatch) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto corpus = random_corpus(rng, 2 + static_cast<int>(rng() % 20));
    const std::size_t cut = 1 + rng() % (corpus.size() - 1);
    auto left = accumulate(std::span(corpus).subspan(0, cut));
    left.merge(accumulate(std::span(corpus).subspan(cut)));
    EXPECT_EQ(left.report(), accumulate(corpus).report());
  }
}

TEST(Metrics, InstanceRateIsOneMinusPrecision) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto corpus = random_corpus(rng, 1 + static_cast<int>(rng() % 20));
    if (accumulate(corpus).mentions() == 0) continue;
    EXPECT_NEAR(chair_instance(corpus), 1.0 - precision_oracle(corpus), 1e-12);
  }
}

TEST(Metrics, RatesStayInUnitInterval) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = accumulate(random_corpus(rng, static_cast<int>(rng() % 10))).report();
    for (double x : {r.c_instance, r.c_sentence, r.recall}) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Captions, ReadWriteRoundTrip) {
  std::vector<CaptionRecord> recs{{"a", "A cat."}, {"b", "Quote \" and\nnewline"}};
  std::stringstream s;
  write_captions(s, recs);
  EXPECT_EQ(read_captions(s), recs);
}

TEST(Captions, MalformedLineIsNamed) {
  try {
    load_captions(kData + "/bad_captions.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
    EXPECT_NE(e.detail().find("line 3"), std::string::npos) << e.detail();
  }
  EXPECT_TRUE(load_captions(kData + "/empty_captions.jsonl").empty());
  EXPECT_THROW(load_captions(kData + "/missing.jsonl"), Error);
}

TEST(Captions, UnknownImageIsRejected) {
  auto ann = AnnotationSet::load(kData + "/four_annotations.json");
  std::vector<CaptionRecord> recs{{"zzz", "A cat."}};
  LexiconExtractor ex(Lexicon::load(kData + "/lexicon.txt"));
  EXPECT_THROW(evaluate_captions(recs, ann, ex), Error);
}

TEST(Benchmark, TwoImageFixture) {
  auto ann = AnnotationSet::load(kData + "/annotations.json");
  auto lex = Lexicon::load(*ann.lexicon_path);
  auto canon = ann.canonicalized(lex);
  canon.records.erase(std::remove_if(canon.records.begin(), canon.records.end(),
                                     [](const AnnotationRecord& r) { return r.image_ref == "img-empty"; }),
                      canon.records.end());
  auto tree = std::make_shared<FixtureTree>(FixtureTree::load(kData + "/tree.json"));
  BackendSet set;
  set.generator = tree;
  set.scorer = std::make_shared<FixtureScorer>(FixtureScorer::from_tree(*tree));
  set.extractor = std::make_shared<LexiconExtractor>(lex);
  auto run = run_benchmark_detailed(make_dataset(canon, "Describe"), params(2), {1.0, 0.5}, set, 0);
  // Both images decode to "A cat."; img-1 has 4 objects, img-2 has {cat, mat}.
  ASSERT_EQ(run.results.size(), 2u);
  for (const auto& r : run.results) EXPECT_EQ(r.final_text, "A cat.");
  EXPECT_EQ(run.report.captions_evaluated, 2);
  EXPECT_DOUBLE_EQ(run.report.c_instance, 0.0);
  EXPECT_DOUBLE_EQ(run.report.c_sentence, 0.0);
  EXPECT_DOUBLE_EQ(run.report.recall, 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(run.report.avg_length, 2.0);
  // Per episode: 2 generate calls + 3 score calls; tokens 2 + 2 + 1.
  EXPECT_EQ(run.report.compute_proxy, (ComputeProxy{10, 10}));
}

TEST(Benchmark, EmptyDataset) {
  auto world = small_world();
  std::vector<DatasetItem> none;
  auto r = run_benchmark(none, params(2), {0.5, 0.5}, sim_set(world), 1);
  EXPECT_EQ(r, MetricsReport{});
}

TEST(Benchmark, KOneIsTheUnguidedBaseline) {
  auto world = small_world();
  auto data = sim_dataset(*world);
  auto a = run_benchmark_detailed(data, params(1), {0.0, 0.5}, sim_set(world), 8);
  auto b = run_benchmark_detailed(data, params(1), {1.0, 0.5}, sim_set(world), 8);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) EXPECT_EQ(a.results[i].final_text, b.results[i].final_text);
  EXPECT_EQ(a.report.c_instance, b.report.c_instance);
  EXPECT_EQ(a.report.recall, b.report.recall);
}

TEST(Benchmark, EpisodeSeedsAreSplitFromBase) {
  auto world = small_world(3);
  auto data = sim_dataset(*world);
  auto set = sim_set(world);
  auto run = run_benchmark_detailed(data, params(3), {0.5, 0.5}, set, 42);
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(run.results[i], decode_episode(data[i].context, params(3), {0.5, 0.5}, set, episode_seed(42, i)));
  }
}

TEST(Benchmark, ThreadCountDoesNotChangeResults) {
  auto world = small_world(8);
  auto data = sim_dataset(*world);
  BenchmarkOptions serial, parallel;
  parallel.threads = 4;
  parallel.decode.parallel_scoring = true;
  auto a = run_benchmark_detailed(data, params(4), {0.5, 0.5}, sim_set(world), 3, serial);
  auto b = run_benchmark_detailed(data, params(4), {0.5, 0.5}, sim_set(world), 3, parallel);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.results, b.results);
}

TEST(Benchmark, GeneratedTokensGrowWithK) {
  auto world = small_world();
  auto data = sim_dataset(*world);
  std::int64_t last = 0;
  for (int k : {1, 2, 4, 8}) {
    auto r = run_benchmark(data, params(k), {0.5, 0.5}, sim_set(world), 4);
    EXPECT_GE(r.compute_proxy.total_generated_tokens, last) << "k=" << k;
    last = r.compute_proxy.total_generated_tokens;
  }
}

TEST(Benchmark, ErrorsNameTheImage) {
  auto ann = AnnotationSet::load(kData + "/annotations.json");
  std::vector<DatasetItem> data{{{"img-404", "Describe"}, {"img-404", {}}}};
  auto tree = std::make_shared<FixtureTree>(FixtureTree::load(kData + "/tree.json"));
  BackendSet set;
  set.generator = tree;
  set.detector = std::make_shared<FixtureDetector>(ann);
  set.embedder = std::make_shared<TableEmbedder>(TableEmbedder::load(kData + "/embeddings.txt"));
  set.extractor = std::make_shared<LexiconExtractor>(Lexicon::load(kData + "/lexicon.txt"));
  try {
    run_benchmark(data, params(2), {0.0, 0.5}, set, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendFailure);
    EXPECT_EQ(e.cause(), ErrorCode::UnknownImage);
    EXPECT_EQ(e.detail().rfind("img-404: ", 0), 0u) << e.detail();
  }
}

TEST(Sweep, GridOrderAndSize) {
  auto world = small_world(3);
  auto data = sim_dataset(*world);
  SweepGrid grid{{0.0, 0.5, 1.0}, {1, 5}, {SentencePeriod::every(1)}};
  std::size_t calls = 0;
  auto rows = run_sweep(data, grid, params(1), {0.5, 0.5}, sim_set(world), 9, {},
                        [&](std::size_t done, std::size_t total, const SweepRow&) {
                          EXPECT_EQ(done, ++calls);
                          EXPECT_EQ(total, 6u);
                        });
  ASSERT_EQ(rows.size(), 6u);
  std::size_t i = 0;
  for (double w : grid.w) {
    for (int k : grid.k) {
      EXPECT_EQ(rows[i].w, w);
      EXPECT_EQ(rows[i].k, k);
      ++i;
    }
  }
}

TEST(Sweep, SingleCellEqualsBenchmark) {
  auto world = small_world(4);
  auto data = sim_dataset(*world);
  SweepGrid grid{{0.25}, {3}, {SentencePeriod::infinity()}};
  auto rows = run_sweep(data, grid, params(1), {0.9, 0.5}, sim_set(world), 12);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].metrics,
            run_benchmark(data, params(3, SentencePeriod::infinity()), {0.25, 0.5}, sim_set(world), 12));
}

TEST(Sweep, InvalidGridsFailBeforeRunning) {
  auto world = small_world(2);
  auto data = sim_dataset(*world);
  int calls = 0;
  auto progress = [&](std::size_t, std::size_t, const SweepRow&) { ++calls; };
  SweepGrid empty{{}, {1}, {SentencePeriod::every(1)}};
  EXPECT_THROW(run_sweep(data, empty, params(1), {0.5, 0.5}, sim_set(world), 0, {}, progress), Error);
  SweepGrid bad{{0.5}, {1, 0}, {SentencePeriod::every(1)}};
  EXPECT_THROW(run_sweep(data, bad, params(1), {0.5, 0.5}, sim_set(world), 0, {}, progress), Error);
  SweepGrid bad_w{{0.5, 2.0}, {1}, {SentencePeriod::every(1)}};
  EXPECT_THROW(run_sweep(data, bad_w, params(1), {0.5, 0.5}, sim_set(world), 0, {}, progress), Error);
  EXPECT_EQ(calls, 0);
}

TEST(Csv, Format) {
  MetricsReport m{0.25, 0.5, 2.0 / 3.0, 12.0, 4, {100, 37}};
  std::vector<SweepRow> rows{{0.5, 5, SentencePeriod::infinity(), m}, {1.0, 10, SentencePeriod::every(2), m}};
  EXPECT_EQ(format_csv(rows),
            "w,k,T,c_instance,c_sentence,recall,avg_length,total_generated_tokens,total_backend_calls\n"
            "0.500000,5,inf,0.250000,0.500000,0.666667,12.000000,100,37\n"
            "1.000000,10,2,0.250000,0.500000,0.666667,12.000000,100,37\n");
}

TEST(Csv, EmitIsByteDeterministic) {
  auto world = small_world(3);
  auto data = sim_dataset(*world);
  SweepGrid grid{{0.0, 1.0}, {2}, {SentencePeriod::every(1), SentencePeriod::infinity()}};
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = (dir / "mrgd_eval_a.csv").string(), b = (dir / "mrgd_eval_b.csv").string();
  emit_csv(run_sweep(data, grid, params(1), {0.5, 0.5}, sim_set(world), 6), a);
  emit_csv(run_sweep(data, grid, params(1), {0.5, 0.5}, sim_set(world), 6), b);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto text = slurp(a);
  EXPECT_EQ(text, slurp(b));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Csv, Errors) {
  std::vector<SweepRow> none;
  try {
    emit_csv(none, "/tmp/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
  std::vector<SweepRow> one{{}};
  try {
    emit_csv(one, "/nonexistent-dir/x.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}
