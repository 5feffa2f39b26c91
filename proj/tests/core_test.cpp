// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "mrgd/core.hpp"

using namespace mrgd;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

template <class Fn>
std::string detail_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.detail();
  }
  return "<none>";
}

}  // namespace

TEST(GuidanceConfig, AcceptsDefaults) {
  GuidanceConfig cfg{1.0, 0.5};
  EXPECT_NO_THROW(validate_guidance_config(cfg));
  cfg.w = 0.0;
  EXPECT_NO_THROW(validate_guidance_config(cfg));
}

TEST(GuidanceConfig, RejectsOutOfRangeWeight) {
  GuidanceConfig cfg{1.5, 0.5};
  EXPECT_EQ(code_of([&] { validate_guidance_config(cfg); }), ErrorCode::OutOfRange);
  EXPECT_EQ(detail_of([&] { validate_guidance_config(cfg); }), "w");
}

TEST(GuidanceConfig, FirstViolatedFieldIsReported) {
  GuidanceConfig cfg{-0.1, 2.0};
  EXPECT_EQ(detail_of([&] { validate_guidance_config(cfg); }), "w");
  cfg.w = 0.3;
  EXPECT_EQ(detail_of([&] { validate_guidance_config(cfg); }), "tau");
  cfg.tau = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(detail_of([&] { validate_guidance_config(cfg); }), "tau");
}

TEST(GenerationParams, TableOneSettingsValidate) {
  GenerationParams p;
  p.k = 30;
  p.T = SentencePeriod::every(1);
  p.temperature = 1.0;
  EXPECT_NO_THROW(validate_generation_params(p));
  p.k = 5;
  p.T = SentencePeriod::infinity();
  EXPECT_NO_THROW(validate_generation_params(p));
}

TEST(GenerationParams, FieldOrderOfErrors) {
  GenerationParams p;
  p.k = 0;
  p.T = SentencePeriod::every(0);
  p.temperature = -1;
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "k");
  p.k = 1;
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "T");
  p.T = SentencePeriod::every(2);
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "temperature");
  p.temperature = 0.0;
  p.max_total_tokens = 0;
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "max_total_tokens");
  p.max_total_tokens = 1;
  p.max_iterations = 0;
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "max_iterations");
  p.max_iterations = 1;
  EXPECT_NO_THROW(validate_generation_params(p));
}

TEST(GenerationParams, InfiniteTemperatureRejected) {
  GenerationParams p;
  p.temperature = std::numeric_limits<double>::infinity();
  EXPECT_EQ(detail_of([&] { validate_generation_params(p); }), "temperature");
}

TEST(SentencePeriod, ParsesIntegersAndInfinity) {
  EXPECT_EQ(SentencePeriod::parse("3"), SentencePeriod::every(3));
  EXPECT_TRUE(SentencePeriod::parse("inf").is_infinite());
  EXPECT_TRUE(SentencePeriod::parse("INFINITY").is_infinite());
  EXPECT_EQ(SentencePeriod::infinity().to_string(), "inf");
  EXPECT_EQ(SentencePeriod::every(4).to_string(), "4");
  EXPECT_EQ(code_of([] { SentencePeriod::parse("two"); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { SentencePeriod::parse("1.5"); }), ErrorCode::Parse);
  EXPECT_NE(SentencePeriod::every(1), SentencePeriod::infinity());
}

TEST(HalEnums, RoundTrip) {
  EXPECT_EQ(parse_hal_normalization(to_string(HalNormalization::MinMax)), HalNormalization::MinMax);
  EXPECT_EQ(parse_hal_scope(to_string(HalScope::LastChunk)), HalScope::LastChunk);
  EXPECT_EQ(code_of([] { parse_hal_scope("middle"); }), ErrorCode::Parse);
}

TEST(PartialResponse, ConcatenatesSelectedChunks) {
  PartialResponse r;
  r.append({"A cat.", false, 2});
  r.append({" A dog.", false, 2});
  EXPECT_EQ(r.text(), "A cat. A dog.");
  EXPECT_EQ(r.chunks_selected(), 2);
  EXPECT_FALSE(r.finished());
  r.append({"", true, 1});
  EXPECT_TRUE(r.finished());
  EXPECT_THROW(r.append({"more", false, 1}), std::logic_error);
}

TEST(ErrorType, FormatsCodeAndDetail) {
  Error e(ErrorCode::OutOfRange, "w");
  EXPECT_STREQ(e.what(), "OUT_OF_RANGE(w)");
  Error wrapped(ErrorCode::BackendFailure, "iteration 2: x", ErrorCode::Transport);
  EXPECT_EQ(wrapped.cause(), ErrorCode::Transport);
  EXPECT_TRUE(is_config_error(ErrorCode::Parse));
  EXPECT_FALSE(is_config_error(ErrorCode::UnknownImage));
}

TEST(SeedStream, SameSeedSameDraws) {
  SeedStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(SeedStream, SplitIsAPureFunctionOfParentKeyAndTag) {
  SeedStream parent(7);
  SeedStream advanced(7);
  for (int i = 0; i < 10; ++i) advanced.next();
  EXPECT_EQ(parent.split(3).seed(), advanced.split(3).seed());
  EXPECT_NE(parent.split(3).seed(), parent.split(4).seed());
  EXPECT_NE(SeedStream(1).split(0).seed(), SeedStream(2).split(0).seed());
}

TEST(SeedStream, SplitSeedsDoNotCollideOverManyTags) {
  std::set<std::uint64_t> seeds;
  SeedStream root(0);
  for (std::uint64_t i = 0; i < 10000; ++i) seeds.insert(root.split(i).seed());
  EXPECT_EQ(seeds.size(), 10000u);
}

TEST(SeedStream, UniformAndIndexStayInRange) {
  SeedStream s(99);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ASSERT_LT(s.index(7), 7u);
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}
