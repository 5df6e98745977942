// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "eva/core.hpp"
#include "support.hpp"

namespace eva {
namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected eva::Error";
  return ErrorKind::kInvalidInput;
}

TEST(LogitVector, RejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(kind_of([&] { LogitVector({1.0, nan}); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([&] { LogitVector({-inf}); }), ErrorKind::kInvalidInput);
  EXPECT_NO_THROW(LogitVector({-1e300, 1e300}));
}

TEST(Distribution, Validates) {
  EXPECT_NO_THROW(Distribution({0.25, 0.75}));
  EXPECT_THROW(Distribution({0.5, 0.6}), Error);
  EXPECT_THROW(Distribution({-0.1, 1.1}), Error);
  EXPECT_THROW(Distribution(std::vector<double>{}), Error);
}

TEST(Softmax, MatchesReference) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto logits = test::random_logits(g, 1 + trial % 70, 5.0);
    const Distribution d = softmax(logits);
    const auto ref = test::softmax_ref(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      EXPECT_NEAR(d[static_cast<TokenId>(i)], static_cast<double>(ref[i]), 1e-15);
      total += d[static_cast<TokenId>(i)];
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
  }
}

TEST(Softmax, StableForLargeLogits) {
  const Distribution d = softmax(std::vector<double>{1000.0, 999.0, -1000.0});
  EXPECT_NEAR(d[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(d[2], 0.0);
}

TEST(Softmax, Temperature) {
  const std::vector<double> x{1.0, 2.0, 4.0};
  const Distribution hot = softmax(x, 2.0);
  const Distribution ref = softmax(std::vector<double>{0.5, 1.0, 2.0});
  for (TokenId i = 0; i < 3; ++i) EXPECT_NEAR(hot[i], ref[i], 1e-15);
  EXPECT_THROW(softmax(x, 0.0), Error);
}

TEST(LogSumExp, MatchesDirect) {
  const std::vector<double> x{0.1, -2.0, 3.5};
  EXPECT_NEAR(log_sum_exp(x), std::log(std::exp(0.1) + std::exp(-2.0) + std::exp(3.5)), 1e-14);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{800.0, 800.0}), 800.0 + std::log(2.0), 1e-12);
}

TEST(Argmax, LowestIndexOnTies) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0, 2.0}), 1);
  EXPECT_EQ(argmax(std::vector<double>{5.0}), 0);
  EXPECT_EQ(argmax(std::vector<double>{-1.0, -1.0}), 0);
}

TEST(LayerWindow, DefaultFor32Layers) {
  EXPECT_EQ(default_layer_window(32), (LayerWindow{20, 28}));
  EXPECT_EQ(default_layer_window(40), (LayerWindow{25, 35}));
}

TEST(LayerWindow, ClampedForShallowModels) {
  for (std::size_t n = 2; n <= 64; ++n) {
    const LayerWindow w = default_layer_window(n);
    EXPECT_GE(w.lo, 0) << n;
    EXPECT_LE(w.lo, w.hi) << n;
    EXPECT_LE(w.hi, static_cast<LayerIndex>(n) - 2) << n;
  }
  EXPECT_EQ(default_layer_window(2), (LayerWindow{0, 0}));
  EXPECT_THROW(default_layer_window(1), Error);
}

TEST(DecodeConfig, ValidatesFields) {
  DecodeConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = [](auto mutate) {
    DecodeConfig c;
    mutate(c);
    return kind_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](DecodeConfig& c) { c.alpha = -0.1; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.top_p = 0.0; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.top_p = 1.5; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.nucleus_p = 0.0; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.temperature = 0.0; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.beam_width = 0; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](DecodeConfig& c) { c.max_new_tokens = 0; }), ErrorKind::kConfig);
}

TEST(DecodeConfig, ResolvesWindow) {
  DecodeConfig cfg;
  EXPECT_EQ(cfg.resolve_window(32), (LayerWindow{20, 28}));
  cfg.layer_window = LayerWindow{3, 5};
  EXPECT_EQ(cfg.resolve_window(8), (LayerWindow{3, 5}));
  EXPECT_EQ(kind_of([&] { cfg.resolve_window(6); }), ErrorKind::kConfig);  // hi is final layer
  cfg.layer_window = LayerWindow{5, 3};
  EXPECT_EQ(kind_of([&] { cfg.resolve_window(32); }), ErrorKind::kConfig);
}

TEST(DecodeConfig, ParsesNames) {
  EXPECT_EQ(parse_strategy("beam"), Strategy::kBeam);
  EXPECT_EQ(parse_candidate_source("per_layer"), CandidateSource::kPerLayer);
  EXPECT_STREQ(to_string(Strategy::kNucleus), "nucleus");
  EXPECT_EQ(kind_of([] { parse_strategy("sample"); }), ErrorKind::kConfig);
}

TEST(StepTrace, ValidatesShape) {
  std::mt19937_64 g(1);
  StepTrace t = test::random_trace(g, 4, 6);
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.final_layer(), 3);

  StepTrace short_prior = t;
  short_prior.prior_logits.pop_back();
  EXPECT_EQ(kind_of([&] { short_prior.validate(); }), ErrorKind::kSchema);

  StepTrace ragged = t;
  ragged.original_logits[1] = LogitVector(std::vector<double>(5, 0.0));
  EXPECT_EQ(kind_of([&] { ragged.validate(); }), ErrorKind::kSchema);

  StepTrace one = test::random_trace(g, 1, 6);
  EXPECT_EQ(kind_of([&] { one.validate(); }), ErrorKind::kSchema);

  TraceHeader h;
  h.vocab_size = 6;
  h.num_layers = 5;
  h.schema_version = "1";
  h.model_id = "m";
  EXPECT_THROW(t.validate(h), Error);
  h.num_layers = 4;
  EXPECT_NO_THROW(t.validate(h));
}

}  // namespace
}  // namespace eva
