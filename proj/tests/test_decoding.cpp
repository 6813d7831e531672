#include <gtest/gtest.h>

#include "support.hpp"

using namespace opdial;
using namespace opdial::testing;

namespace {

class FailingClassifier : public FixedScorer {
 public:
  using FixedScorer::FixedScorer;
  std::vector<double> classify(const std::vector<EncodedSample>&) override { throw ProtocolError("down"); }
};

BeamHypothesis hyp(std::vector<int> t, double score) { return {std::move(t), score, score, true}; }

}  // namespace

TEST(LengthPenalty, Values) {
  for (double a : {0.0, 0.3, 0.6, 2.0}) EXPECT_DOUBLE_EQ(length_penalty(1, a), 1.0);
  for (std::size_t n : {1u, 7u, 40u}) EXPECT_DOUBLE_EQ(length_penalty(n, 0.0), 1.0);
  EXPECT_NEAR(length_penalty(13, 0.6), std::pow(3.0, 0.6), 1e-9);
  EXPECT_NEAR(length_penalty(13, 0.6), 1.9332, 1e-4);
  EXPECT_THROW(length_penalty(0, 0.6), Error);
  EXPECT_THROW(length_penalty(3, -0.1), Error);
}

TEST(Trigram, Examples) {
  EXPECT_TRUE(has_repeated_trigram({1, 2, 3, 1, 2, 3}));
  EXPECT_FALSE(has_repeated_trigram({1, 2, 3, 4, 5}));
  EXPECT_FALSE(has_repeated_trigram({1, 1}));
  EXPECT_TRUE(has_repeated_trigram({7, 7, 7, 7}));
}

TEST(Trigram, AgreesWithCounterOnRandomSequences) {
  Rng rng(1);
  std::uniform_int_distribution<int> tok(0, 9);
  for (int i = 0; i < 300; ++i) {
    std::vector<int> t(1000);
    for (auto& x : t) x = tok(rng);
    ASSERT_EQ(has_repeated_trigram(t), repeated_trigram_oracle(t));
  }
  std::uniform_int_distribution<int> wide(0, 5000), len(0, 30);
  for (int i = 0; i < 2000; ++i) {
    std::vector<int> t(static_cast<std::size_t>(len(rng)));
    for (auto& x : t) x = wide(rng) % 40;
    ASSERT_EQ(has_repeated_trigram(t), repeated_trigram_oracle(t));
  }
}

TEST(Beam, ConcentratedScorerIsGreedy) {
  std::vector<double> lp(5, std::log(0.01));
  lp[3] = std::log(0.96);
  FixedScorer s(lp);
  BeamOptions o{4, 0.6, 5, std::nullopt, false};
  auto r = beam_search(toy_context(), s, o);
  EXPECT_EQ(r.hypotheses[0].tokens, (std::vector<int>{3, 3, 3, 3, 3}));
}

TEST(Beam, ExhaustiveBeamEqualsBruteForce) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    int vocab = 2 + static_cast<int>(seed % 4);
    std::size_t len = 2 + seed % 3;
    HashScorer s(vocab, seed, 2);
    std::size_t beam = 1;
    for (std::size_t i = 0; i < len; ++i) beam *= static_cast<std::size_t>(vocab);
    std::optional<int> eos = seed % 2 ? std::optional<int>(0) : std::nullopt;
    BeamOptions o{beam, 0.6, len, eos, false};
    auto r = beam_search(toy_context(), s, o);
    auto best = exhaustive_best([&](const std::vector<int>& g) { return s.logprobs_for(g); }, vocab, len, eos, 0.6);
    EXPECT_EQ(r.hypotheses[0].tokens, best.tokens) << "seed " << seed;
    EXPECT_DOUBLE_EQ(r.hypotheses[0].normalized_score, best.normalized_score);
  }
}

TEST(Beam, ContextFreeScorerNeedsOnlyVocabBeam) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::normal_distribution<double> n(0, 2);
    std::vector<double> z(5);
    for (auto& v : z) v = n(rng);
    FixedScorer s(log_softmax(z));
    BeamOptions o{5, 0.6, 6, std::nullopt, false};
    auto r = beam_search(toy_context(), s, o);
    auto best = exhaustive_best([&](const std::vector<int>&) { return log_softmax(z); }, 5, 6, std::nullopt, 0.6);
    EXPECT_EQ(r.hypotheses[0].tokens, best.tokens);
  }
}

TEST(Beam, NarrowBeamCanMissOptimum) {
  bool missed = false;
  for (std::uint64_t seed = 0; seed < 200 && !missed; ++seed) {
    HashScorer s(4, seed, 2, 3.0);
    auto r = beam_search(toy_context(), s, {1, 0.6, 4, std::nullopt, false});
    auto best = exhaustive_best([&](const std::vector<int>& g) { return s.logprobs_for(g); }, 4, 4, std::nullopt, 0.6);
    missed = r.hypotheses[0].tokens != best.tokens;
  }
  EXPECT_TRUE(missed);
}

TEST(Beam, EosFinishesAndCountsInLength) {
  std::vector<double> lp = {std::log(0.9), std::log(0.05), std::log(0.05)};
  FixedScorer s(lp);
  auto r = beam_search(toy_context(), s, {3, 0.6, 4, 0, false});
  ASSERT_FALSE(r.hypotheses.empty());
  EXPECT_EQ(r.hypotheses[0].tokens, std::vector<int>{0});
  EXPECT_TRUE(r.hypotheses[0].finished);
  EXPECT_DOUBLE_EQ(r.hypotheses[0].normalized_score, std::log(0.9));
  for (const auto& h : r.hypotheses) EXPECT_TRUE(h.finished || h.tokens.size() == 4);
}

TEST(Beam, TrigramFilterBlocksRepeats) {
  std::vector<double> lp(3, std::log(0.1));
  lp[1] = std::log(0.8);
  FixedScorer s(lp);
  auto r = beam_search(toy_context(), s, {3, 0.0, 8, std::nullopt, true});
  for (const auto& h : r.hypotheses) EXPECT_FALSE(has_repeated_trigram(h.tokens));
}

TEST(Beam, AllExpansionsFilteredWarns) {
  FixedScorer s({0.0});
  auto r = beam_search(toy_context(), s, {2, 0.6, 6, std::nullopt, true});
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.hypotheses[0].tokens, (std::vector<int>{0, 0, 0}));
}

TEST(Beam, AlphaOnlyChangesRankingThroughPenalty) {
  std::vector<std::pair<std::size_t, double>> h = {{2, -1.0}, {6, -2.2}, {10, -3.1}};
  auto order = [&](double alpha) {
    std::vector<std::size_t> idx = {0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      return normalized(h[a].second, h[a].first, alpha) > normalized(h[b].second, h[b].first, alpha);
    });
    return idx;
  };
  EXPECT_EQ(order(0.0), (std::vector<std::size_t>{0, 1, 2}));
  for (auto [len, sum] : h) EXPECT_DOUBLE_EQ(normalized(sum, len, 0.6) * length_penalty(len, 0.6), sum);
  EXPECT_NE(order(3.0), order(0.0));
}

TEST(Beam, RejectsBadOptions) {
  FixedScorer s({0.0});
  EXPECT_THROW(beam_search(toy_context(), s, {0, 0.6, 3, std::nullopt, true}), ConfigError);
  EXPECT_THROW(beam_search(toy_context(2, 8), s, {1, 0.6, 6, std::nullopt, true}), Error);
}

TEST(Select, SingleHypothesisAndZeroLambda) {
  auto tok = byte_tokenizer();
  FixedScorer s({0.0}, {5.0, -5.0});
  auto ctx = toy_context(2, 64);
  EXPECT_EQ(select_final({hyp({1}, -1.0)}, ctx, s, tok, 1.0).index, 0u);
  auto r = select_final({hyp({1}, -1.0), hyp({2}, -0.5)}, ctx, s, tok, 0.0);
  EXPECT_EQ(r.index, 1u);
}

TEST(Select, LogitBreaksTies) {
  auto tok = byte_tokenizer();
  FixedScorer s({0.0}, {0.1, 0.7});
  auto r = select_final({hyp({1}, -1.0), hyp({2}, -1.0)}, toy_context(2, 64), s, tok, 1.0);
  EXPECT_EQ(r.index, 1u);
  EXPECT_DOUBLE_EQ(r.scores[1], -1.0 + 0.7);
}

TEST(Select, ClassifierFailureFallsBack) {
  auto tok = byte_tokenizer();
  FailingClassifier s({0.0});
  auto r = select_final({hyp({1}, -2.0), hyp({2}, -1.0)}, toy_context(2, 64), s, tok, 1.0);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.index, 1u);
  EXPECT_NE(r.error.find("down"), std::string::npos);
}
