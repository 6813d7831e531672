#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace opdial;
using namespace opdial::testing;

namespace {

// Probability one on the gold token, which it reads off a fixed list of
// samples by prefix length.
class OracleScorer : public ScorerClient {
 public:
  OracleScorer(int vocab, EncodedSample gold) : vocab_(vocab), gold_(std::move(gold)) {}
  std::vector<double> next_token_logprobs(const EncodedSample& prefix) override {
    std::vector<double> lp(static_cast<std::size_t>(vocab_), -std::numeric_limits<double>::infinity());
    lp[static_cast<std::size_t>(gold_.token_ids[prefix.size()])] = 0.0;
    return lp;
  }
  std::vector<double> classify(const std::vector<EncodedSample>& c) override {
    std::vector<double> out;
    for (const auto& s : c) out.push_back(s.token_ids == gold_.token_ids ? 1.0 : 0.0);
    return out;
  }

 private:
  int vocab_;
  EncodedSample gold_;
};

std::vector<EncodedSample> toy_samples(const Tokenizer& tok, Rng& rng, int n) {
  std::vector<EncodedSample> out;
  Profile p;
  p.movie = movie_ref("m", "M");
  p.facts = {{FactKind::trivia, p.movie, "a fact", "m/t/1", "", "", {}}};
  for (int i = 0; i < n; ++i)
    out.push_back(build_sample(p, {{Speaker::A, random_sentence(rng), 0, {}}}, {Speaker::B, random_sentence(rng), 1, {}},
                               tok, {96, PositionMode::restart}));
  return out;
}

}  // namespace

TEST(Perplexity, UniformScorerGivesVocabSize) {
  auto tok = byte_tokenizer();
  Rng rng(1);
  UniformScorer s(16);
  std::vector<EncodedSample> samples = toy_samples(tok, rng, 5);
  for (auto& smp : samples)
    for (auto& t : smp.token_ids) t %= 16;
  auto r = perplexity(samples, s);
  EXPECT_NEAR(r.perplexity, 16.0, 1e-9);
  EXPECT_FALSE(r.error);
}

TEST(Perplexity, CertainScorerGivesOne) {
  auto tok = byte_tokenizer();
  Rng rng(2);
  auto samples = toy_samples(tok, rng, 1);
  OracleScorer s(tok.vocab_size(), samples[0]);
  EXPECT_DOUBLE_EQ(perplexity(samples, s).perplexity, 1.0);
}

TEST(Perplexity, MatchesHandRolledNll) {
  auto tok = byte_tokenizer();
  Rng rng(3);
  auto samples = toy_samples(tok, rng, 4);
  HashScorer s(tok.vocab_size(), 7, 0, 1.0);
  double nll = 0;
  std::size_t n = 0;
  for (const auto& smp : samples)
    for (std::size_t i = 0; i < smp.size(); ++i)
      if (smp.lm_mask[i]) {
        auto lp = s.logprobs_for(std::vector<int>(smp.token_ids.begin(), smp.token_ids.begin() + static_cast<long>(i)));
        double z = 0;
        for (double v : lp) z += std::exp(v);
        nll -= std::log(std::exp(lp[static_cast<std::size_t>(smp.token_ids[i])]) / z);
        ++n;
      }
  EXPECT_NEAR(perplexity(samples, s).perplexity, std::exp(nll / static_cast<double>(n)), 1e-9);
}

TEST(Perplexity, SampleWithoutTargetsRejected) {
  EncodedSample s;
  s.push(1, 1, 0, false);
  UniformScorer u(4);
  EXPECT_THROW(perplexity({s}, u), Error);
}

TEST(Hits, RankIsPessimisticOnTies) {
  EXPECT_EQ(gold_rank({0.5, 0.5, 0.1}, 0), 2u);
  EXPECT_EQ(gold_rank({0.9, 0.5, 0.1}, 0), 1u);
  EXPECT_TRUE(hits_at_n({0.1, 0.2, 0.3, 0.4}, 1, 3));
  EXPECT_FALSE(hits_at_n({0.1, 0.2, 0.3, 0.4}, 0, 3));
}

TEST(Hits, HigherCutoffNeverLower) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> l(20);
    for (auto& x : l) x = std::round(u(rng) * 10) / 10;
    std::size_t g = static_cast<std::size_t>(i % 20);
    EXPECT_LE(hits_at_n(l, g, 1), hits_at_n(l, g, 3));
  }
}

TEST(Evaluate, PerfectScorerHitsOne) {
  Rng rng(5);
  Corpus c = synthetic_corpus(1, [](std::size_t) { return 6; }, 4, rng);
  DistractorPool pool(c);
  auto tok = byte_tokenizer();
  auto items = eval_items(c);
  class GoldFirst : public ScorerClient {
   public:
    std::vector<double> next_token_logprobs(const EncodedSample&) override { return {0.0}; }
    std::vector<double> classify(const std::vector<EncodedSample>& c) override {
      std::vector<double> out;
      for (const auto& s : c) out.push_back(static_cast<double>(s.label) == static_cast<double>(out.size()) ? 1.0 : 0.0);
      return out;
    }
  } scorer;
  EvalOptions o;
  o.distractors = 5;
  o.compute_perplexity = false;
  auto r = evaluate(items, pool, scorer, tok, rng, o);
  EXPECT_EQ(r.n_samples, items.size());
  EXPECT_DOUBLE_EQ(r.hits_at[1], 1.0);
}

TEST(Evaluate, ShortPoolItemsAreSkipped) {
  Rng rng(6);
  Corpus c = synthetic_corpus(2, [](std::size_t m) { return m == 0 ? 2 : 8; }, 4, rng);
  DistractorPool pool(c);
  auto tok = byte_tokenizer();
  UniformScorer s(tok.vocab_size(), 1);
  EvalOptions o;
  o.distractors = 5;
  auto r = evaluate(eval_items(c), pool, s, tok, rng, o);
  EXPECT_EQ(r.skipped, 6u);
  EXPECT_EQ(r.n_samples, 24u);
  ASSERT_TRUE(r.perplexity);
  EXPECT_NEAR(*r.perplexity, tok.vocab_size(), 1e-6);
}

TEST(Scorer, LogprobValidation) {
  EXPECT_NO_THROW(check_logprobs({std::log(0.5), std::log(0.5)}));
  EXPECT_THROW(check_logprobs({std::log(0.5), std::log(0.4)}), ProtocolError);
  EXPECT_THROW(check_logprobs({}), ProtocolError);
  EXPECT_THROW(check_logprobs({0.0}, 2), ProtocolError);
}

TEST(Scorer, InProcessProtocolRoundTrip) {
  UniformScorer impl(8, 3);
  ProtocolScorer client([&](const std::string& line) {
    std::stringstream in(line + "\n"), out;
    serve_scorer(in, out, impl);
    std::string reply;
    std::getline(out, reply);
    return reply;
  });
  EncodedSample s;
  s.push(1, 1, 0, true);
  auto lp = client.next_token_logprobs(s);
  EXPECT_EQ(lp.size(), 8u);
  EXPECT_EQ(client.classify({s, s, s, s}).size(), 4u);
}

TEST(Scorer, ServerSurvivesMalformedRequests) {
  UniformScorer impl(4);
  std::stringstream in, out;
  in << "garbage\n{\"version\":1,\"op\":\"dance\"}\n{\"version\":2,\"op\":\"logprobs\"}\n"
     << Json({{"version", 1}, {"op", "classify"}, {"samples", Json::array()}}).dump() << "\n";
  serve_scorer(in, out, impl);
  std::vector<Json> replies;
  for (std::string line; std::getline(out, line);) replies.push_back(Json::parse(line));
  ASSERT_EQ(replies.size(), 4u);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(replies[i].contains("error"));
  EXPECT_TRUE(replies[3]["logits"].empty());
}

TEST(Scorer, ClientRejectsBadReplies) {
  EncodedSample s;
  s.push(1, 1, 0, true);
  ProtocolScorer bad_json([](const std::string&) { return std::string("nope"); });
  EXPECT_THROW(bad_json.next_token_logprobs(s), ProtocolError);
  ProtocolScorer wrong_count([](const std::string&) { return std::string(R"({"version":1,"logits":[1]})"); });
  EXPECT_THROW(wrong_count.classify({s, s}), ProtocolError);
  ProtocolScorer err([](const std::string&) { return std::string(R"({"version":1,"error":"x"})"); });
  EXPECT_THROW(err.classify({s}), ProtocolError);
}

TEST(Scorer, SubprocessStubServesUniform) {
  SubprocessScorer s(std::string(OPDIAL_CLI) + " stub-scorer --vocab 32 --seed 4");
  EncodedSample p;
  p.push(3, 1, 0, true);
  auto lp = s.next_token_logprobs(p);
  ASSERT_EQ(lp.size(), 32u);
  EXPECT_NEAR(lp[0], -std::log(32.0), 1e-12);
  EXPECT_EQ(s.classify({p, p, p, p}).size(), 4u);
}
