#include <gtest/gtest.h>

#include "criteria.hpp"

using namespace opdial;
using namespace opdial::testing;

TEST(Property, SplitIsMovieDisjointWithTargetFractions) {
  auto r = check_split(10);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, SyntheticMentionsResolve) {
  auto r = check_ner(200, 2000);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, PerturbStaysWithinEditBudget) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto& name = synthetic_people()[static_cast<std::size_t>(i) % synthetic_people().size()];
    int edits = i % 3;
    EXPECT_LE(levenshtein(name, perturb(name, edits, rng)), static_cast<std::size_t>(edits));
  }
}

TEST(Property, AdherenceConservation) {
  auto r = check_adherence_criterion(5);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, BeamMatchesExhaustiveSearch) {
  auto r = check_decoding(20, 2000);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, UniformScorerMetrics) {
  auto r = check_metrics(500);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, EncodingInvariants) {
  auto r = check_encoding(200);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Property, BeamHypothesesSortedAndFiltered) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HashScorer s(5, seed, 2);
    auto r = beam_search(toy_context(), s, {4, 0.6, 8, 4, true});
    for (std::size_t i = 1; i < r.hypotheses.size(); ++i)
      EXPECT_GE(r.hypotheses[i - 1].normalized_score, r.hypotheses[i].normalized_score);
    for (const auto& h : r.hypotheses) {
      EXPECT_FALSE(has_repeated_trigram(h.tokens));
      EXPECT_LE(h.tokens.size(), 8u);
    }
  }
}

TEST(Property, DistractorsNeverRepeatGoldOrDialogue) {
  Rng rng(8);
  Corpus c = synthetic_corpus(3, [](std::size_t m) { return 4 + m; }, 6, rng);
  DistractorPool pool(c);
  for (const auto& item : eval_items(c)) {
    auto r = random_distractors(pool, item.movie_id, item.dialogue_id, item.next.text, 3, rng);
    std::set<std::string> seen = {normalize_words(item.next.text)};
    for (const auto& d : r.distractors) {
      EXPECT_NE(d.dialogue_id, item.dialogue_id);
      EXPECT_TRUE(seen.insert(normalize_words(d.text)).second);
    }
  }
}
