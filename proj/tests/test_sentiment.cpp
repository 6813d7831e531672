#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace opdial;
using namespace opdial::testing;

namespace {

// Surface-token span of the first occurrence of `words` (space separated).
TokenSpan find_span(const ParseTree& t, const std::string& words) {
  auto want = token_texts(surface_tokens(words));
  for (std::size_t i = 0; i + want.size() <= t.tokens.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < want.size(); ++k) ok = ok && t.tokens[i + k].text == want[k];
    if (ok) return {i, i + want.size()};
  }
  return {0, 0};
}

SentimentClass classify_text(const std::string& text, const std::string& entity) {
  ClauseSplitParser p;
  LexiconSentimentAnnotator lex;
  auto tree = p.parse(text);
  auto span = find_span(*tree, entity);
  auto units = segment_clauses(*tree, {{"e", span}});
  for (const auto& u : units)
    if (!u.entities.empty()) return argmax(lex.annotate(*tree, u, span));
  return SentimentClass::neutral;
}

class NeverParses : public ParseProvider {
 public:
  std::optional<ParseTree> parse(std::string_view) const override { return std::nullopt; }
};

class ThrowingAnnotator : public SentimentAnnotator {
 public:
  SentimentDistribution annotate(const ParseTree&, const ClauseUnit&, TokenSpan) const override {
    throw Error("annotator down");
  }
};

class FixedAnnotator : public SentimentAnnotator {
 public:
  explicit FixedAnnotator(SentimentClass c) : c_(c) {}
  SentimentDistribution annotate(const ParseTree&, const ClauseUnit&, TokenSpan) const override {
    SentimentDistribution d{};
    d[static_cast<std::size_t>(c_)] = 1.0;
    return d;
  }

 private:
  SentimentClass c_;
};

Corpus single(const std::string& text, OpinionScale strength, EntityRef e, MatchTable& t) {
  Dialogue d;
  d.id = "d";
  d.movie_id = "m";
  d.profile_a.movie = d.profile_b.movie = movie_ref("m", "M");
  d.profile_a.opinions = {{e, strength}};
  d.utterances.push_back({Speaker::A, text, 0, {}});
  auto toks = word_tokens(text);
  auto want = token_texts(word_tokens(e.surface));
  for (std::size_t i = 0; i + want.size() <= toks.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < want.size(); ++k) ok = ok && toks[i + k].text == want[k];
    if (ok) t["d"].push_back({e, 0, {i, i + want.size()}, MatchMethod::exact, 1.0});
  }
  return Corpus{{d}};
}

}  // namespace

TEST(Placeholders, NoMatchesLeavesTextUnchanged) {
  auto s = substitute_placeholders("i loved it", {});
  EXPECT_EQ(s.text, "i loved it");
  EXPECT_TRUE(s.entries.empty());
}

TEST(Placeholders, MovieMentionBecomesPlaceholderTitle) {
  EntityRef fc = movie_ref("fight_club", "Fight Club");
  auto s = substitute_placeholders("fight clb was ok", {{fc, 0, {0, 2}, MatchMethod::jaccard_levenshtein, 0.9}});
  EXPECT_EQ(s.text, "Pulp Fiction was ok");
  ASSERT_EQ(s.entries.size(), 1u);
  EXPECT_EQ(s.entries[0].entity.id, "fight_club");
  EXPECT_EQ(invert(s), "Fight Club was ok");
  EXPECT_EQ(restore(s), "fight clb was ok");
}

TEST(Placeholders, RepeatedEntityReusesNameAndPoolsExtend) {
  std::vector<EntityMatch> ms;
  for (int i = 0; i < 5; ++i)
    ms.push_back({person_ref("p" + std::to_string(i), "x"), 0, {std::size_t(i), std::size_t(i + 1)},
                  MatchMethod::exact, 1.0});
  ms.push_back({person_ref("p0", "x"), 0, {5, 6}, MatchMethod::exact, 1.0});
  auto s = substitute_placeholders("a b c d e f", ms);
  EXPECT_EQ(s.text, "Peter Pan John Smith Mary Jones Tom Brown Peter Pan 2 Peter Pan");
  EXPECT_EQ(restore(s), "a b c d e f");
}

TEST(Placeholders, OverlapsRejected) {
  EntityRef e = movie_ref("m", "M");
  EXPECT_THROW(substitute_placeholders("a b c", {{e, 0, {0, 2}, MatchMethod::exact, 1}, {e, 0, {1, 3}, MatchMethod::exact, 1}}),
               Error);
}

TEST(Clauses, ContrastSplitsIntoTwoUnits) {
  ClauseSplitParser p;
  auto tree = p.parse("I like Pulp Fiction but Peter Pan is bad");
  ASSERT_TRUE(tree);
  auto units = segment_clauses(*tree, {{"m", find_span(*tree, "Pulp Fiction")}, {"p", find_span(*tree, "Peter Pan")}});
  ASSERT_EQ(units.size(), 2u);
  EXPECT_EQ(units[0].entities, std::vector<std::string>{"m"});
  EXPECT_EQ(units[1].entities, std::vector<std::string>{"p"});
}

TEST(Clauses, SingleEntityGivesOneUnit) {
  ClauseSplitParser p;
  auto tree = p.parse("Pulp Fiction is a film");
  auto units = segment_clauses(*tree, {{"m", find_span(*tree, "Pulp Fiction")}});
  ASSERT_EQ(units.size(), 1u);
  EXPECT_EQ(units[0].entities.size(), 1u);
}

TEST(Clauses, ThreeEntitiesNeverShareAUnit) {
  ClauseSplitParser p;
  for (const std::string text : {"Comedy Drama Horror", "Comedy and Drama and Horror are fine",
                                 "I saw Comedy, Drama, Horror"}) {
    auto tree = p.parse(text);
    ASSERT_TRUE(tree);
    auto units = segment_clauses(*tree, {{"a", find_span(*tree, "Comedy")},
                                         {"b", find_span(*tree, "Drama")},
                                         {"c", find_span(*tree, "Horror")}});
    EXPECT_GE(units.size(), 2u) << text;
    std::set<std::string> all;
    for (const auto& u : units) {
      EXPECT_LE(u.entities.size(), 2u) << text;
      all.insert(u.entities.begin(), u.entities.end());
    }
    EXPECT_EQ(all.size(), 3u) << text;
  }
}

TEST(Clauses, TextWithoutWordsIsUnparseable) {
  ClauseSplitParser p;
  EXPECT_FALSE(p.parse("?!").has_value());
}

TEST(Lexicon, PolarityNegationAndIntensifiers) {
  EXPECT_EQ(classify_text("Pulp Fiction is good", "Pulp Fiction"), SentimentClass::positive);
  EXPECT_EQ(classify_text("Pulp Fiction is really good", "Pulp Fiction"), SentimentClass::very_positive);
  EXPECT_EQ(classify_text("Pulp Fiction is not good", "Pulp Fiction"), SentimentClass::negative);
  EXPECT_EQ(classify_text("Pulp Fiction isn't bad", "Pulp Fiction"), SentimentClass::positive);
  EXPECT_EQ(classify_text("Pulp Fiction is a film", "Pulp Fiction"), SentimentClass::neutral);
}

TEST(Adherence, SameSignMatchesOppositeSignErrs) {
  CharTrigramEmbedder emb;
  ClauseSplitParser p;
  EntityRef m = movie_ref("m", "Pulp Fiction");
  MatchTable t1, t2;
  auto c1 = single("I love Pulp Fiction", OpinionScale::favorite, m, t1);
  auto r1 = check_adherence(c1, t1, p, FixedAnnotator(SentimentClass::very_positive));
  EXPECT_EQ(r1.total, (AdherenceTally{1, 0, 0}));
  auto c2 = single("I love Pulp Fiction", OpinionScale::really_dont_like, m, t2);
  auto r2 = check_adherence(c2, t2, p, FixedAnnotator(SentimentClass::positive));
  EXPECT_EQ(r2.total, (AdherenceTally{0, 1, 0}));
  EXPECT_EQ(r2.by_kind["movie"].errors, 1u);
}

TEST(Adherence, DontKnowIsExcluded) {
  ClauseSplitParser p;
  MatchTable t;
  auto c = single("Pulp Fiction is good", OpinionScale::dont_know, movie_ref("m", "Pulp Fiction"), t);
  auto r = check_adherence(c, t, p, LexiconSentimentAnnotator());
  EXPECT_EQ(r.considered, 0u);
  EXPECT_EQ(r.excluded_no_opinion, 1u);
}

TEST(Adherence, UnparseableAndFailuresAreCounted) {
  MatchTable t;
  auto c = single("Pulp Fiction is good", OpinionScale::like, movie_ref("m", "Pulp Fiction"), t);
  auto r1 = check_adherence(c, t, NeverParses(), LexiconSentimentAnnotator());
  EXPECT_EQ(r1.skipped_unparseable, 1u);
  auto r2 = check_adherence(c, t, ClauseSplitParser(), ThrowingAnnotator());
  EXPECT_EQ(r2.annotator_failures, 1u);
  ASSERT_EQ(r2.log.size(), 1u);
  EXPECT_NE(r2.log[0].find("annotator down"), std::string::npos);
}

TEST(Adherence, AccuracyUndefinedWithoutDecisions) {
  AdherenceTally t;
  EXPECT_FALSE(t.accuracy().has_value());
  t.neutral = 2;
  EXPECT_FALSE(t.accuracy().has_value());
  EXPECT_DOUBLE_EQ(*t.accuracy_with_neutral(), 0.0);
}

TEST(Adherence, FixtureMatchesHandComputation) {
  Corpus c = ingest(source_dir() / "tests/data/adherence_fixture.json");
  CharTrigramEmbedder emb;
  auto matches = resolve_corpus(c, emb);
  auto r = check_adherence(c, matches, ClauseSplitParser(), LexiconSentimentAnnotator());
  auto hand = hand_tallies(c);
  EXPECT_EQ(r.total, hand.total);
  for (const char* k : {"movie", "person", "other"}) EXPECT_EQ(r.by_kind[k], hand.by_kind[k]) << k;
  EXPECT_EQ(r.excluded_no_opinion, hand.excluded);

  EXPECT_EQ(r.total, (AdherenceTally{67, 6, 4}));
  EXPECT_EQ(r.by_kind["movie"], (AdherenceTally{37, 3, 4}));
  EXPECT_EQ(r.by_kind["person"], (AdherenceTally{26, 3, 0}));
  EXPECT_EQ(r.by_kind["other"], (AdherenceTally{4, 0, 0}));
  EXPECT_EQ(r.considered, 77u);
  EXPECT_EQ(r.excluded_no_opinion, 9u);
  EXPECT_DOUBLE_EQ(*r.total.accuracy(), 67.0 / 73.0);
  EXPECT_DOUBLE_EQ(*r.total.accuracy_with_neutral(), 67.0 / 77.0);
}

TEST(Adherence, ConservationOnFixture) {
  Corpus c = ingest(source_dir() / "tests/data/adherence_fixture.json");
  CharTrigramEmbedder emb;
  auto r = check_adherence(c, resolve_corpus(c, emb), ClauseSplitParser(), LexiconSentimentAnnotator());
  EXPECT_EQ(r.total.matches + r.total.errors + r.total.neutral, r.considered);
  EXPECT_EQ(r.considered + r.excluded_no_opinion, r.units.size());
}

TEST(Labels, EmittedDeterministically) {
  Corpus c = ingest(source_dir() / "tests/data/adherence_fixture.json");
  CharTrigramEmbedder emb;
  auto m = resolve_corpus(c, emb);
  auto r1 = check_adherence(c, m, ClauseSplitParser(), LexiconSentimentAnnotator());
  auto r2 = check_adherence(c, m, ClauseSplitParser(), LexiconSentimentAnnotator());
  auto l1 = emit_sentiment_labels(c, r1.units), l2 = emit_sentiment_labels(c, r2.units);
  EXPECT_EQ(l1, l2);
  std::size_t labels = 0;
  for (const auto& d : l1.dialogues)
    for (const auto& u : d.utterances) labels += u.sentiment_labels.size();
  EXPECT_EQ(labels, r1.units.size());
}

TEST(Labels, UnitLabelLandsOnItsUtterance) {
  Corpus c;
  Dialogue d;
  d.id = "d";
  d.utterances = {{Speaker::A, "hello there", 0, {}}, {Speaker::B, "x is good", 1, {}}};
  c.dialogues.push_back(d);
  auto out = emit_sentiment_labels(c, {{"d", 1, "x", SentimentClass::positive}});
  EXPECT_TRUE(out.dialogues[0].utterances[0].sentiment_labels.empty());
  EXPECT_EQ(out.dialogues[0].utterances[1].sentiment_labels,
            (std::vector<SentimentLabel>{{"x", SentimentClass::positive}}));
}

TEST(Coref, FirstAndSecondPersonChainsDropped) {
  std::vector<CorefChain> chains = {{movie_ref("m", "M"), {{0, {0, 1}, "it"}}},
                                    {person_ref("p", "P"), {{0, {0, 1}, "you"}}}};
  auto kept = drop_first_second_person(chains);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].entity.id, "m");
}

TEST(AnnotatorProtocol, ServerAnswersParseAndSentiment) {
  ClauseSplitParser p;
  auto tree = p.parse("Pulp Fiction is great");
  auto units = segment_clauses(*tree, {{"m", {0, 2}}});
  std::stringstream in, out;
  in << Json({{"version", 1}, {"op", "parse"}, {"text", "Pulp Fiction is great"}}).dump() << "\n";
  in << sentiment_request(*tree, units[0], {0, 2}).dump() << "\n";
  in << "not json\n";
  serve_annotator(in, out);
  std::string line;
  std::getline(out, line);
  auto parsed = tree_from_json(Json::parse(line));
  ASSERT_TRUE(parsed);
  EXPECT_EQ(tree_to_json(parsed), tree_to_json(tree));
  std::getline(out, line);
  auto dist = Json::parse(line).at("distribution").get<std::vector<double>>();
  ASSERT_EQ(dist.size(), 5u);
  EXPECT_EQ(std::max_element(dist.begin(), dist.end()) - dist.begin(), 4);
  std::getline(out, line);
  EXPECT_TRUE(Json::parse(line).contains("error"));
}

TEST(AnnotatorProtocol, ExternalAnnotatorMatchesBuiltIn) {
  Corpus c = ingest(source_dir() / "tests/data/adherence_fixture.json");
  CharTrigramEmbedder emb;
  auto m = resolve_corpus(c, emb);
  ExternalAnnotator ext(std::string(OPDIAL_CLI) + " annotator-server");
  auto a = check_adherence(c, m, ext, ext);
  auto b = check_adherence(c, m, ClauseSplitParser(), LexiconSentimentAnnotator());
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.considered, b.considered);
}
