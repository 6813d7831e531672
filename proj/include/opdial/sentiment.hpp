#pragma once

// Opinion adherence: entity mentions are replaced by annotator-friendly
// placeholder names, each sentence is cut into clause units holding at most
// two entities, every unit gets a five-class sentiment, and that sentiment is
// compared with the speaker's profile opinion on the entity.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/process.hpp"
#include "opdial/resolution.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

// ---------------------------------------------------------------------------
// Placeholder substitution

struct PlaceholderEntry {
  std::string placeholder;
  EntityRef entity;
  std::size_t begin = 0;  // byte range of the placeholder in the substituted text
  std::size_t end = 0;
  std::string original;   // replaced source text
};

struct Substitution {
  std::string text;
  std::vector<PlaceholderEntry> entries;  // in text order
};

namespace detail {

inline const std::vector<std::string>& placeholder_pool(EntityKind k) {
  static const std::map<EntityKind, std::vector<std::string>> pools = {
      {EntityKind::movie, {"Pulp Fiction", "Forrest Gump", "Fight Club", "Star Wars"}},
      {EntityKind::person, {"Peter Pan", "John Smith", "Mary Jones", "Tom Brown"}},
      {EntityKind::genre, {"Comedy", "Drama", "Horror", "Western"}},
      {EntityKind::country, {"France", "Canada", "Italy", "Japan"}},
      {EntityKind::other, {"Paris", "London", "Berlin", "Madrid"}},
  };
  return pools.at(k);
}

}  // namespace detail

// Replaces every matched span (word-token spans of `utterance`) with a
// placeholder name for its entity kind. A repeated entity reuses its
// placeholder. Overlapping matches are rejected.
inline Substitution substitute_placeholders(std::string_view utterance,
                                            std::vector<EntityMatch> matches) {
  auto tokens = word_tokens(utterance);
  std::sort(matches.begin(), matches.end(),
            [](const auto& a, const auto& b) { return a.span.begin < b.span.begin; });
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].span.end > tokens.size() || matches[i].span.begin >= matches[i].span.end)
      throw Error("substitute_placeholders: match span out of bounds");
    if (i && matches[i - 1].span.overlaps(matches[i].span))
      throw Error("substitute_placeholders: overlapping matches");
  }
  std::map<std::string, std::string> assigned;
  std::map<EntityKind, std::size_t> used;
  Substitution out;
  std::size_t cursor = 0;
  for (const auto& m : matches) {
    std::size_t b = tokens[m.span.begin].begin, e = tokens[m.span.end - 1].end;
    out.text.append(utterance.substr(cursor, b - cursor));
    auto it = assigned.find(m.entity.id);
    if (it == assigned.end()) {
      const auto& pool = detail::placeholder_pool(m.entity.kind);
      std::size_t k = used[m.entity.kind]++;
      std::string name = pool[k % pool.size()];
      if (k >= pool.size()) name += " " + std::to_string(k / pool.size() + 1);
      it = assigned.emplace(m.entity.id, name).first;
    }
    PlaceholderEntry entry{it->second, m.entity, out.text.size(), 0, std::string(utterance.substr(b, e - b))};
    out.text += it->second;
    entry.end = out.text.size();
    out.entries.push_back(std::move(entry));
    cursor = e;
  }
  out.text.append(utterance.substr(cursor));
  return out;
}

namespace detail {

inline std::string replace_entries(const Substitution& s, bool canonical) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& e : s.entries) {
    out.append(s.text, cursor, e.begin - cursor);
    out += canonical ? e.entity.surface : e.original;
    cursor = e.end;
  }
  out.append(s.text, cursor);
  return out;
}

}  // namespace detail

// Placeholders back to canonical entity surfaces.
inline std::string invert(const Substitution& s) { return detail::replace_entries(s, true); }

// Placeholders back to the exact source text.
inline std::string restore(const Substitution& s) { return detail::replace_entries(s, false); }

// ---------------------------------------------------------------------------
// Parsing and clause units

struct ParseNode {
  enum class Label { sentence, clause, fraction };
  Label label = Label::sentence;
  std::size_t begin = 0;  // surface-token range
  std::size_t end = 0;
  std::vector<ParseNode> children;
};

struct ParseTree {
  std::vector<Token> tokens;  // surface_tokens of the sentence text
  std::vector<ParseNode> sentences;
};

class ParseProvider {
 public:
  virtual ~ParseProvider() = default;
  // nullopt when the text cannot be parsed.
  virtual std::optional<ParseTree> parse(std::string_view text) const = 0;
};

// Punctuation / conjunction splitter. Sentences end at . ! ?; clauses start
// at contrastive or subordinating conjunctions and end at ';'; fractions
// inside a clause are separated by ',' and by 'and' / 'or'.
class ClauseSplitParser : public ParseProvider {
 public:
  std::optional<ParseTree> parse(std::string_view text) const override {
    ParseTree tree;
    tree.tokens = surface_tokens(text);
    bool any_word = false;
    for (const auto& t : tree.tokens)
      any_word = any_word || detail::is_word_byte(static_cast<unsigned char>(t.text[0]));
    if (!any_word) return std::nullopt;

    static const std::set<std::string> clause_openers = {
        "but", "although", "though", "while", "whereas", "because", "however", "yet", "unless", "except"};
    static const std::set<std::string> fraction_openers = {"and", "or"};

    const auto& toks = tree.tokens;
    std::size_t i = 0;
    while (i < toks.size()) {
      ParseNode sentence{ParseNode::Label::sentence, i, i, {}};
      ParseNode clause{ParseNode::Label::clause, i, i, {}};
      ParseNode fraction{ParseNode::Label::fraction, i, i, {}};
      auto close_fraction = [&](std::size_t at) {
        fraction.end = at;
        if (fraction.end > fraction.begin) clause.children.push_back(fraction);
        fraction = {ParseNode::Label::fraction, at, at, {}};
      };
      auto close_clause = [&](std::size_t at) {
        close_fraction(at);
        clause.end = at;
        if (!clause.children.empty()) {
          clause.begin = clause.children.front().begin;
          sentence.children.push_back(clause);
        }
        clause = {ParseNode::Label::clause, at, at, {}};
      };
      for (; i < toks.size(); ++i) {
        const std::string& t = toks[i].text;
        std::string low = to_lower(t);
        if (t == "." || t == "!" || t == "?") {
          ++i;
          while (i < toks.size() && (toks[i].text == "." || toks[i].text == "!" || toks[i].text == "?")) ++i;
          break;
        }
        if (t == ";") {
          close_clause(i + 1);
          continue;
        }
        if (t == ",") {
          close_fraction(i + 1);
          continue;
        }
        if (clause_openers.count(low) && i > clause.begin) {
          close_clause(i);
        } else if (fraction_openers.count(low) && i > fraction.begin) {
          close_fraction(i);
        }
      }
      close_clause(i);
      sentence.end = i;
      if (!sentence.children.empty()) tree.sentences.push_back(std::move(sentence));
    }
    return tree;
  }
};

struct EntitySpan {
  std::string entity_id;
  TokenSpan span;  // surface-token range in the parse tree
};

struct ClauseUnit {
  int utterance_index = 0;
  TokenSpan span;                          // surface-token range
  std::vector<std::string> entities;       // distinct, at most two
  std::vector<EntitySpan> mentions;        // entity occurrences inside the unit
};

// Smallest clauses are collected from the tree; their fractions are merged
// left to right while the merged unit holds at most two distinct entities.
// A single fraction with more than two entities is cut before the third.
inline std::vector<ClauseUnit> segment_clauses(const ParseTree& tree, const std::vector<EntitySpan>& entities,
                                               int utterance_index = 0) {
  std::vector<ClauseUnit> out;

  auto mentions_in = [&](std::size_t b, std::size_t e) {
    std::vector<EntitySpan> ms;
    for (const auto& x : entities)
      if (x.span.begin >= b && x.span.begin < e) ms.push_back(x);
    std::sort(ms.begin(), ms.end(), [](const auto& a, const auto& c) { return a.span.begin < c.span.begin; });
    return ms;
  };
  auto distinct = [](const std::vector<EntitySpan>& ms) {
    std::vector<std::string> ids;
    for (const auto& m : ms)
      if (std::find(ids.begin(), ids.end(), m.entity_id) == ids.end()) ids.push_back(m.entity_id);
    return ids;
  };

  std::vector<const ParseNode*> clauses;
  std::function<void(const ParseNode&)> collect = [&](const ParseNode& n) {
    bool has_clause_child = false;
    for (const auto& c : n.children) has_clause_child = has_clause_child || c.label != ParseNode::Label::fraction;
    if (n.label != ParseNode::Label::fraction && !has_clause_child && n.label == ParseNode::Label::clause) {
      clauses.push_back(&n);
      return;
    }
    if (n.label == ParseNode::Label::sentence && n.children.empty()) {
      clauses.push_back(&n);
      return;
    }
    for (const auto& c : n.children)
      if (c.label != ParseNode::Label::fraction) collect(c);
  };
  for (const auto& s : tree.sentences) collect(s);

  for (const ParseNode* clause : clauses) {
    // Fractions, with over-full ones cut at the third distinct entity.
    std::vector<TokenSpan> pieces;
    std::vector<TokenSpan> fractions;
    if (clause->children.empty()) {
      fractions.push_back({clause->begin, clause->end});
    } else {
      for (const auto& f : clause->children) fractions.push_back({f.begin, f.end});
    }
    for (const auto& f : fractions) {
      std::size_t start = f.begin;
      std::vector<std::string> ids;
      for (const auto& m : mentions_in(f.begin, f.end)) {
        if (std::find(ids.begin(), ids.end(), m.entity_id) != ids.end()) continue;
        if (ids.size() == 2) {
          pieces.push_back({start, m.span.begin});
          start = m.span.begin;
          ids.clear();
        }
        ids.push_back(m.entity_id);
      }
      pieces.push_back({start, f.end});
    }
    std::optional<TokenSpan> cur;
    for (const auto& p : pieces) {
      if (!cur) {
        cur = p;
        continue;
      }
      TokenSpan merged{cur->begin, p.end};
      if (distinct(mentions_in(merged.begin, merged.end)).size() <= 2) {
        cur = merged;
      } else {
        auto ms = mentions_in(cur->begin, cur->end);
        out.push_back({utterance_index, *cur, distinct(ms), ms});
        cur = p;
      }
    }
    if (cur) {
      auto ms = mentions_in(cur->begin, cur->end);
      out.push_back({utterance_index, *cur, distinct(ms), ms});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sentiment annotation

using SentimentDistribution = std::array<double, 5>;

inline SentimentClass argmax(const SentimentDistribution& d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] > d[best]) best = i;
  return kAllSentiments[best];
}

class SentimentAnnotator {
 public:
  virtual ~SentimentAnnotator() = default;
  // Sentiment of `unit` towards the entity occurrence `entity`.
  virtual SentimentDistribution annotate(const ParseTree& tree, const ClauseUnit& unit,
                                         TokenSpan entity) const = 0;
};

// Polarity lexicon over a +-4 token window around the entity, clipped to the
// unit. Negators flip and intensifiers strengthen the next polar word.
class LexiconSentimentAnnotator : public SentimentAnnotator {
 public:
  explicit LexiconSentimentAnnotator(std::size_t window = 4) : window_(window) {}

  SentimentDistribution annotate(const ParseTree& tree, const ClauseUnit& unit,
                                 TokenSpan entity) const override {
    std::size_t b = entity.begin > unit.span.begin + window_ ? entity.begin - window_ : unit.span.begin;
    std::size_t e = std::min(unit.span.end, entity.end + window_);
    int score = 0;
    int negate_left = 0;
    int boost = 0;
    for (std::size_t i = b; i < e; ++i) {
      if (i >= entity.begin && i < entity.end) continue;
      bool inside_other = false;
      for (const auto& m : unit.mentions)
        inside_other = inside_other || (i >= m.span.begin && i < m.span.end);
      if (inside_other) continue;
      std::string w = to_lower(tree.tokens[i].text);
      if (is_negator(w)) {
        negate_left = 3;
        continue;
      }
      if (intensifiers().count(w)) {
        boost = 1;
        continue;
      }
      auto it = lexicon().find(w);
      if (it != lexicon().end()) {
        int v = it->second;
        if (boost) v += v > 0 ? 1 : -1;
        if (negate_left > 0) v = -v;
        score += v;
        negate_left = 0;
        boost = 0;
        continue;
      }
      if (negate_left > 0) --negate_left;
    }
    int cls = score <= -2 ? 0 : score == -1 ? 1 : score == 0 ? 2 : score == 1 ? 3 : 4;
    SentimentDistribution d{};
    double z = 0;
    for (int k = 0; k < 5; ++k) {
      d[k] = k == cls ? 4.0 : 1.0 / (1 + std::abs(k - cls));
      z += d[k];
    }
    for (auto& x : d) x /= z;
    return d;
  }

  static const std::unordered_map<std::string, int>& lexicon() {
    static const std::unordered_map<std::string, int> words = {
        {"like", 1},       {"liked", 1},         {"likes", 1},        {"enjoy", 1},
        {"enjoyed", 1},    {"enjoys", 1},        {"good", 1},         {"nice", 1},
        {"fun", 1},        {"funny", 1},         {"cool", 1},         {"interesting", 1},
        {"beautiful", 1},  {"impressive", 1},    {"recommend", 1},    {"classic", 1},
        {"decent", 1},     {"solid", 1},         {"entertaining", 1}, {"talented", 1},
        {"love", 2},       {"loved", 2},         {"loves", 2},        {"great", 2},
        {"awesome", 2},    {"amazing", 2},       {"excellent", 2},    {"fantastic", 2},
        {"favorite", 2},   {"favourite", 2},     {"best", 2},         {"brilliant", 2},
        {"wonderful", 2},  {"masterpiece", 2},   {"adore", 2},        {"perfect", 2},
        {"incredible", 2}, {"outstanding", 2},   {"superb", 2},       {"genius", 2},
        {"hilarious", 2},  {"clever", 1},       {"dislike", -1},
        {"disliked", -1},  {"bad", -1},          {"boring", -1},      {"dull", -1},
        {"annoying", -1},  {"stupid", -1},       {"overrated", -1},   {"disappointing", -1},
        {"disappointed", -1}, {"mediocre", -1},  {"weak", -1},        {"poor", -1},
        {"lame", -1},      {"meh", -1},          {"silly", -1},       {"slow", -1},
        {"hate", -2},      {"hated", -2},        {"hates", -2},       {"terrible", -2},
        {"awful", -2},     {"horrible", -2},     {"worst", -2},       {"waste", -2},
        {"sucks", -2},     {"trash", -2},        {"garbage", -2},     {"unwatchable", -2},
    };
    return words;
  }

  static const std::set<std::string>& intensifiers() {
    static const std::set<std::string> words = {"really", "very", "so", "absolutely", "totally",
                                                "truly", "extremely", "super"};
    return words;
  }

  static bool is_negator(const std::string& w) {
    static const std::set<std::string> words = {"not", "no", "never", "nothing", "neither", "nor",
                                                "hardly", "cannot"};
    if (words.count(w)) return true;
    return w.size() > 3 && w.compare(w.size() - 3, 3, "n't") == 0;
  }

 private:
  std::size_t window_;
};

// ---------------------------------------------------------------------------
// Coreference

struct CorefMention {
  int utterance_index = 0;
  TokenSpan span;  // word-token span
  std::string text;
};

struct CorefChain {
  EntityRef entity;
  std::vector<CorefMention> mentions;
};

class CorefProvider {
 public:
  virtual ~CorefProvider() = default;
  virtual std::vector<CorefChain> chains(const Dialogue& d, const std::vector<EntityMatch>& matches) const = 0;
};

// Chains that contain a first- or second-person pronoun are dropped.
inline std::vector<CorefChain> drop_first_second_person(std::vector<CorefChain> chains) {
  static const std::set<std::string> pronouns = {"i",    "me",   "my",   "mine",  "myself", "we",
                                                 "us",   "our",  "ours", "ourselves", "you", "your",
                                                 "yours", "yourself", "yourselves"};
  std::erase_if(chains, [](const CorefChain& c) {
    for (const auto& m : c.mentions)
      if (pronouns.count(to_lower(m.text))) return true;
    return false;
  });
  return chains;
}

// ---------------------------------------------------------------------------
// Adherence

struct AdherenceTally {
  std::size_t matches = 0;
  std::size_t errors = 0;
  std::size_t neutral = 0;

  // nullopt when matches + errors == 0.
  std::optional<double> accuracy() const {
    if (matches + errors == 0) return std::nullopt;
    return double(matches) / double(matches + errors);
  }
  // Neutral sentiments counted as non-conforming.
  std::optional<double> accuracy_with_neutral() const {
    if (matches + errors + neutral == 0) return std::nullopt;
    return double(matches) / double(matches + errors + neutral);
  }
  AdherenceTally& operator+=(const AdherenceTally& o) {
    matches += o.matches;
    errors += o.errors;
    neutral += o.neutral;
    return *this;
  }
  bool operator==(const AdherenceTally&) const = default;
};

struct LabeledUnit {
  std::string dialogue_id;
  int utterance_index = 0;
  std::string entity_id;
  SentimentClass sentiment = SentimentClass::neutral;
};

struct AdherenceReport {
  std::map<std::string, AdherenceTally> by_kind;  // movie / person / other
  AdherenceTally total;
  std::size_t considered = 0;          // (unit, entity) pairs compared with an opinion
  std::size_t excluded_no_opinion = 0; // no opinion or dont_know
  std::size_t skipped_unparseable = 0;
  std::size_t annotator_failures = 0;
  std::vector<LabeledUnit> units;
  std::vector<std::string> log;
};

inline std::string_view adherence_bucket(EntityKind k) {
  if (k == EntityKind::movie) return "movie";
  if (k == EntityKind::person) return "person";
  return "other";
}

inline AdherenceReport check_adherence(const Corpus& corpus, const MatchTable& matches,
                                       const ParseProvider& parser, const SentimentAnnotator& annotator,
                                       const CorefProvider* coref = nullptr) {
  AdherenceReport r;
  for (const char* k : {"movie", "person", "other"}) r.by_kind[k] = {};
  for (const auto& d : corpus.dialogues) {
    auto mit = matches.find(d.id);
    if (mit == matches.end()) throw Error("check_adherence: no matches for dialogue '" + d.id + "'");
    std::vector<EntityMatch> all = mit->second;
    if (coref) {
      for (const auto& chain : drop_first_second_person(coref->chains(d, all)))
        for (const auto& m : chain.mentions) {
          EntityMatch em{chain.entity, m.utterance_index, m.span, MatchMethod::exact, 1.0};
          bool clash = false;
          for (const auto& x : all)
            clash = clash || (x.utterance_index == em.utterance_index && x.span.overlaps(em.span));
          if (!clash) all.push_back(em);
        }
    }
    for (const auto& u : d.utterances) {
      std::vector<EntityMatch> ms;
      for (const auto& m : all)
        if (m.utterance_index == u.index) ms.push_back(m);
      if (ms.empty()) continue;

      struct Pending {
        std::string entity_id;
        EntityKind kind;
        SentimentClass sentiment;
      };
      std::vector<Pending> pending;
      try {
        Substitution sub = substitute_placeholders(u.text, ms);
        auto tree = parser.parse(sub.text);
        if (!tree) {
          ++r.skipped_unparseable;
          continue;
        }
        std::vector<EntitySpan> spans;
        std::map<std::string, EntityKind> kinds;
        for (const auto& e : sub.entries) {
          TokenSpan ts{tree->tokens.size(), 0};
          for (std::size_t i = 0; i < tree->tokens.size(); ++i)
            if (tree->tokens[i].begin >= e.begin && tree->tokens[i].end <= e.end) {
              ts.begin = std::min(ts.begin, i);
              ts.end = i + 1;
            }
          if (ts.end > ts.begin) spans.push_back({e.entity.id, ts});
          kinds[e.entity.id] = e.entity.kind;
        }
        for (const auto& unit : segment_clauses(*tree, spans, u.index)) {
          for (const auto& id : unit.entities) {
            TokenSpan first{};
            for (const auto& m : unit.mentions)
              if (m.entity_id == id) {
                first = m.span;
                break;
              }
            pending.push_back({id, kinds[id], argmax(annotator.annotate(*tree, unit, first))});
          }
        }
      } catch (const std::exception& e) {
        ++r.annotator_failures;
        r.log.push_back(d.id + "#" + std::to_string(u.index) + ": " + e.what());
        continue;
      }
      const Profile& profile = d.profile(u.speaker);
      for (const auto& p : pending) {
        r.units.push_back({d.id, u.index, p.entity_id, p.sentiment});
        const Opinion* op = profile.opinion_for(p.entity_id);
        if (!op || op->strength == OpinionScale::dont_know) {
          ++r.excluded_no_opinion;
          continue;
        }
        ++r.considered;
        AdherenceTally& t = r.by_kind[std::string(adherence_bucket(p.kind))];
        int s = sign(p.sentiment);
        if (s == 0)
          ++t.neutral;
        else if (s == sign(op->strength))
          ++t.matches;
        else
          ++t.errors;
      }
    }
  }
  for (const auto& [k, t] : r.by_kind) r.total += t;
  return r;
}

// Replaces every utterance's sentiment labels with the labels from `units`,
// in unit order.
inline Corpus emit_sentiment_labels(Corpus corpus, const std::vector<LabeledUnit>& units) {
  std::map<std::pair<std::string, int>, std::vector<SentimentLabel>> by_utt;
  for (const auto& u : units) by_utt[{u.dialogue_id, u.utterance_index}].push_back({u.entity_id, u.sentiment});
  for (auto& d : corpus.dialogues)
    for (auto& u : d.utterances) {
      auto it = by_utt.find({d.id, u.index});
      u.sentiment_labels = it == by_utt.end() ? std::vector<SentimentLabel>{} : it->second;
    }
  return corpus;
}

inline Json to_json(const AdherenceTally& t) {
  auto opt = [](std::optional<double> v) { return v ? Json(*v) : Json(nullptr); };
  return {{"matches", t.matches},
          {"errors", t.errors},
          {"neutral", t.neutral},
          {"accuracy", opt(t.accuracy())},
          {"accuracy_with_neutral", opt(t.accuracy_with_neutral())}};
}

inline Json to_json(const AdherenceReport& r) {
  Json kinds = Json::object();
  for (const auto& [k, t] : r.by_kind) kinds[k] = to_json(t);
  return {{"by_kind", kinds},
          {"total", to_json(r.total)},
          {"considered", r.considered},
          {"excluded_no_opinion", r.excluded_no_opinion},
          {"skipped_unparseable", r.skipped_unparseable},
          {"annotator_failures", r.annotator_failures},
          {"log", r.log}};
}

// ---------------------------------------------------------------------------
// External annotator over a line-delimited JSON protocol.
//
//   -> {"version":1,"op":"parse","text":"..."}
//   <- {"version":1,"tokens":[{"text","begin","end"}...],
//       "sentences":[{"label":"sentence","begin":0,"end":5,"children":[...]}]}
//      or {"version":1,"tree":null} when unparseable
//   -> {"version":1,"op":"sentiment","text":"<unit text>","entity":[b,e]}
//   <- {"version":1,"distribution":[p0,p1,p2,p3,p4]}

inline constexpr int kAnnotatorProtocolVersion = 1;

namespace detail {

inline std::string_view to_string(ParseNode::Label l) {
  switch (l) {
    case ParseNode::Label::sentence: return "sentence";
    case ParseNode::Label::clause: return "clause";
    case ParseNode::Label::fraction: return "fraction";
  }
  return "sentence";
}

inline ParseNode::Label parse_label(std::string_view s) {
  if (s == "sentence") return ParseNode::Label::sentence;
  if (s == "clause") return ParseNode::Label::clause;
  if (s == "fraction") return ParseNode::Label::fraction;
  throw ProtocolError("unknown parse label '" + std::string(s) + "'");
}

inline Json node_to_json(const ParseNode& n) {
  Json children = Json::array();
  for (const auto& c : n.children) children.push_back(node_to_json(c));
  return {{"label", to_string(n.label)}, {"begin", n.begin}, {"end", n.end}, {"children", children}};
}

inline ParseNode node_from_json(const Json& j) {
  ParseNode n;
  n.label = parse_label(j.at("label").get<std::string>());
  n.begin = j.at("begin").get<std::size_t>();
  n.end = j.at("end").get<std::size_t>();
  if (j.contains("children"))
    for (const auto& c : j["children"]) n.children.push_back(node_from_json(c));
  return n;
}

inline void check_version(const Json& j) {
  if (!j.contains("version") || j["version"] != kAnnotatorProtocolVersion)
    throw ProtocolError("annotator response has missing or unsupported version");
  if (j.contains("error")) throw ProtocolError("annotator error: " + j["error"].get<std::string>());
}

}  // namespace detail

inline Json tree_to_json(const std::optional<ParseTree>& tree) {
  if (!tree) return {{"version", kAnnotatorProtocolVersion}, {"tree", nullptr}};
  Json toks = Json::array(), sents = Json::array();
  for (const auto& t : tree->tokens) toks.push_back({{"text", t.text}, {"begin", t.begin}, {"end", t.end}});
  for (const auto& s : tree->sentences) sents.push_back(detail::node_to_json(s));
  return {{"version", kAnnotatorProtocolVersion}, {"tokens", toks}, {"sentences", sents}};
}

inline std::optional<ParseTree> tree_from_json(const Json& j) {
  detail::check_version(j);
  if (j.contains("tree") && j["tree"].is_null()) return std::nullopt;
  ParseTree t;
  try {
    for (const auto& tok : j.at("tokens"))
      t.tokens.push_back({tok.at("text").get<std::string>(), tok.at("begin").get<std::size_t>(),
                          tok.at("end").get<std::size_t>()});
    for (const auto& s : j.at("sentences")) t.sentences.push_back(detail::node_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad parse response: ") + e.what());
  }
  return t;
}

// Unit text as sent to an external annotator, with the entity position given
// as a token range relative to the unit.
inline Json sentiment_request(const ParseTree& tree, const ClauseUnit& unit, TokenSpan entity) {
  std::vector<std::string> words;
  for (std::size_t i = unit.span.begin; i < unit.span.end; ++i) words.push_back(tree.tokens[i].text);
  std::string text = join(words);
  return {{"version", kAnnotatorProtocolVersion},
          {"op", "sentiment"},
          {"text", text},
          {"tokens", words},
          {"entity", {entity.begin - unit.span.begin, entity.end - unit.span.begin}}};
}

class ExternalAnnotator : public ParseProvider, public SentimentAnnotator {
 public:
  explicit ExternalAnnotator(const std::string& command) : proc_(std::make_unique<LineProcess>(command)) {}

  std::optional<ParseTree> parse(std::string_view text) const override {
    Json req = {{"version", kAnnotatorProtocolVersion}, {"op", "parse"}, {"text", text}};
    return tree_from_json(call(req));
  }

  SentimentDistribution annotate(const ParseTree& tree, const ClauseUnit& unit, TokenSpan entity) const override {
    Json resp = call(sentiment_request(tree, unit, entity));
    try {
      auto v = resp.at("distribution").get<std::vector<double>>();
      if (v.size() != 5) throw ProtocolError("sentiment distribution must have 5 entries");
      SentimentDistribution d{};
      std::copy(v.begin(), v.end(), d.begin());
      return d;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("bad sentiment response: ") + e.what());
    }
  }

 private:
  Json call(const Json& req) const {
    std::string line = proc_->request(req.dump());
    Json resp;
    try {
      resp = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("annotator sent invalid JSON: ") + e.what());
    }
    detail::check_version(resp);
    return resp;
  }

  std::unique_ptr<LineProcess> proc_;
};

// Serves the annotator protocol with the built-in parser and lexicon, one
// request per line. Malformed requests get an error reply.
inline void serve_annotator(std::istream& in, std::ostream& out) {
  ClauseSplitParser parser;
  LexiconSentimentAnnotator lexicon;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    Json reply;
    try {
      Json req = Json::parse(line);
      if (req.value("version", 0) != kAnnotatorProtocolVersion) throw ProtocolError("unsupported version");
      std::string op = req.at("op").get<std::string>();
      if (op == "parse") {
        reply = tree_to_json(parser.parse(req.at("text").get<std::string>()));
      } else if (op == "sentiment") {
        ParseTree tree;
        std::size_t pos = 0;
        for (const auto& w : req.at("tokens")) {
          std::string s = w.get<std::string>();
          tree.tokens.push_back({s, pos, pos + s.size()});
          pos += s.size() + 1;
        }
        ClauseUnit unit;
        unit.span = {0, tree.tokens.size()};
        TokenSpan ent{req.at("entity").at(0).get<std::size_t>(), req.at("entity").at(1).get<std::size_t>()};
        unit.mentions.push_back({"", ent});
        auto d = lexicon.annotate(tree, unit, ent);
        reply = {{"version", kAnnotatorProtocolVersion}, {"distribution", d}};
      } else {
        throw ProtocolError("unknown op '" + op + "'");
      }
    } catch (const std::exception& e) {
      reply = {{"version", kAnnotatorProtocolVersion}, {"error", e.what()}};
    }
    out << reply.dump() << "\n" << std::flush;
  }
}

}  // namespace opdial
