#pragma once

// Profile-entity mention detection. Every n-gram of an utterance is compared
// against each target surface with a three-tier cascade: lowercase exact
// match, embedding cosine similarity, and a combined edit-distance /
// character-set Jaccard rule. Person names can additionally be proposed by an
// external NER and matched with the same metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "opdial/corpus_io.hpp"
#include "opdial/error.hpp"
#include "opdial/string_metrics.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

enum class MatchMethod { exact, cosine, jaccard_levenshtein, external_ner };

inline std::string_view to_string(MatchMethod m) {
  switch (m) {
    case MatchMethod::exact: return "exact";
    case MatchMethod::cosine: return "cosine";
    case MatchMethod::jaccard_levenshtein: return "jaccard_levenshtein";
    case MatchMethod::external_ner: return "external_ner";
  }
  return "exact";
}

inline MatchMethod parse_match_method(std::string_view s) {
  if (s == "exact") return MatchMethod::exact;
  if (s == "cosine") return MatchMethod::cosine;
  if (s == "jaccard_levenshtein") return MatchMethod::jaccard_levenshtein;
  if (s == "external_ner") return MatchMethod::external_ner;
  throw SchemaError("unknown match method '" + std::string(s) + "'");
}

// Spans index word_tokens() of the utterance text.
struct EntityMatch {
  EntityRef entity;
  int utterance_index = 0;
  TokenSpan span;
  MatchMethod method = MatchMethod::exact;
  double score = 1.0;

  bool operator==(const EntityMatch&) const = default;
};

// dialogue id -> matches
using MatchTable = std::map<std::string, std::vector<EntityMatch>>;

// ---------------------------------------------------------------------------
// Embedders

// Sparse vector, sorted by index, no duplicate indices.
using SparseVector = std::vector<std::pair<std::uint32_t, float>>;

inline double cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [i, v] : a) na += double(v) * v;
  for (const auto& [i, v] : b) nb += double(v) * v;
  if (na == 0 || nb == 0) return 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += double(ia->second) * ib->second;
      ++ia;
      ++ib;
    }
  }
  return dot / std::sqrt(na * nb);
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual SparseVector embed(std::string_view text) const = 0;
};

// Character-trigram counts of " text ", hashed into 32-bit buckets.
class CharTrigramEmbedder : public Embedder {
 public:
  SparseVector embed(std::string_view text) const override {
    std::string padded = " " + std::string(text) + " ";
    std::map<std::uint32_t, float> counts;
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
      counts[static_cast<std::uint32_t>(fnv1a64(std::string_view(padded).substr(i, 3)))] += 1.0f;
    return SparseVector(counts.begin(), counts.end());
  }
};

// Proposes person-name spans (over word_tokens of `text`).
class ExternalNer {
 public:
  virtual ~ExternalNer() = default;
  virtual std::vector<TokenSpan> persons(std::string_view text) const = 0;
};

struct ResolveOptions {
  double cosine_threshold = 0.9;
  std::size_t levenshtein_threshold = 3;
  double jaccard_threshold = 0.3;
  // Edit budget is additionally capped at surface_length / this value, so
  // short names only tolerate small typos.
  std::size_t edit_length_ratio = 4;
};

namespace detail {

struct PreparedTarget {
  EntityRef entity;
  std::vector<std::string> tokens;
  std::string norm;
  SparseVector embedding;
  std::set<char> chars;
  std::size_t edit_budget = 0;
};

struct Candidate {
  EntityMatch match;
  int tier = 0;
};

inline std::vector<PreparedTarget> prepare_targets(const std::vector<EntityRef>& targets,
                                                   const Embedder& embedder,
                                                   const ResolveOptions& opts) {
  std::vector<PreparedTarget> out;
  for (const auto& e : targets) {
    PreparedTarget p;
    p.entity = e;
    p.tokens = token_texts(word_tokens(e.surface));
    if (p.tokens.empty()) continue;
    p.norm = join(p.tokens);
    p.embedding = embedder.embed(p.norm);
    p.chars = char_set(p.norm);
    p.edit_budget = std::min(opts.levenshtein_threshold,
                             p.norm.size() / std::max<std::size_t>(opts.edit_length_ratio, 1));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

// Metric cascade for one span text against one prepared target. Returns
// nothing when no tier fires.
inline std::optional<std::pair<MatchMethod, double>> match_span(
    const std::string& span_text, const detail::PreparedTarget& t, const Embedder& embedder,
    const ResolveOptions& opts, std::unordered_map<std::string, SparseVector>& cache) {
  if (span_text == t.norm) return std::pair{MatchMethod::exact, 1.0};
  auto it = cache.find(span_text);
  if (it == cache.end()) it = cache.emplace(span_text, embedder.embed(span_text)).first;
  double cos = cosine(it->second, t.embedding);
  if (cos >= opts.cosine_threshold) return std::pair{MatchMethod::cosine, std::min(cos, 1.0)};
  std::size_t len_diff = span_text.size() > t.norm.size() ? span_text.size() - t.norm.size()
                                                          : t.norm.size() - span_text.size();
  if (len_diff > t.edit_budget) return std::nullopt;
  std::size_t lev = levenshtein(span_text, t.norm);
  if (lev > t.edit_budget) return std::nullopt;
  auto cs = char_set(span_text);
  if (cs.empty() || jaccard_distance(cs, t.chars) > opts.jaccard_threshold) return std::nullopt;
  double denom = static_cast<double>(std::max(span_text.size(), t.norm.size()));
  return std::pair{MatchMethod::jaccard_levenshtein, 1.0 - static_cast<double>(lev) / denom};
}

// Detects mentions of `targets` in every utterance of `dialogue`. Overlapping
// candidates inside one utterance are resolved highest score first, earlier
// span on ties.
inline std::vector<EntityMatch> resolve(const Dialogue& dialogue, const std::vector<EntityRef>& targets,
                                        const Embedder& embedder, const ExternalNer* ner = nullptr,
                                        const ResolveOptions& opts = {}) {
  if (targets.empty()) throw Error("resolve: no targets for dialogue '" + dialogue.id + "'");
  std::vector<detail::PreparedTarget> prepared;
  try {
    prepared = detail::prepare_targets(targets, embedder, opts);
  } catch (const std::exception& e) {
    throw Error("embedder failed on targets of dialogue '" + dialogue.id + "': " + e.what());
  }

  std::vector<EntityMatch> out;
  for (const auto& u : dialogue.utterances) {
    auto tokens = token_texts(word_tokens(u.text));
    std::unordered_map<std::string, SparseVector> cache;
    std::vector<detail::Candidate> cands;
    auto try_span = [&](const detail::PreparedTarget& t, TokenSpan span, bool from_ner) {
      std::vector<std::string> parts(tokens.begin() + span.begin, tokens.begin() + span.end);
      std::string text = join(parts);
      std::optional<std::pair<MatchMethod, double>> m;
      try {
        m = match_span(text, t, embedder, opts, cache);
      } catch (const std::exception& e) {
        throw Error("embedder failed in dialogue '" + dialogue.id + "', utterance " +
                    std::to_string(u.index) + ", span '" + text + "': " + e.what());
      }
      if (!m) return;
      EntityMatch em{t.entity, u.index, span, from_ner ? MatchMethod::external_ner : m->first, m->second};
      cands.push_back({std::move(em), 0});
    };
    for (const auto& t : prepared)
      for (const auto& span : ngram_candidates(tokens.size(), t.tokens.size())) try_span(t, span, false);
    if (ner) {
      for (const auto& span : ner->persons(u.text)) {
        if (span.end > tokens.size() || span.begin >= span.end) continue;
        for (const auto& t : prepared)
          if (t.entity.kind == EntityKind::person) try_span(t, span, true);
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      if (a.match.score != b.match.score) return a.match.score > b.match.score;
      if (a.match.span.begin != b.match.span.begin) return a.match.span.begin < b.match.span.begin;
      return a.match.span.end > b.match.span.end;
    });
    std::vector<EntityMatch> kept;
    for (auto& c : cands) {
      bool clash = false;
      for (const auto& k : kept) clash = clash || k.span.overlaps(c.match.span);
      if (!clash) kept.push_back(std::move(c.match));
    }
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return a.span.begin < b.span.begin; });
    for (auto& k : kept) out.push_back(std::move(k));
  }
  return out;
}

inline MatchTable resolve_corpus(const Corpus& corpus, const Embedder& embedder,
                                 const ExternalNer* ner = nullptr, const ResolveOptions& opts = {}) {
  MatchTable table;
  for (const auto& d : corpus.dialogues) table[d.id] = resolve(d, d.entities(), embedder, ner, opts);
  return table;
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageReport {
  double coverage = 0;
  std::size_t dialogues = 0;
  std::vector<std::string> skipped;  // dialogues without profile entities
  std::map<std::string, double> per_dialogue;
};

// Unweighted mean over dialogues of the fraction of profile entities that
// were matched at least once.
inline CoverageReport coverage(const Corpus& corpus, const MatchTable& matches) {
  CoverageReport r;
  double sum = 0;
  for (const auto& d : corpus.dialogues) {
    auto entities = d.entities();
    if (entities.empty()) {
      r.skipped.push_back(d.id);
      continue;
    }
    auto it = matches.find(d.id);
    if (it == matches.end()) throw Error("coverage: no matches computed for dialogue '" + d.id + "'");
    std::set<std::string> found;
    for (const auto& m : it->second) found.insert(m.entity.id);
    std::size_t hit = 0;
    for (const auto& e : entities) hit += found.count(e.id);
    double frac = static_cast<double>(hit) / static_cast<double>(entities.size());
    r.per_dialogue[d.id] = frac;
    sum += frac;
    ++r.dialogues;
  }
  r.coverage = r.dialogues ? sum / static_cast<double>(r.dialogues) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// NER evaluation

struct MentionRecord {
  std::string dialogue_id;
  int utterance_index = 0;
  TokenSpan span;
  std::string entity_id;
};

struct NerScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline std::vector<MentionRecord> to_records(const MatchTable& table) {
  std::vector<MentionRecord> out;
  for (const auto& [id, ms] : table)
    for (const auto& m : ms) out.push_back({id, m.utterance_index, m.span, m.entity.id});
  return out;
}

// A prediction is correct when some gold mention has the same dialogue,
// utterance and entity and overlaps it by at least one token. Empty
// denominators score 0.
inline NerScores evaluate_ner(const std::vector<MentionRecord>& predicted,
                              const std::vector<MentionRecord>& gold) {
  auto same = [](const MentionRecord& a, const MentionRecord& b) {
    return a.dialogue_id == b.dialogue_id && a.utterance_index == b.utterance_index &&
           a.entity_id == b.entity_id && a.span.overlaps(b.span);
  };
  std::size_t tp_pred = 0, tp_gold = 0;
  for (const auto& p : predicted)
    tp_pred += std::any_of(gold.begin(), gold.end(), [&](const auto& g) { return same(p, g); });
  for (const auto& g : gold)
    tp_gold += std::any_of(predicted.begin(), predicted.end(), [&](const auto& p) { return same(p, g); });
  NerScores s;
  s.precision = predicted.empty() ? 0.0 : double(tp_pred) / double(predicted.size());
  s.recall = gold.empty() ? 0.0 : double(tp_gold) / double(gold.size());
  s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const EntityMatch& m) {
  return {{"entity", to_json(m.entity)},
          {"utterance_index", m.utterance_index},
          {"span", {m.span.begin, m.span.end}},
          {"method", to_string(m.method)},
          {"score", m.score}};
}

inline EntityMatch match_from_json(const Json& j) {
  EntityMatch m;
  m.entity = entity_from_json(detail::require(j, "entity", "match"), "match.entity");
  m.utterance_index = j.at("utterance_index").get<int>();
  m.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
  m.method = parse_match_method(j.at("method").get<std::string>());
  m.score = j.at("score").get<double>();
  return m;
}

inline Json to_json(const MatchTable& t) {
  Json j = Json::object();
  for (const auto& [id, ms] : t) {
    Json arr = Json::array();
    for (const auto& m : ms) arr.push_back(to_json(m));
    j[id] = arr;
  }
  return j;
}

inline MatchTable match_table_from_json(const Json& j) {
  MatchTable t;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto& v = t[it.key()];
      for (const auto& m : it.value()) v.push_back(match_from_json(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("matches: ") + e.what());
  }
  return t;
}

// Gold format: [{"dialogue_id", "utterance_index", "span": [b, e], "entity_id"}]
inline std::vector<MentionRecord> gold_from_json(const Json& j) {
  std::vector<MentionRecord> out;
  try {
    for (const auto& g : j)
      out.push_back({g.at("dialogue_id").get<std::string>(), g.at("utterance_index").get<int>(),
                     {g.at("span").at(0).get<std::size_t>(), g.at("span").at(1).get<std::size_t>()},
                     g.at("entity_id").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("gold: ") + e.what());
  }
  return out;
}

inline Json to_json(const MentionRecord& r) {
  return {{"dialogue_id", r.dialogue_id},
          {"utterance_index", r.utterance_index},
          {"span", {r.span.begin, r.span.end}},
          {"entity_id", r.entity_id}};
}

}  // namespace opdial
