#pragma once

// Wrong candidate utterances for next-utterance classification. Random
// distractors come from other dialogues about the same movie; rule-based
// distractors prefer utterances about the target's entity with a different
// sentiment.

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

inline constexpr std::size_t kMinDistractorTokens = 3;

struct PoolEntry {
  std::string text;
  std::string norm;
  std::string movie_id;
  std::string dialogue_id;
  int utterance_index = 0;
  std::vector<SentimentLabel> labels;
};

class DistractorPool {
 public:
  DistractorPool() = default;

  explicit DistractorPool(const Corpus& corpus) {
    for (const auto& d : corpus.dialogues)
      for (const auto& u : d.utterances) add({u.text, "", d.movie_id, d.id, u.index, u.sentiment_labels});
  }

  // Utterances with fewer than three word tokens are ignored.
  void add(PoolEntry e) {
    if (word_tokens(e.text).size() < kMinDistractorTokens) return;
    e.norm = normalize_words(e.text);
    by_movie_[e.movie_id].push_back(entries_.size());
    entries_.push_back(std::move(e));
  }

  const std::vector<PoolEntry>& entries() const { return entries_; }

  const std::vector<std::size_t>& movie(const std::string& id) const {
    static const std::vector<std::size_t> none;
    auto it = by_movie_.find(id);
    return it == by_movie_.end() ? none : it->second;
  }

  std::vector<std::string> movies() const {
    std::vector<std::string> out;
    for (const auto& [m, v] : by_movie_) out.push_back(m);
    return out;
  }

 private:
  std::vector<PoolEntry> entries_;
  std::map<std::string, std::vector<std::size_t>> by_movie_;
};

// 1: same entity, different sentiment; 2: same entity; 3: random, same
// movie; 4: random, other movie.
struct Distractor {
  std::string text;
  std::string dialogue_id;
  int utterance_index = 0;
  int tier = 3;
};

struct DistractorResult {
  std::vector<Distractor> distractors;
  bool fallback = false;  // other movies had to be used

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    for (const auto& d : distractors) out.push_back(d.text);
    return out;
  }
};

namespace detail {

struct Picker {
  const DistractorPool& pool;
  std::string gold_norm;
  std::size_t k;
  std::set<std::string> taken;
  DistractorResult result;

  bool full() const { return result.distractors.size() >= k; }

  void draw(std::vector<std::size_t> ids, int tier, Rng& rng) {
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t id : ids) {
      if (full()) return;
      const auto& e = pool.entries()[id];
      if (e.norm == gold_norm || taken.count(e.norm)) continue;
      taken.insert(e.norm);
      result.distractors.push_back({e.text, e.dialogue_id, e.utterance_index, tier});
    }
  }
};

inline std::vector<std::size_t> same_movie(const DistractorPool& pool, const std::string& movie_id,
                                           const std::string& exclude_dialogue) {
  std::vector<std::size_t> out;
  for (std::size_t id : pool.movie(movie_id))
    if (pool.entries()[id].dialogue_id != exclude_dialogue) out.push_back(id);
  return out;
}

inline void random_fill(Picker& p, const std::string& movie_id, const std::string& exclude_dialogue, Rng& rng) {
  p.draw(same_movie(p.pool, movie_id, exclude_dialogue), 3, rng);
  if (p.full()) return;
  std::vector<std::size_t> others;
  for (const auto& m : p.pool.movies())
    if (m != movie_id)
      for (std::size_t id : p.pool.movie(m)) others.push_back(id);
  p.result.fallback = true;
  p.draw(std::move(others), 4, rng);
  if (!p.full())
    throw PoolExhausted("distractor pool has fewer than " + std::to_string(p.k) + " eligible utterances");
}

}  // namespace detail

// k distinct utterances (after normalization) from other dialogues about
// `movie_id`, none equal to `gold`. Other movies fill in when the movie runs
// short, with `fallback` set.
inline DistractorResult random_distractors(const DistractorPool& pool, const std::string& movie_id,
                                           const std::string& exclude_dialogue, const std::string& gold,
                                           std::size_t k, Rng& rng) {
  detail::Picker p{pool, normalize_words(gold), k, {}, {}};
  detail::random_fill(p, movie_id, exclude_dialogue, rng);
  return p.result;
}

// Tiered sampling around the first labeled entity of the target utterance.
// Without labels this is random_distractors.
inline DistractorResult rule_based_distractors(const DistractorPool& pool, const std::string& movie_id,
                                               const std::string& exclude_dialogue, const std::string& gold,
                                               const std::vector<SentimentLabel>& target, std::size_t k, Rng& rng) {
  if (target.empty()) return random_distractors(pool, movie_id, exclude_dialogue, gold, k, rng);
  const SentimentLabel& t = target.front();
  std::vector<std::size_t> tier1, tier2;
  for (std::size_t id : detail::same_movie(pool, movie_id, exclude_dialogue)) {
    for (const auto& l : pool.entries()[id].labels) {
      if (l.entity_id != t.entity_id) continue;
      (l.sentiment != t.sentiment ? tier1 : tier2).push_back(id);
      break;
    }
  }
  detail::Picker p{pool, normalize_words(gold), k, {}, {}};
  p.draw(tier1, 1, rng);
  p.draw(tier2, 2, rng);
  if (!p.full()) detail::random_fill(p, movie_id, exclude_dialogue, rng);
  return p.result;
}

inline Json to_json(const Distractor& d) {
  return {{"text", d.text}, {"dialogue_id", d.dialogue_id}, {"utterance_index", d.utterance_index}, {"tier", d.tier}};
}

}  // namespace opdial
