#pragma once

// Shared fixtures, generators, toy scorers and brute-force oracles for the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "opdial/opdial.hpp"

namespace opdial::testing {

inline std::filesystem::path source_dir() { return OPDIAL_SOURCE_DIR; }

inline EntityRef movie_ref(const std::string& id, const std::string& surface) {
  return {id, surface, EntityKind::movie, ""};
}

inline EntityRef person_ref(const std::string& id, const std::string& surface, const std::string& role = "actor") {
  return {id, surface, EntityKind::person, role};
}

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w = {
      "the",   "a",      "was",    "really", "think",  "scene",  "story",   "ending", "music",  "plot",
      "watch", "again",  "friend", "night",  "long",   "short",  "funny",   "sad",    "great",  "okay",
      "maybe", "never",  "always", "better", "worse",  "seen",   "saw",     "liked",  "there",  "about",
      "part",  "first",  "last",   "year",   "time",   "people", "cast",    "role",   "camera", "color",
      "city",  "house",  "car",    "dog",    "train",  "water",  "sound",   "voice",  "line",   "joke",
      "fight", "chase",  "dream",  "space",  "ship",   "island", "village", "war",    "love",   "money",
      "kid",   "father", "mother", "brother", "sister", "team",  "game",    "book",   "song",   "dance"};
  return w;
}

inline std::string random_sentence(Rng& rng, std::size_t min_words = 5, std::size_t max_words = 10) {
  const auto& w = filler_words();
  std::uniform_int_distribution<std::size_t> len(min_words, max_words), pick(0, w.size() - 1);
  std::size_t n = len(rng);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += w[pick(rng)];
  }
  return s;
}

// Corpus with `movies` movies and `dialogues_of(movie)` dialogues each, every
// dialogue holding `utterances` random filler utterances.
template <typename CountFn>
Corpus synthetic_corpus(std::size_t movies, CountFn dialogues_of, std::size_t utterances, Rng& rng) {
  Corpus c;
  for (std::size_t m = 0; m < movies; ++m) {
    std::string mid = "m" + std::to_string(m);
    EntityRef movie = movie_ref(mid, "Movie " + std::to_string(m));
    std::size_t n = dialogues_of(m);
    for (std::size_t k = 0; k < n; ++k) {
      Dialogue d;
      d.id = mid + "_d" + std::to_string(k);
      d.movie_id = mid;
      d.profile_a.movie = d.profile_b.movie = movie;
      Fact f;
      f.target = movie;
      f.text = random_sentence(rng, 4, 8);
      f.source_id = mid + "/trivia/0";
      d.profile_a.facts = d.profile_b.facts = {f};
      d.profile_a.opinions = {{movie, OpinionScale::like}};
      d.profile_b.opinions = {{movie, OpinionScale::dont_like}};
      for (std::size_t i = 0; i < utterances; ++i)
        d.utterances.push_back({i % 2 ? Speaker::B : Speaker::A, random_sentence(rng), static_cast<int>(i), {}});
      c.dialogues.push_back(std::move(d));
    }
  }
  return c;
}

// Byte-level tokenizer with no merges.
inline BpeTokenizer byte_tokenizer() { return BpeTokenizer({}); }

// ---------------------------------------------------------------------------
// Oracles

// Full-matrix edit distance.
inline std::size_t levenshtein_oracle(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  return d[a.size()][b.size()];
}

inline double jaccard_oracle(const std::set<char>& a, const std::set<char>& b) {
  std::set<char> inter, uni(a.begin(), a.end());
  for (char c : a)
    if (b.count(c)) inter.insert(c);
  uni.insert(b.begin(), b.end());
  return 1.0 - static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline bool repeated_trigram_oracle(const std::vector<int>& t) {
  std::map<std::vector<int>, int> count;
  for (std::size_t i = 0; i + 3 <= t.size(); ++i) count[{t[i], t[i + 1], t[i + 2]}]++;
  for (const auto& [k, n] : count)
    if (n > 1) return true;
  return false;
}

inline std::vector<double> log_softmax(const std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  double lse = m + std::log(s);
  std::vector<double> out;
  for (double v : z) out.push_back(v - lse);
  return out;
}

// ---------------------------------------------------------------------------
// Toy scorers

// Next-token distribution is a pure function of (seed, generated tokens):
// the tokens after `prefix_len` are hashed into the generator seed.
class HashScorer : public ScorerClient {
 public:
  HashScorer(int vocab, std::uint64_t seed, std::size_t prefix_len, double spread = 2.0)
      : vocab_(vocab), seed_(seed), prefix_len_(prefix_len), spread_(spread) {}

  std::vector<double> logprobs_for(const std::vector<int>& generated) const {
    std::uint64_t h = seed_ * 0x9e3779b97f4a7c15ULL + 1;
    for (int t : generated) h = fnv1a64(std::to_string(t) + ",", h);
    Rng rng(h);
    std::normal_distribution<double> n(0.0, spread_);
    std::vector<double> z;
    for (int i = 0; i < vocab_; ++i) z.push_back(n(rng));
    return log_softmax(z);
  }

  std::vector<double> next_token_logprobs(const EncodedSample& prefix) override {
    std::vector<int> gen(prefix.token_ids.begin() + static_cast<std::ptrdiff_t>(prefix_len_), prefix.token_ids.end());
    return logprobs_for(gen);
  }

  std::vector<double> classify(const std::vector<EncodedSample>& c) override {
    return std::vector<double>(c.size(), 0.0);
  }

 private:
  int vocab_;
  std::uint64_t seed_;
  std::size_t prefix_len_;
  double spread_;
};

// Same distribution at every step.
class FixedScorer : public ScorerClient {
 public:
  explicit FixedScorer(std::vector<double> logprobs, std::vector<double> logits = {})
      : lp_(std::move(logprobs)), logits_(std::move(logits)) {}
  std::vector<double> next_token_logprobs(const EncodedSample&) override { return lp_; }
  std::vector<double> classify(const std::vector<EncodedSample>& c) override {
    if (logits_.empty()) return std::vector<double>(c.size(), 0.0);
    return logits_;
  }

 private:
  std::vector<double> lp_;
  std::vector<double> logits_;
};

// Exhaustive decoder: every sequence that ends in `eos`, plus every sequence
// of exactly `max_len` tokens. Best normalized score, smaller tokens on ties.
template <typename LogprobFn>
BeamHypothesis exhaustive_best(LogprobFn&& logprobs, int vocab, std::size_t max_len, std::optional<int> eos,
                               double alpha) {
  BeamHypothesis best;
  bool have = false;
  auto consider = [&](const std::vector<int>& seq, double sum, bool finished) {
    double sc = sum / std::pow((5.0 + static_cast<double>(seq.size())) / 6.0, alpha);
    if (!have || sc > best.normalized_score || (sc == best.normalized_score && seq < best.tokens)) {
      best = {seq, sum, sc, finished};
      have = true;
    }
  };
  std::vector<int> seq;
  std::function<void(double)> rec = [&](double sum) {
    auto lp = logprobs(seq);
    for (int t = 0; t < vocab; ++t) {
      seq.push_back(t);
      double s = sum + lp[static_cast<std::size_t>(t)];
      if (eos && t == *eos)
        consider(seq, s, true);
      else if (seq.size() == max_len)
        consider(seq, s, false);
      else
        rec(s);
      seq.pop_back();
    }
  };
  rec(0.0);
  return best;
}

// Context whose prefix is `n` arbitrary tokens.
inline SampleContext toy_context(std::size_t n = 2, std::size_t max_len = 512) {
  SampleContext ctx;
  ctx.max_len = max_len;
  for (std::size_t i = 0; i < n; ++i) ctx.prefix.push(static_cast<int>(i), kContentSpeakerA, static_cast<int>(i), false);
  ctx.next_position = static_cast<int>(n);
  ctx.speaker = Speaker::B;
  return ctx;
}

// ---------------------------------------------------------------------------
// Adherence hand computation

// Tallies from the hand labels stored in each dialogue's extra.hand_labels:
// [{"utterance", "entity", "sign"}]. A label whose speaker has no opinion (or
// dont_know) on the entity is excluded.
struct HandTallies {
  std::map<std::string, AdherenceTally> by_kind;
  AdherenceTally total;
  std::size_t excluded = 0;
};

inline HandTallies hand_tallies(const Corpus& corpus) {
  HandTallies h;
  for (const char* k : {"movie", "person", "other"}) h.by_kind[k] = {};
  for (const auto& d : corpus.dialogues) {
    std::map<std::string, EntityKind> kinds;
    for (const auto& e : d.entities()) kinds[e.id] = e.kind;
    for (const auto& l : d.extra.at("hand_labels")) {
      int ui = l.at("utterance").get<int>();
      std::string id = l.at("entity").get<std::string>();
      int s = l.at("sign").get<int>();
      const Utterance* u = nullptr;
      for (const auto& x : d.utterances)
        if (x.index == ui) u = &x;
      const Opinion* op = d.profile(u->speaker).opinion_for(id);
      if (!op || op->strength == OpinionScale::dont_know) {
        ++h.excluded;
        continue;
      }
      std::string bucket = kinds[id] == EntityKind::movie ? "movie" : kinds[id] == EntityKind::person ? "person" : "other";
      auto& t = h.by_kind[bucket];
      if (s == 0)
        ++t.neutral;
      else if (s == sign(op->strength))
        ++t.matches;
      else
        ++t.errors;
    }
  }
  for (const auto& [k, t] : h.by_kind) h.total += t;
  return h;
}

}  // namespace opdial::testing
