#pragma once

// Perplexity over the language-modeled tokens and hits@n over candidate sets
// of gold plus random distractors.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opdial/distractors.hpp"
#include "opdial/error.hpp"
#include "opdial/scorer.hpp"
#include "opdial/sequence.hpp"

namespace opdial {

// First `n` positions of a sample, unpadded and without <clf>.
inline EncodedSample sample_prefix(const EncodedSample& s, std::size_t n) {
  EncodedSample p;
  p.token_ids.assign(s.token_ids.begin(), s.token_ids.begin() + n);
  p.content_ids.assign(s.content_ids.begin(), s.content_ids.begin() + n);
  p.position_ids.assign(s.position_ids.begin(), s.position_ids.begin() + n);
  p.lm_mask.assign(s.lm_mask.begin(), s.lm_mask.begin() + n);
  return p;
}

struct PerplexityResult {
  double perplexity = 0;
  double nll_sum = 0;
  std::size_t tokens = 0;
  std::size_t samples = 0;
  std::optional<std::string> error;  // set when the scorer failed part way
};

// exp(mean negative log-likelihood) over lm_mask positions. Each masked token
// is scored given every token before it.
inline PerplexityResult perplexity(const std::vector<EncodedSample>& samples, ScorerClient& scorer) {
  PerplexityResult r;
  for (const auto& s : samples)
    if (std::none_of(s.lm_mask.begin(), s.lm_mask.end(), [](auto m) { return m != 0; }))
      throw Error("perplexity: sample without language-modeled tokens");
  try {
    for (const auto& s : samples) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s.lm_mask[i]) continue;
        auto lp = scorer.next_token_logprobs(sample_prefix(s, i));
        check_logprobs(lp);
        int t = s.token_ids[i];
        if (t < 0 || static_cast<std::size_t>(t) >= lp.size()) throw ProtocolError("token id outside scorer vocabulary");
        r.nll_sum -= lp[static_cast<std::size_t>(t)];
        ++r.tokens;
      }
      ++r.samples;
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.perplexity = r.tokens ? std::exp(r.nll_sum / static_cast<double>(r.tokens)) : 0.0;
  return r;
}

// 1-based rank of the gold logit; every other candidate whose logit is not
// lower ranks ahead of it.
inline std::size_t gold_rank(const std::vector<double>& logits, std::size_t gold) {
  std::size_t rank = 1;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != gold && logits[i] >= logits[gold]) ++rank;
  return rank;
}

inline bool hits_at_n(const std::vector<double>& logits, std::size_t gold, std::size_t n) {
  return gold_rank(logits, gold) <= n;
}

struct EvalItem {
  Profile profile;
  std::vector<Utterance> history;
  Utterance next;
  std::string movie_id;
  std::string dialogue_id;
};

// Every utterance after the first, with its speaker's profile.
inline std::vector<EvalItem> eval_items(const Corpus& corpus) {
  std::vector<EvalItem> out;
  for (const auto& d : corpus.dialogues)
    for (std::size_t i = 1; i < d.utterances.size(); ++i) {
      const auto& next = d.utterances[i];
      out.push_back({d.profile(next.speaker),
                     std::vector<Utterance>(d.utterances.begin(), d.utterances.begin() + i), next, d.movie_id, d.id});
    }
  return out;
}

struct EvalOptions {
  std::vector<std::size_t> hits = {1, 3};
  std::size_t distractors = 19;
  BuildOptions build;
  bool compute_perplexity = true;
};

struct EvalReport {
  std::optional<double> perplexity;
  std::map<std::size_t, double> hits_at;
  std::size_t n_samples = 0;
  std::size_t skipped = 0;  // not enough same-movie distractors
  std::optional<std::string> error;
};

// Random distractors only, same movie; items that would need the
// other-movie fallback are skipped.
inline EvalReport evaluate(const std::vector<EvalItem>& items, const DistractorPool& pool, ScorerClient& scorer,
                           const Tokenizer& tok, Rng& rng, const EvalOptions& opts = {}) {
  EvalReport r;
  std::map<std::size_t, std::size_t> hit_counts;
  std::vector<EncodedSample> golds;
  try {
    for (const auto& item : items) {
      DistractorResult ds;
      try {
        ds = random_distractors(pool, item.movie_id, item.dialogue_id, item.next.text, opts.distractors, rng);
      } catch (const PoolExhausted&) {
        ++r.skipped;
        continue;
      }
      if (ds.fallback) {
        ++r.skipped;
        continue;
      }
      auto set = assemble_candidates(item.profile, item.history, item.next, ds.texts(), tok, rng, opts.build,
                                     opts.distractors);
      auto logits = scorer.classify(set.candidates);
      if (logits.size() != set.candidates.size()) throw ProtocolError("classifier returned the wrong number of logits");
      std::size_t rank = gold_rank(logits, static_cast<std::size_t>(set.label));
      for (std::size_t n : opts.hits) hit_counts[n] += rank <= n;
      ++r.n_samples;
      if (opts.compute_perplexity) golds.push_back(set.candidates[static_cast<std::size_t>(set.label)]);
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  for (std::size_t n : opts.hits)
    r.hits_at[n] = r.n_samples ? static_cast<double>(hit_counts[n]) / static_cast<double>(r.n_samples) : 0.0;
  if (opts.compute_perplexity && !golds.empty() && !r.error) {
    auto p = perplexity(golds, scorer);
    r.perplexity = p.perplexity;
    if (p.error) r.error = p.error;
  }
  return r;
}

inline Json to_json(const EvalReport& r) {
  Json hits = Json::object();
  for (const auto& [n, v] : r.hits_at) hits[std::to_string(n)] = v;
  Json j = {{"hits_at", hits}, {"n_samples", r.n_samples}, {"skipped", r.skipped}};
  j["perplexity"] = r.perplexity ? Json(*r.perplexity) : Json(nullptr);
  if (r.error) j["error"] = *r.error;
  return j;
}

}  // namespace opdial
