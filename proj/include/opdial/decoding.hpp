#pragma once

// Beam search with length normalization and trigram blocking, followed by
// fusion of the beam score with the classifier logit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/scorer.hpp"
#include "opdial/sequence.hpp"
#include "opdial/tokenizer.hpp"

namespace opdial {

// (5 + length)^alpha / 6^alpha
inline double length_penalty(std::size_t length, double alpha) {
  if (length < 1) throw Error("length_penalty: length must be positive");
  if (alpha < 0) throw Error("length_penalty: alpha must be non-negative");
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

// True iff some trigram occurs at least twice.
inline bool has_repeated_trigram(const std::vector<int>& tokens) {
  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i)
    if (!seen.insert({tokens[i], tokens[i + 1], tokens[i + 2]}).second) return true;
  return false;
}

struct BeamHypothesis {
  std::vector<int> tokens;
  double logprob_sum = 0;
  double normalized_score = 0;
  bool finished = false;

  bool operator==(const BeamHypothesis&) const = default;
};

struct BeamOptions {
  std::size_t beam = 4;
  double alpha = 0.6;
  std::size_t max_len = 40;  // generated tokens, end token included
  std::optional<int> eos;
  bool trigram_filter = true;
};

struct BeamResult {
  std::vector<BeamHypothesis> hypotheses;  // best first
  std::vector<std::string> warnings;
};

inline double normalized(double logprob_sum, std::size_t length, double alpha) {
  return length == 0 ? 0.0 : logprob_sum / length_penalty(length, alpha);
}

// Higher normalized score first, lexicographically smaller tokens on ties.
inline bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.normalized_score != b.normalized_score) return a.normalized_score > b.normalized_score;
  return a.tokens < b.tokens;
}

// Every step expands the live hypotheses by every token, drops expansions
// that repeat a trigram, and keeps the best `beam` of the finished and new
// hypotheses together. Hypotheses ending in `eos` are finished and kept
// frozen. Hypotheses still live at max_len are returned alongside the
// finished ones.
inline BeamResult beam_search(const SampleContext& ctx, ScorerClient& scorer, const BeamOptions& opts) {
  if (opts.beam == 0) throw ConfigError("beam size must be positive");
  if (opts.max_len == 0) throw ConfigError("max_len must be positive");
  if (ctx.prefix.size() + opts.max_len + 1 > ctx.max_len)
    throw Error("beam_search: prefix of " + std::to_string(ctx.prefix.size()) + " tokens leaves no room for " +
                std::to_string(opts.max_len) + " generated tokens");
  BeamResult result;
  std::vector<BeamHypothesis> kept = {BeamHypothesis{}};
  for (std::size_t step = 1; step <= opts.max_len; ++step) {
    std::vector<BeamHypothesis> pool;
    bool any_live = false;
    for (const auto& h : kept) {
      if (h.finished) {
        pool.push_back(h);
        continue;
      }
      any_live = true;
      auto lp = scorer.next_token_logprobs(extend(ctx, h.tokens));
      check_logprobs(lp);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (!std::isfinite(lp[t])) continue;
        BeamHypothesis n;
        n.tokens = h.tokens;
        n.tokens.push_back(static_cast<int>(t));
        if (opts.trigram_filter && has_repeated_trigram(n.tokens)) continue;
        n.logprob_sum = h.logprob_sum + lp[t];
        n.normalized_score = normalized(n.logprob_sum, n.tokens.size(), opts.alpha);
        n.finished = opts.eos && static_cast<int>(t) == *opts.eos;
        pool.push_back(std::move(n));
      }
    }
    if (!any_live) break;
    bool expanded = std::any_of(pool.begin(), pool.end(), [&](const auto& p) { return p.tokens.size() == step; });
    if (!expanded) {
      result.warnings.push_back("every expansion at step " + std::to_string(step) +
                                " was filtered; returning the best unfiltered prefixes");
      break;
    }
    std::sort(pool.begin(), pool.end(), hypothesis_before);
    if (pool.size() > opts.beam) pool.resize(opts.beam);
    kept = std::move(pool);
  }
  std::sort(kept.begin(), kept.end(), hypothesis_before);
  result.hypotheses = std::move(kept);
  return result;
}

struct SelectResult {
  std::size_t index = 0;  // into the hypotheses passed in
  std::vector<double> scores;
  bool fallback = false;  // classifier failed, beam ranking used
  std::string error;
};

// Final score = normalized_score + lambda * classifier logit of the
// hypothesis appended to the history. lambda == 0 skips the classifier.
inline SelectResult select_final(const std::vector<BeamHypothesis>& hyps, const SampleContext& ctx,
                                 ScorerClient& scorer, const Tokenizer& tok, double lambda) {
  if (hyps.empty()) throw Error("select_final: no hypotheses");
  SelectResult r;
  for (const auto& h : hyps) r.scores.push_back(h.normalized_score);
  if (hyps.size() > 1 && lambda != 0.0) {
    try {
      std::vector<EncodedSample> cands;
      for (const auto& h : hyps) {
        std::vector<int> body = h.tokens;
        if (!body.empty() && body.back() == tok.clf_id()) body.pop_back();
        cands.push_back(finalize(ctx, body, tok));
      }
      auto logits = scorer.classify(cands);
      if (logits.size() != hyps.size()) throw ProtocolError("classifier returned the wrong number of logits");
      for (std::size_t i = 0; i < hyps.size(); ++i) r.scores[i] = hyps[i].normalized_score + lambda * logits[i];
    } catch (const std::exception& e) {
      r.fallback = true;
      r.error = e.what();
      for (std::size_t i = 0; i < hyps.size(); ++i) r.scores[i] = hyps[i].normalized_score;
    }
  }
  for (std::size_t i = 1; i < r.scores.size(); ++i)
    if (r.scores[i] > r.scores[r.index]) r.index = i;
  return r;
}

inline Json to_json(const BeamHypothesis& h) {
  return {{"tokens", h.tokens},
          {"logprob_sum", h.logprob_sum},
          {"normalized_score", h.normalized_score},
          {"finished", h.finished}};
}

}  // namespace opdial
