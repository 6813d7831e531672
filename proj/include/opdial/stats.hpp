#pragma once

// Descriptive corpus statistics.

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t utterances = 0;
  std::size_t tokens = 0;
  double avg_utt_per_dialogue = 0;
  double avg_tokens_per_utt = 0;
  std::size_t vocab_size = 0;
  // Smallest vocabulary covering 99% of token occurrences.
  std::size_t vocab_size_99 = 0;
  std::size_t movies = 0;
  std::size_t unique_trivia = 0;
};

using SurfaceTokenizer = std::function<std::vector<std::string>(std::string_view)>;

inline std::vector<std::string> default_surface_tokenize(std::string_view text) {
  return token_texts(surface_tokens(text));
}

// Number of most-frequent types needed to cover `percent` % of all tokens.
// Ties in frequency are ordered lexicographically.
inline std::size_t coverage_vocab_size(const std::unordered_map<std::string, std::size_t>& counts,
                                       std::size_t percent) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::size_t total = 0;
  for (const auto& [w, c] : v) total += c;
  std::size_t cum = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    cum += v[i].second;
    if (cum * 100 >= total * percent) return i + 1;
  }
  return v.size();
}

inline CorpusStats compute_stats(const Corpus& corpus,
                                 const SurfaceTokenizer& tokenize = default_surface_tokenize) {
  if (corpus.dialogues.empty()) throw Error("compute_stats: empty corpus");
  CorpusStats s;
  std::unordered_map<std::string, std::size_t> counts;
  std::set<std::string> movies, trivia;
  for (const auto& d : corpus.dialogues) {
    ++s.dialogues;
    movies.insert(d.movie_id);
    for (const Profile* p : {&d.profile_a, &d.profile_b})
      for (const auto& f : p->facts)
        if (f.kind == FactKind::trivia && !f.source_id.empty()) trivia.insert(f.source_id);
    for (const auto& u : d.utterances) {
      ++s.utterances;
      for (const auto& t : tokenize(u.text)) {
        ++s.tokens;
        ++counts[to_lower(t)];
      }
    }
  }
  s.avg_utt_per_dialogue = static_cast<double>(s.utterances) / static_cast<double>(s.dialogues);
  s.avg_tokens_per_utt = static_cast<double>(s.tokens) / static_cast<double>(s.utterances);
  s.vocab_size = counts.size();
  s.vocab_size_99 = coverage_vocab_size(counts, 99);
  s.movies = movies.size();
  s.unique_trivia = trivia.size();
  return s;
}

inline Json to_json(const CorpusStats& s) {
  return {{"dialogues", s.dialogues},
          {"utterances", s.utterances},
          {"tokens", s.tokens},
          {"avg_utt_per_dialogue", s.avg_utt_per_dialogue},
          {"avg_tokens_per_utt", s.avg_tokens_per_utt},
          {"vocab_size", s.vocab_size},
          {"vocab_size_99", s.vocab_size_99},
          {"movies", s.movies},
          {"unique_trivia", s.unique_trivia}};
}

}  // namespace opdial
