#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string_view>
#include <vector>

#include "opdial/error.hpp"

namespace opdial {

// Unit-cost edit distance (insert, delete, substitute) over bytes.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1] ? 1u : 0u)});
      diag = up;
    }
  }
  return row[b.size()];
}

// 1 - |a ∩ b| / |a ∪ b|.
template <typename T>
double jaccard_distance(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) throw Error("jaccard_distance: both sets are empty");
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  std::size_t uni = a.size() + b.size() - inter;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

// Characters of a string as a set, whitespace excluded.
inline std::set<char> char_set(std::string_view s) {
  std::set<char> out;
  for (char c : s)
    if (c != ' ') out.insert(c);
  return out;
}

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - begin; }
  bool overlaps(const TokenSpan& o) const { return begin < o.end && o.begin < end; }
  bool operator==(const TokenSpan&) const = default;
};

// Every contiguous span of n tokens with min(t, 3) <= n <= t, where t is the
// token length of the entity surface. Ordered by length, then start.
inline std::vector<TokenSpan> ngram_candidates(std::size_t utterance_len, std::size_t title_tokens) {
  std::vector<TokenSpan> out;
  if (title_tokens == 0) throw Error("ngram_candidates: title has no tokens");
  for (std::size_t n = std::min<std::size_t>(title_tokens, 3); n <= title_tokens; ++n)
    for (std::size_t b = 0; b + n <= utterance_len; ++b) out.push_back({b, b + n});
  return out;
}

}  // namespace opdial
