#pragma once

// Movie-disjoint train/valid/test split.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/types.hpp"

namespace opdial {

enum class Split { train = 0, valid = 1, test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

struct SplitAssignment {
  std::map<std::string, Split> movies;

  Split of(const std::string& movie_id) const {
    auto it = movies.find(movie_id);
    if (it == movies.end()) throw Error("movie '" + movie_id + "' has no split");
    return it->second;
  }
};

// Greedy bin packing: movies are shuffled with `seed`, stably sorted by
// dialogue count (largest first) and each goes to the split with the largest
// remaining deficit against its target dialogue count. Ties go to the
// earlier split.
inline SplitAssignment split_by_movie(const Corpus& corpus, std::array<double, 3> fractions,
                                      std::uint64_t seed) {
  double sum = 0;
  for (double f : fractions) {
    if (f < 0) throw Error("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");

  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus.dialogues) ++counts[d.movie_id];
  if (counts.size() < 3)
    throw Error("split needs at least 3 movies, corpus has " + std::to_string(counts.size()));

  std::vector<std::pair<std::string, std::size_t>> movies(counts.begin(), counts.end());
  Rng rng(seed);
  std::shuffle(movies.begin(), movies.end(), rng);
  std::stable_sort(movies.begin(), movies.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  const double total = static_cast<double>(corpus.dialogues.size());
  std::array<double, 3> deficit{};
  for (int i = 0; i < 3; ++i) deficit[i] = fractions[i] * total;

  SplitAssignment out;
  for (const auto& [movie, n] : movies) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (deficit[i] > deficit[best] + 1e-9) best = i;
    deficit[best] -= static_cast<double>(n);
    out.movies[movie] = static_cast<Split>(best);
  }
  return out;
}

inline Json to_json(const SplitAssignment& s) {
  Json j = Json::object();
  for (const auto& [m, sp] : s.movies) j[m] = to_string(sp);
  return j;
}

inline SplitAssignment split_from_json(const Json& j) {
  SplitAssignment s;
  for (auto it = j.begin(); it != j.end(); ++it) s.movies[it.key()] = parse_split(it.value().get<std::string>());
  return s;
}

}  // namespace opdial
