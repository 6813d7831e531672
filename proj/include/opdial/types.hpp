#pragma once

// Core data model: entities, profiles, utterances, dialogues.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opdial/error.hpp"

namespace opdial {

using Rng = std::mt19937_64;
using Json = nlohmann::json;

enum class Speaker { A, B };

inline std::string_view to_string(Speaker s) { return s == Speaker::A ? "A" : "B"; }

inline Speaker other(Speaker s) { return s == Speaker::A ? Speaker::B : Speaker::A; }

inline Speaker parse_speaker(std::string_view s) {
  if (s == "A" || s == "a") return Speaker::A;
  if (s == "B" || s == "b") return Speaker::B;
  throw SchemaError("unknown speaker '" + std::string(s) + "'");
}

enum class EntityKind { movie, person, genre, country, other };

inline std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::movie: return "movie";
    case EntityKind::person: return "person";
    case EntityKind::genre: return "genre";
    case EntityKind::country: return "country";
    case EntityKind::other: return "other";
  }
  return "other";
}

inline EntityKind parse_entity_kind(std::string_view s) {
  if (s == "movie") return EntityKind::movie;
  if (s == "person") return EntityKind::person;
  if (s == "genre") return EntityKind::genre;
  if (s == "country") return EntityKind::country;
  if (s == "other") return EntityKind::other;
  throw SchemaError("unknown entity kind '" + std::string(s) + "'");
}

// `role` refines the kind for delexicalisation: actor / director / writer for
// persons, budget / certificate / release_year for values. May be empty.
struct EntityRef {
  std::string id;
  std::string surface;
  EntityKind kind = EntityKind::other;
  std::string role;

  bool operator==(const EntityRef&) const = default;
};

// Signed attitude strength. dont_know carries no sign.
enum class OpinionScale { really_dont_like, dont_like, like, really_like, favorite, dont_know };

inline constexpr int kOpinionLevels = 6;

inline constexpr std::array<OpinionScale, kOpinionLevels> kAllOpinions = {
    OpinionScale::really_dont_like, OpinionScale::dont_like, OpinionScale::like,
    OpinionScale::really_like,      OpinionScale::favorite,  OpinionScale::dont_know};

inline std::optional<int> strength_value(OpinionScale s) {
  switch (s) {
    case OpinionScale::really_dont_like: return -2;
    case OpinionScale::dont_like: return -1;
    case OpinionScale::like: return 1;
    case OpinionScale::really_like: return 2;
    case OpinionScale::favorite: return 3;
    case OpinionScale::dont_know: return std::nullopt;
  }
  return std::nullopt;
}

inline int sign(OpinionScale s) {
  auto v = strength_value(s);
  if (!v) return 0;
  return *v < 0 ? -1 : 1;
}

inline std::string_view to_string(OpinionScale s) {
  switch (s) {
    case OpinionScale::really_dont_like: return "really_dont_like";
    case OpinionScale::dont_like: return "dont_like";
    case OpinionScale::like: return "like";
    case OpinionScale::really_like: return "really_like";
    case OpinionScale::favorite: return "favorite";
    case OpinionScale::dont_know: return "dont_know";
  }
  return "dont_know";
}

inline OpinionScale parse_opinion(std::string_view s) {
  for (auto o : kAllOpinions)
    if (to_string(o) == s) return o;
  throw SchemaError("unknown opinion strength '" + std::string(s) + "'");
}

// Numeric strengths as stored by some corpora: -2..+3 without 0.
inline OpinionScale opinion_from_value(int v) {
  switch (v) {
    case -2: return OpinionScale::really_dont_like;
    case -1: return OpinionScale::dont_like;
    case 1: return OpinionScale::like;
    case 2: return OpinionScale::really_like;
    case 3: return OpinionScale::favorite;
    default: throw SchemaError("opinion strength out of range: " + std::to_string(v));
  }
}

enum class FactKind { trivia, plot, kb_triple };

inline std::string_view to_string(FactKind k) {
  switch (k) {
    case FactKind::trivia: return "trivia";
    case FactKind::plot: return "plot";
    case FactKind::kb_triple: return "kb_triple";
  }
  return "trivia";
}

inline FactKind parse_fact_kind(std::string_view s) {
  if (s == "trivia") return FactKind::trivia;
  if (s == "plot") return FactKind::plot;
  if (s == "kb_triple") return FactKind::kb_triple;
  throw SchemaError("unknown fact kind '" + std::string(s) + "'");
}

struct Fact {
  FactKind kind = FactKind::trivia;
  EntityRef target;
  std::string text;
  std::string source_id;
  // kb_triple only.
  std::string relation;
  std::string value;
  // Further entities named in the text (actors in a trivia, the value of a
  // triple).
  std::vector<EntityRef> mentions;

  bool operator==(const Fact&) const = default;
};

struct Opinion {
  EntityRef target;
  OpinionScale strength = OpinionScale::dont_know;

  bool operator==(const Opinion&) const = default;
};

struct Question {
  std::string text;
  std::string answer_source_id;

  bool operator==(const Question&) const = default;
};

struct Profile {
  EntityRef movie;
  std::vector<Fact> facts;
  std::vector<Opinion> opinions;
  std::vector<Question> questions;
  bool pretend_unknown = false;

  bool operator==(const Profile&) const = default;

  const Opinion* opinion_for(std::string_view entity_id) const {
    for (const auto& o : opinions)
      if (o.target.id == entity_id) return &o;
    return nullptr;
  }
};

// Every entity a profile refers to, deduplicated by id, in first-seen order.
inline std::vector<EntityRef> profile_entities(const Profile& p) {
  std::vector<EntityRef> out;
  auto add = [&](const EntityRef& e) {
    if (e.id.empty()) return;
    for (const auto& x : out)
      if (x.id == e.id) return;
    out.push_back(e);
  };
  add(p.movie);
  for (const auto& f : p.facts) {
    add(f.target);
    for (const auto& m : f.mentions) add(m);
  }
  for (const auto& o : p.opinions) add(o.target);
  return out;
}

enum class SentimentClass { very_negative, negative, neutral, positive, very_positive };

inline constexpr std::array<SentimentClass, 5> kAllSentiments = {
    SentimentClass::very_negative, SentimentClass::negative, SentimentClass::neutral,
    SentimentClass::positive, SentimentClass::very_positive};

inline std::string_view to_string(SentimentClass s) {
  switch (s) {
    case SentimentClass::very_negative: return "very_negative";
    case SentimentClass::negative: return "negative";
    case SentimentClass::neutral: return "neutral";
    case SentimentClass::positive: return "positive";
    case SentimentClass::very_positive: return "very_positive";
  }
  return "neutral";
}

inline SentimentClass parse_sentiment(std::string_view s) {
  for (auto c : kAllSentiments)
    if (to_string(c) == s) return c;
  throw SchemaError("unknown sentiment class '" + std::string(s) + "'");
}

inline int sign(SentimentClass s) {
  switch (s) {
    case SentimentClass::very_negative:
    case SentimentClass::negative: return -1;
    case SentimentClass::neutral: return 0;
    default: return 1;
  }
}

struct SentimentLabel {
  std::string entity_id;
  SentimentClass sentiment = SentimentClass::neutral;

  bool operator==(const SentimentLabel&) const = default;
};

struct Utterance {
  Speaker speaker = Speaker::A;
  std::string text;
  int index = 0;
  std::vector<SentimentLabel> sentiment_labels;

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string id;
  std::string movie_id;
  std::vector<Utterance> utterances;
  Profile profile_a;
  Profile profile_b;
  std::optional<std::array<int, 3>> partner_ratings;
  // Unknown fields from the source document, kept verbatim.
  Json extra = Json::object();

  bool operator==(const Dialogue&) const = default;

  const Profile& profile(Speaker s) const { return s == Speaker::A ? profile_a : profile_b; }

  // Union of both profiles' entities.
  std::vector<EntityRef> entities() const {
    auto out = profile_entities(profile_a);
    for (const auto& e : profile_entities(profile_b)) {
      bool seen = false;
      for (const auto& x : out) seen = seen || x.id == e.id;
      if (!seen) out.push_back(e);
    }
    return out;
  }
};

struct Corpus {
  std::vector<Dialogue> dialogues;

  bool operator==(const Corpus&) const = default;
};

}  // namespace opdial
