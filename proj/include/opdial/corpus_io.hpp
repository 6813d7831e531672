#pragma once

// Canonical corpus JSON (schema_version 1): reading, validation, writing.
//
//   {
//     "schema_version": 1,
//     "dialogues": [
//       { "id": "...", "movie_id": "...",
//         "utterances": [ {"speaker": "A", "text": "...", "index": 0,
//                          "sentiment_labels": [{"entity": "...", "sentiment": "positive"}]} ],
//         "profile_a": Profile, "profile_b": Profile,
//         "partner_ratings": [int, int, int],          (optional)
//         "extra": { ... } }                            (optional, unknown fields)
//     ]
//   }
//
// Profile:  {"movie": Entity, "facts": [Fact], "opinions": [Opinion],
//            "questions": [{"text", "answer_source_id"}], "pretend_unknown": bool}
// Entity:   {"id", "surface", "kind", "role"?}
// Fact:     {"kind", "target": Entity, "text", "source_id", "relation"?, "value"?,
//            "mentions"?: [Entity]}
// Opinion:  {"target": Entity, "strength": name | integer | null}

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opdial/error.hpp"
#include "opdial/text.hpp"
#include "opdial/types.hpp"

namespace opdial {

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline const Json& require(const Json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object()) throw SchemaError(ctx + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(ctx + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const Json& obj, const char* key, const std::string& ctx) {
  const Json& v = require(obj, key, ctx);
  if (!v.is_string()) throw SchemaError(ctx + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::string optional_string(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  return it->get<std::string>();
}

}  // namespace detail

inline Json to_json(const EntityRef& e) {
  Json j = {{"id", e.id}, {"surface", e.surface}, {"kind", to_string(e.kind)}};
  if (!e.role.empty()) j["role"] = e.role;
  return j;
}

inline EntityRef entity_from_json(const Json& j, const std::string& ctx) {
  EntityRef e;
  e.id = detail::require_string(j, "id", ctx);
  e.surface = detail::require_string(j, "surface", ctx);
  e.kind = parse_entity_kind(detail::require_string(j, "kind", ctx));
  e.role = detail::optional_string(j, "role");
  return e;
}

inline Json to_json(const Fact& f) {
  Json j = {{"kind", to_string(f.kind)},
            {"target", to_json(f.target)},
            {"text", f.text},
            {"source_id", f.source_id}};
  if (!f.relation.empty()) j["relation"] = f.relation;
  if (!f.value.empty()) j["value"] = f.value;
  if (!f.mentions.empty()) {
    Json m = Json::array();
    for (const auto& e : f.mentions) m.push_back(to_json(e));
    j["mentions"] = m;
  }
  return j;
}

inline Fact fact_from_json(const Json& j, const std::string& ctx) {
  Fact f;
  f.kind = parse_fact_kind(detail::require_string(j, "kind", ctx));
  f.target = entity_from_json(detail::require(j, "target", ctx), ctx + ".target");
  f.text = detail::require_string(j, "text", ctx);
  f.source_id = detail::optional_string(j, "source_id");
  f.relation = detail::optional_string(j, "relation");
  f.value = detail::optional_string(j, "value");
  if (auto it = j.find("mentions"); it != j.end())
    for (const auto& m : *it) f.mentions.push_back(entity_from_json(m, ctx + ".mentions"));
  return f;
}

inline Json to_json(const Profile& p) {
  Json facts = Json::array(), opinions = Json::array(), questions = Json::array();
  for (const auto& f : p.facts) facts.push_back(to_json(f));
  for (const auto& o : p.opinions)
    opinions.push_back({{"target", to_json(o.target)}, {"strength", to_string(o.strength)}});
  for (const auto& q : p.questions)
    questions.push_back({{"text", q.text}, {"answer_source_id", q.answer_source_id}});
  return {{"movie", to_json(p.movie)},
          {"facts", facts},
          {"opinions", opinions},
          {"questions", questions},
          {"pretend_unknown", p.pretend_unknown}};
}

inline Profile profile_from_json(const Json& j, const std::string& ctx) {
  Profile p;
  p.movie = entity_from_json(detail::require(j, "movie", ctx), ctx + ".movie");
  for (const auto& f : detail::require(j, "facts", ctx))
    p.facts.push_back(fact_from_json(f, ctx + ".facts"));
  for (const auto& o : detail::require(j, "opinions", ctx)) {
    Opinion op;
    op.target = entity_from_json(detail::require(o, "target", ctx), ctx + ".opinions");
    const Json& s = detail::require(o, "strength", ctx + ".opinions");
    if (s.is_null())
      op.strength = OpinionScale::dont_know;
    else if (s.is_number_integer())
      op.strength = opinion_from_value(s.get<int>());
    else
      op.strength = parse_opinion(s.get<std::string>());
    p.opinions.push_back(std::move(op));
  }
  if (auto it = j.find("questions"); it != j.end())
    for (const auto& q : *it)
      p.questions.push_back({detail::require_string(q, "text", ctx + ".questions"),
                             detail::optional_string(q, "answer_source_id")});
  if (auto it = j.find("pretend_unknown"); it != j.end()) p.pretend_unknown = it->get<bool>();
  return p;
}

inline Json to_json(const Dialogue& d) {
  Json utts = Json::array();
  for (const auto& u : d.utterances) {
    Json labels = Json::array();
    for (const auto& l : u.sentiment_labels)
      labels.push_back({{"entity", l.entity_id}, {"sentiment", to_string(l.sentiment)}});
    utts.push_back({{"speaker", to_string(u.speaker)},
                    {"text", u.text},
                    {"index", u.index},
                    {"sentiment_labels", labels}});
  }
  Json j = {{"id", d.id},
            {"movie_id", d.movie_id},
            {"utterances", utts},
            {"profile_a", to_json(d.profile_a)},
            {"profile_b", to_json(d.profile_b)}};
  if (d.partner_ratings) j["partner_ratings"] = *d.partner_ratings;
  if (!d.extra.empty()) j["extra"] = d.extra;
  return j;
}

inline Dialogue dialogue_from_json(const Json& j, std::size_t position) {
  std::string ctx = "dialogue #" + std::to_string(position);
  if (!j.is_object()) throw SchemaError(ctx + ": expected an object");
  Dialogue d;
  d.id = detail::require_string(j, "id", ctx);
  ctx = "dialogue '" + d.id + "'";
  try {
    d.movie_id = detail::require_string(j, "movie_id", ctx);
    const Json& utts = detail::require(j, "utterances", ctx);
    if (!utts.is_array()) throw SchemaError(ctx + ": 'utterances' must be a list");
    for (const auto& u : utts) {
      Utterance x;
      x.speaker = parse_speaker(detail::require_string(u, "speaker", ctx));
      x.text = detail::require_string(u, "text", ctx);
      x.index = detail::require(u, "index", ctx).get<int>();
      if (auto it = u.find("sentiment_labels"); it != u.end())
        for (const auto& l : *it)
          x.sentiment_labels.push_back({detail::require_string(l, "entity", ctx),
                                        parse_sentiment(detail::require_string(l, "sentiment", ctx))});
      d.utterances.push_back(std::move(x));
    }
    d.profile_a = profile_from_json(detail::require(j, "profile_a", ctx), ctx + ".profile_a");
    d.profile_b = profile_from_json(detail::require(j, "profile_b", ctx), ctx + ".profile_b");
    if (auto it = j.find("partner_ratings"); it != j.end() && !it->is_null())
      d.partner_ratings = it->get<std::array<int, 3>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(ctx + ": " + e.what());
  } catch (const SchemaError& e) {
    std::string msg = e.what();
    if (msg.find(ctx) == std::string::npos) msg = ctx + ": " + msg;
    throw SchemaError(msg);
  }
  static const std::set<std::string> known = {"id",        "movie_id",        "utterances",
                                              "profile_a", "profile_b",       "partner_ratings",
                                              "extra"};
  if (auto it = j.find("extra"); it != j.end() && it->is_object()) d.extra = *it;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) d.extra[it.key()] = it.value();
  return d;
}

// Itemized invariant violations for one profile; empty when valid.
inline std::vector<std::string> check_profile(const Profile& p, const std::string& movie_id) {
  std::vector<std::string> out;
  if (p.movie.id != movie_id)
    out.push_back("profile movie '" + p.movie.id + "' differs from dialogue movie '" + movie_id + "'");
  if (p.pretend_unknown) {
    for (const auto& f : p.facts)
      if (f.target.id == movie_id) {
        out.push_back("pretend_unknown profile carries a fact about the movie");
        break;
      }
    if (p.questions.empty()) out.push_back("pretend_unknown profile has no question");
  } else if (p.facts.size() < 2 || p.facts.size() > 4) {
    out.push_back("profile has " + std::to_string(p.facts.size()) + " facts, expected 2-4");
  }
  for (const auto& f : p.facts)
    if (trim(f.text).empty()) out.push_back("empty fact text");
  std::set<std::string> targets;
  for (const auto& o : p.opinions)
    if (!targets.insert(o.target.id).second)
      out.push_back("duplicate opinion for '" + o.target.id + "'");
  return out;
}

inline std::vector<std::string> check_dialogue(const Dialogue& d) {
  std::vector<std::string> out;
  if (d.utterances.size() < 2)
    out.push_back("has " + std::to_string(d.utterances.size()) + " utterances, expected >= 2");
  int last = -1;
  for (const auto& u : d.utterances) {
    if (trim(u.text).empty()) out.push_back("utterance " + std::to_string(u.index) + " is empty");
    if (u.index <= last) out.push_back("utterance index " + std::to_string(u.index) + " not increasing");
    last = u.index;
  }
  for (auto& m : check_profile(d.profile_a, d.movie_id)) out.push_back("profile_a: " + m);
  for (auto& m : check_profile(d.profile_b, d.movie_id)) out.push_back("profile_b: " + m);
  return out;
}

inline void validate(const Corpus& c) {
  std::vector<std::string> ids;
  std::ostringstream msg;
  msg << "invariant violations:";
  std::set<std::string> seen;
  for (const auto& d : c.dialogues) {
    auto problems = check_dialogue(d);
    if (!seen.insert(d.id).second) problems.push_back("duplicate dialogue id");
    if (problems.empty()) continue;
    ids.push_back(d.id);
    for (const auto& p : problems) msg << "\n  " << d.id << ": " << p;
  }
  if (!ids.empty()) throw InvariantError(msg.str(), std::move(ids));
}

inline Json to_json(const Corpus& c) {
  Json dialogues = Json::array();
  for (const auto& d : c.dialogues) dialogues.push_back(to_json(d));
  return {{"schema_version", kSchemaVersion}, {"dialogues", dialogues}};
}

// Parses and validates a canonical corpus document.
inline Corpus corpus_from_json(const Json& doc) {
  if (!doc.is_object()) throw SchemaError("corpus: expected a JSON object");
  auto v = doc.find("schema_version");
  if (v == doc.end()) throw SchemaError("corpus: missing field 'schema_version'");
  if (!v->is_number_integer() || v->get<int>() != kSchemaVersion)
    throw SchemaError("corpus: unsupported schema_version " + v->dump());
  const Json& ds = detail::require(doc, "dialogues", "corpus");
  if (!ds.is_array()) throw SchemaError("corpus: 'dialogues' must be a list");
  Corpus c;
  c.dialogues.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) c.dialogues.push_back(dialogue_from_json(ds[i], i));
  validate(c);
  return c;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Corpus ingest(const std::filesystem::path& path) { return corpus_from_json(read_json_file(path)); }

inline void write_corpus(const Corpus& c, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(c).dump(1) + "\n");
}

}  // namespace opdial
