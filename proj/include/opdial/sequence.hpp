#pragma once

// Model-ready samples. Layout of one sequence:
//
//   fact_1 .. fact_n | attitude_1 .. attitude_m | history turns | next | <clf> | <pad>...
//
// Three parallel channels are emitted: token ids, content ids and position
// ids. Content ids mark the speaker of dialogue tokens, the fact group of
// fact tokens and the attitude strength of attitude tokens. Every fact and
// every attitude segment starts its positions at 0.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "opdial/corpus_io.hpp"
#include "opdial/error.hpp"
#include "opdial/resolution.hpp"
#include "opdial/text.hpp"
#include "opdial/tokenizer.hpp"
#include "opdial/types.hpp"

namespace opdial {

inline constexpr int kContentPad = 0;
inline constexpr int kContentSpeakerA = 1;
inline constexpr int kContentSpeakerB = 2;
inline constexpr int kContentFactBase = 3;
inline constexpr int kFactGroups = 8;
inline constexpr int kContentAttitudeBase = kContentFactBase + kFactGroups;
inline constexpr int kContentVocab = kContentAttitudeBase + kOpinionLevels;
inline constexpr std::size_t kDefaultMaxLen = 512;

inline int speaker_content(Speaker s) { return s == Speaker::A ? kContentSpeakerA : kContentSpeakerB; }

inline int attitude_content(OpinionScale s) {
  for (int i = 0; i < kOpinionLevels; ++i)
    if (kAllOpinions[i] == s) return kContentAttitudeBase + i;
  return kContentAttitudeBase + kOpinionLevels - 1;
}

struct EncodedSample {
  std::vector<int> token_ids;
  std::vector<int> content_ids;
  std::vector<int> position_ids;
  std::vector<std::uint8_t> lm_mask;
  std::size_t clf_index = 0;
  int label = 0;

  std::size_t size() const { return token_ids.size(); }

  void push(int token, int content, int position, bool lm) {
    token_ids.push_back(token);
    content_ids.push_back(content);
    position_ids.push_back(position);
    lm_mask.push_back(lm ? 1 : 0);
  }

  bool operator==(const EncodedSample&) const = default;
};

// ---------------------------------------------------------------------------
// Delexicalisation

inline std::string placeholder_for(const EntityRef& e) {
  switch (e.kind) {
    case EntityKind::movie: return "<movie>";
    case EntityKind::person:
      if (e.role == "actor" || e.role == "director" || e.role == "writer") return "<" + e.role + ">";
      return "<person>";
    case EntityKind::genre: return "<genre>";
    case EntityKind::country: return "<country>";
    case EntityKind::other:
      if (e.role == "budget" || e.role == "certificate" || e.role == "release_year") return "<" + e.role + ">";
      return "<other>";
  }
  return "<other>";
}

struct DelexEntry {
  int utterance_index = 0;
  std::string entity_id;
  std::string placeholder;
  std::string original;
  std::size_t begin = 0;  // byte range of the placeholder in the delexicalised text
  std::size_t end = 0;

  bool operator==(const DelexEntry&) const = default;
};

using DelexMap = std::vector<DelexEntry>;

// Replaces every matched mention by its kind placeholder. A dialogue may only
// mention one movie.
inline std::pair<Dialogue, DelexMap> delexicalise(const Dialogue& dialogue, const std::vector<EntityMatch>& matches) {
  std::set<std::string> movies;
  for (const auto& m : matches)
    if (m.entity.kind == EntityKind::movie) movies.insert(m.entity.id);
  if (movies.size() > 1) throw Error("dialogue '" + dialogue.id + "' mentions more than one movie");

  Dialogue out = dialogue;
  DelexMap map;
  for (auto& u : out.utterances) {
    std::vector<EntityMatch> ms;
    for (const auto& m : matches)
      if (m.utterance_index == u.index) ms.push_back(m);
    if (ms.empty()) continue;
    std::sort(ms.begin(), ms.end(), [](const auto& a, const auto& b) { return a.span.begin < b.span.begin; });
    auto tokens = word_tokens(u.text);
    std::string text;
    std::size_t cursor = 0;
    std::size_t last_end = 0;
    for (const auto& m : ms) {
      if (m.span.end > tokens.size() || m.span.begin >= m.span.end)
        throw Error("delexicalise: match span out of bounds in dialogue '" + dialogue.id + "'");
      if (m.span.begin < last_end) throw Error("delexicalise: overlapping matches in dialogue '" + dialogue.id + "'");
      last_end = m.span.end;
      std::size_t b = tokens[m.span.begin].begin, e = tokens[m.span.end - 1].end;
      text.append(u.text, cursor, b - cursor);
      DelexEntry entry{u.index, m.entity.id, placeholder_for(m.entity), u.text.substr(b, e - b), text.size(), 0};
      text += entry.placeholder;
      entry.end = text.size();
      map.push_back(std::move(entry));
      cursor = e;
    }
    text.append(u.text, cursor);
    u.text = std::move(text);
  }
  return {std::move(out), std::move(map)};
}

inline Dialogue relexicalise(const Dialogue& delexed, const DelexMap& map) {
  Dialogue out = delexed;
  for (auto& u : out.utterances) {
    std::vector<const DelexEntry*> es;
    for (const auto& e : map)
      if (e.utterance_index == u.index) es.push_back(&e);
    std::sort(es.begin(), es.end(), [](auto a, auto b) { return a->begin > b->begin; });
    for (const auto* e : es) {
      if (e->end > u.text.size() || u.text.compare(e->begin, e->end - e->begin, e->placeholder) != 0)
        throw Error("relexicalise: placeholder mismatch in dialogue '" + delexed.id + "'");
      u.text.replace(e->begin, e->end - e->begin, e->original);
    }
  }
  return out;
}

namespace detail {

// Case-insensitive whole-word replacement of `needle` in `text`.
inline std::string replace_words(const std::string& text, const std::string& needle, const std::string& with) {
  if (needle.empty()) return text;
  std::string low = to_lower(text), n = to_lower(needle);
  std::string out;
  std::size_t cursor = 0;
  for (std::size_t pos = low.find(n); pos != std::string::npos; pos = low.find(n, pos)) {
    bool left_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(low[pos - 1]));
    std::size_t end = pos + n.size();
    bool right_ok = end == low.size() || !is_word_byte(static_cast<unsigned char>(low[end]));
    if (!left_ok || !right_ok) {
      ++pos;
      continue;
    }
    out.append(text, cursor, pos - cursor);
    out += with;
    cursor = end;
    pos = end;
  }
  out.append(text, cursor);
  return out;
}

}  // namespace detail

// Profile with entity surfaces in fact texts and opinion targets replaced by
// placeholders. Longer surfaces are replaced first.
inline Profile delexicalise_profile(const Profile& p) {
  Profile out = p;
  auto entities = profile_entities(p);
  std::stable_sort(entities.begin(), entities.end(),
                   [](const auto& a, const auto& b) { return a.surface.size() > b.surface.size(); });
  for (auto& f : out.facts)
    for (const auto& e : entities) f.text = detail::replace_words(f.text, e.surface, placeholder_for(e));
  for (auto& o : out.opinions) o.target.surface = placeholder_for(o.target);
  return out;
}

// ---------------------------------------------------------------------------
// Sample construction

enum class PositionMode { restart, continuous };

inline PositionMode parse_position_mode(std::string_view s) {
  if (s == "restart") return PositionMode::restart;
  if (s == "continuous") return PositionMode::continuous;
  throw ConfigError("unknown position mode '" + std::string(s) + "'");
}

inline std::string_view to_string(PositionMode m) { return m == PositionMode::restart ? "restart" : "continuous"; }

struct BuildOptions {
  std::size_t max_len = kDefaultMaxLen;
  PositionMode positions = PositionMode::restart;
};

// Unpadded prefix up to and including the history; generation continues from
// `next_position` with the content id of `speaker`.
struct SampleContext {
  EncodedSample prefix;
  Speaker speaker = Speaker::A;
  int next_position = 0;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t dropped_turns = 0;
};

// Fact group: rank of the fact's target id among the distinct target ids.
inline std::vector<int> fact_groups(const std::vector<Fact>& facts) {
  std::set<std::string> ids;
  for (const auto& f : facts) ids.insert(f.target.id);
  std::vector<int> out;
  for (const auto& f : facts) {
    int rank = static_cast<int>(std::distance(ids.begin(), ids.find(f.target.id)));
    out.push_back(kContentFactBase + std::min(rank, kFactGroups - 1));
  }
  return out;
}

// Builds the grounding and history part. `reserve` tokens are kept free for
// the next utterance and the classification token; the oldest history turns
// are dropped until everything fits.
inline SampleContext build_context(const Profile& profile, const std::vector<Utterance>& history, Speaker speaker,
                                   const Tokenizer& tok, std::size_t reserve, const BuildOptions& opts = {}) {
  SampleContext ctx;
  ctx.speaker = speaker;
  ctx.max_len = opts.max_len;
  EncodedSample& s = ctx.prefix;
  int max_pos = -1;
  auto groups = fact_groups(profile.facts);
  for (std::size_t i = 0; i < profile.facts.size(); ++i) {
    auto ids = tok.encode(profile.facts[i].text);
    for (std::size_t k = 0; k < ids.size(); ++k) s.push(ids[k], groups[i], static_cast<int>(k), false);
    max_pos = std::max(max_pos, static_cast<int>(ids.size()) - 1);
  }
  for (const auto& o : profile.opinions) {
    auto ids = tok.encode(o.target.surface);
    for (std::size_t k = 0; k < ids.size(); ++k)
      s.push(ids[k], attitude_content(o.strength), static_cast<int>(k), false);
    max_pos = std::max(max_pos, static_cast<int>(ids.size()) - 1);
  }
  if (s.size() + reserve > opts.max_len)
    throw Error("sample too long: grounding uses " + std::to_string(s.size()) + " tokens, " +
                std::to_string(reserve) + " reserved, limit " + std::to_string(opts.max_len));

  std::vector<std::vector<int>> turns;
  for (const auto& u : history) turns.push_back(tok.encode(u.text));
  std::size_t budget = opts.max_len - s.size() - reserve;
  std::size_t first = 0, total = 0;
  for (const auto& t : turns) total += t.size();
  while (total > budget) {
    total -= turns[first].size();
    ++first;
  }
  ctx.dropped_turns = first;
  int pos = opts.positions == PositionMode::restart ? 0 : max_pos + 1;
  for (std::size_t i = first; i < history.size(); ++i)
    for (int id : turns[i]) s.push(id, speaker_content(history[i].speaker), pos++, false);
  ctx.next_position = pos;
  return ctx;
}

// Prefix plus generated tokens, unpadded and without <clf>.
inline EncodedSample extend(const SampleContext& ctx, const std::vector<int>& tokens) {
  EncodedSample s = ctx.prefix;
  int pos = ctx.next_position;
  for (int id : tokens) s.push(id, speaker_content(ctx.speaker), pos++, true);
  return s;
}

// Prefix plus `tokens`, the classification token and padding.
inline EncodedSample finalize(const SampleContext& ctx, const std::vector<int>& tokens, const Tokenizer& tok) {
  EncodedSample s = extend(ctx, tokens);
  if (s.size() + 1 > ctx.max_len)
    throw Error("sample too long: " + std::to_string(s.size() + 1) + " tokens, limit " + std::to_string(ctx.max_len));
  s.push(tok.clf_id(), speaker_content(ctx.speaker), ctx.next_position + static_cast<int>(tokens.size()), false);
  s.clf_index = s.size() - 1;
  while (s.size() < ctx.max_len) s.push(tok.pad_id(), kContentPad, 0, false);
  return s;
}

inline EncodedSample build_sample(const Profile& profile, const std::vector<Utterance>& history, const Utterance& next,
                                  const Tokenizer& tok, const BuildOptions& opts = {}) {
  auto ids = tok.encode(next.text);
  auto ctx = build_context(profile, history, next.speaker, tok, ids.size() + 1, opts);
  return finalize(ctx, ids, tok);
}

struct CandidateSet {
  std::vector<EncodedSample> candidates;
  int label = 0;

  bool operator==(const CandidateSet&) const = default;
};

// Gold plus `distractors` at a seeded random position. Every candidate shares
// the same (possibly truncated) history.
inline CandidateSet assemble_candidates(const Profile& profile, const std::vector<Utterance>& history,
                                        const Utterance& next, const std::vector<std::string>& distractors,
                                        const Tokenizer& tok, Rng& rng, const BuildOptions& opts = {},
                                        std::size_t num_distractors = 3) {
  if (distractors.size() < num_distractors)
    throw Error("assemble_candidates: " + std::to_string(num_distractors) + " distractors required, " +
                std::to_string(distractors.size()) + " supplied");
  std::string gold = normalize_space(to_lower(next.text));
  std::vector<std::vector<int>> encoded;
  for (std::size_t i = 0; i < num_distractors; ++i) {
    if (normalize_space(to_lower(distractors[i])) == gold)
      throw Error("assemble_candidates: distractor equals the true utterance");
    encoded.push_back(tok.encode(distractors[i]));
  }
  auto gold_ids = tok.encode(next.text);
  std::size_t longest = gold_ids.size();
  for (const auto& e : encoded) longest = std::max(longest, e.size());
  auto ctx = build_context(profile, history, next.speaker, tok, longest + 1, opts);

  CandidateSet set;
  set.label = std::uniform_int_distribution<int>(0, static_cast<int>(num_distractors))(rng);
  std::size_t d = 0;
  for (int i = 0; i <= static_cast<int>(num_distractors); ++i) {
    auto s = finalize(ctx, i == set.label ? gold_ids : encoded[d++], tok);
    s.label = set.label;
    set.candidates.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Binary sample files
//
// samples.bin, little-endian, records back to back:
//   u32 num_candidates
//   u32 label
//   per candidate:
//     u32 clf_index
//     i32 token_ids[L]
//     i32 content_ids[L]
//     i32 position_ids[L]
//     u8  lm_mask[L]
// L is max_len from the sidecar samples.bin.json.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& at) {
  if (at + 4 > in.size()) throw ParseError("samples: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += 4;
  return v;
}

}  // namespace detail

struct SamplesHeader {
  std::size_t max_len = kDefaultMaxLen;
  std::size_t num_records = 0;
  int vocab_size = 0;
  int pad_id = 0;
  int clf_id = 0;
  PositionMode positions = PositionMode::restart;
};

inline Json to_json(const SamplesHeader& h) {
  return {{"format", "opdial-samples"},
          {"version", 1},
          {"byte_order", "little"},
          {"max_len", h.max_len},
          {"num_records", h.num_records},
          {"vocab_size", h.vocab_size},
          {"content_vocab", kContentVocab},
          {"pad_id", h.pad_id},
          {"clf_id", h.clf_id},
          {"positions", to_string(h.positions)},
          {"record",
           "u32 num_candidates, u32 label, then per candidate: u32 clf_index, i32 token_ids[max_len], "
           "i32 content_ids[max_len], i32 position_ids[max_len], u8 lm_mask[max_len]"}};
}

inline std::string encode_samples(const std::vector<CandidateSet>& sets, std::size_t max_len) {
  std::string out;
  for (const auto& set : sets) {
    detail::put_u32(out, static_cast<std::uint32_t>(set.candidates.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(set.label));
    for (const auto& c : set.candidates) {
      if (c.size() != max_len) throw Error("encode_samples: candidate is not padded to max_len");
      detail::put_u32(out, static_cast<std::uint32_t>(c.clf_index));
      for (const auto* ch : {&c.token_ids, &c.content_ids, &c.position_ids})
        for (int v : *ch) detail::put_u32(out, static_cast<std::uint32_t>(v));
      for (auto m : c.lm_mask) out.push_back(static_cast<char>(m));
    }
  }
  return out;
}

inline std::vector<CandidateSet> decode_samples(const std::string& bytes, std::size_t max_len) {
  std::vector<CandidateSet> sets;
  std::size_t at = 0;
  while (at < bytes.size()) {
    CandidateSet set;
    std::uint32_t n = detail::get_u32(bytes, at);
    set.label = static_cast<int>(detail::get_u32(bytes, at));
    for (std::uint32_t i = 0; i < n; ++i) {
      EncodedSample s;
      s.clf_index = detail::get_u32(bytes, at);
      s.label = set.label;
      for (auto* ch : {&s.token_ids, &s.content_ids, &s.position_ids})
        for (std::size_t k = 0; k < max_len; ++k) ch->push_back(static_cast<std::int32_t>(detail::get_u32(bytes, at)));
      if (at + max_len > bytes.size()) throw ParseError("samples: truncated file");
      for (std::size_t k = 0; k < max_len; ++k) s.lm_mask.push_back(static_cast<std::uint8_t>(bytes[at + k]));
      at += max_len;
      set.candidates.push_back(std::move(s));
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

inline void write_samples(const std::filesystem::path& path, const std::vector<CandidateSet>& sets,
                          SamplesHeader header) {
  header.num_records = sets.size();
  write_file_atomic(path, encode_samples(sets, header.max_len));
  auto sidecar = path;
  sidecar += ".json";
  write_file_atomic(sidecar, to_json(header).dump(1) + "\n");
}

inline std::pair<SamplesHeader, std::vector<CandidateSet>> read_samples(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar += ".json";
  Json j = read_json_file(sidecar);
  if (j.value("format", "") != "opdial-samples" || j.value("version", 0) != 1)
    throw SchemaError("'" + sidecar.string() + "' is not a version 1 samples header");
  SamplesHeader h;
  h.max_len = j.at("max_len").get<std::size_t>();
  h.num_records = j.at("num_records").get<std::size_t>();
  h.vocab_size = j.value("vocab_size", 0);
  h.pad_id = j.value("pad_id", 0);
  h.clf_id = j.value("clf_id", 0);
  h.positions = parse_position_mode(j.value("positions", "restart"));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto sets = decode_samples(bytes, h.max_len);
  if (sets.size() != h.num_records) throw ParseError("samples: record count does not match header");
  return {h, std::move(sets)};
}

// Sample as carried by the scorer protocol. Pad positions are omitted.
inline Json to_json(const EncodedSample& s) {
  std::size_t n = s.size();
  while (n > 0 && n - 1 > s.clf_index && s.content_ids[n - 1] == kContentPad) --n;
  auto cut = [n](const auto& v) { return std::vector<int>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n)); };
  return {{"token_ids", cut(s.token_ids)},
          {"content_ids", cut(s.content_ids)},
          {"position_ids", cut(s.position_ids)},
          {"lm_mask", cut(s.lm_mask)},
          {"clf_index", s.clf_index}};
}

inline EncodedSample sample_from_json(const Json& j) {
  EncodedSample s;
  try {
    s.token_ids = j.at("token_ids").get<std::vector<int>>();
    s.content_ids = j.at("content_ids").get<std::vector<int>>();
    s.position_ids = j.at("position_ids").get<std::vector<int>>();
    auto m = j.at("lm_mask").get<std::vector<int>>();
    s.lm_mask.assign(m.begin(), m.end());
    s.clf_index = j.value("clf_index", std::size_t(0));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("sample: ") + e.what());
  }
  if (s.content_ids.size() != s.size() || s.position_ids.size() != s.size() || s.lm_mask.size() != s.size())
    throw SchemaError("sample: channel lengths differ");
  return s;
}

}  // namespace opdial
