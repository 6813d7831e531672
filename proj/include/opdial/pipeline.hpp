#pragma once

// Corpus-level glue and the configured end-to-end run:
// ingest -> split -> resolve -> coverage -> adherence -> encode -> eval.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "opdial/corpus_io.hpp"
#include "opdial/decoding.hpp"
#include "opdial/distractors.hpp"
#include "opdial/error.hpp"
#include "opdial/metrics.hpp"
#include "opdial/resolution.hpp"
#include "opdial/scorer.hpp"
#include "opdial/sentiment.hpp"
#include "opdial/sequence.hpp"
#include "opdial/split.hpp"
#include "opdial/stats.hpp"
#include "opdial/tokenizer.hpp"

namespace opdial {

// ---------------------------------------------------------------------------
// Corpus helpers

// Delexicalised utterances and profiles. Dialogues without a match entry are
// copied with delexicalised profiles only.
inline Corpus delexicalise_corpus(const Corpus& corpus, const MatchTable& matches) {
  Corpus out;
  for (const auto& d : corpus.dialogues) {
    auto it = matches.find(d.id);
    Dialogue dd = it == matches.end() ? d : delexicalise(d, it->second).first;
    dd.profile_a = delexicalise_profile(d.profile_a);
    dd.profile_b = delexicalise_profile(d.profile_b);
    out.dialogues.push_back(std::move(dd));
  }
  return out;
}

inline Corpus select_split(const Corpus& corpus, const SplitAssignment& split, Split which) {
  Corpus out;
  for (const auto& d : corpus.dialogues)
    if (split.of(d.movie_id) == which) out.dialogues.push_back(d);
  return out;
}

enum class DistractorMode { random, rule };

inline DistractorMode parse_distractor_mode(std::string_view s) {
  if (s == "random") return DistractorMode::random;
  if (s == "rule") return DistractorMode::rule;
  throw ConfigError("unknown distractor mode '" + std::string(s) + "'");
}

struct EncodeReport {
  std::vector<CandidateSet> sets;
  std::size_t skipped_pool = 0;
  std::size_t skipped_length = 0;
  std::size_t fallback = 0;
  std::map<int, std::size_t> tiers;
};

// One candidate set per utterance after the first. Distractors are drawn from
// `pool`, which should hold the same (delexicalised) text as `corpus`.
inline EncodeReport encode_corpus(const Corpus& corpus, const DistractorPool& pool, const Tokenizer& tok,
                                  DistractorMode mode, std::size_t k, Rng& rng, const BuildOptions& build = {}) {
  EncodeReport r;
  for (const auto& item : eval_items(corpus)) {
    DistractorResult ds;
    try {
      ds = mode == DistractorMode::random
               ? random_distractors(pool, item.movie_id, item.dialogue_id, item.next.text, k, rng)
               : rule_based_distractors(pool, item.movie_id, item.dialogue_id, item.next.text,
                                        item.next.sentiment_labels, k, rng);
    } catch (const PoolExhausted&) {
      ++r.skipped_pool;
      continue;
    }
    r.fallback += ds.fallback;
    try {
      r.sets.push_back(assemble_candidates(item.profile, item.history, item.next, ds.texts(), tok, rng, build, k));
    } catch (const Error&) {
      ++r.skipped_length;
      continue;
    }
    for (const auto& d : ds.distractors) ++r.tiers[d.tier];
  }
  return r;
}

inline Json to_json(const EncodeReport& r) {
  Json tiers = Json::object();
  for (const auto& [t, n] : r.tiers) tiers[std::to_string(t)] = n;
  return {{"records", r.sets.size()},
          {"skipped_pool", r.skipped_pool},
          {"skipped_length", r.skipped_length},
          {"fallback", r.fallback},
          {"tiers", tiers}};
}

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> tokenizer;  // trained on the corpus when absent
  std::size_t bpe_merges = 500;

  std::uint64_t seed_split = 0;
  std::uint64_t seed_encode = 0;
  std::uint64_t seed_eval = 0;

  std::array<double, 3> fractions = {0.8, 0.1, 0.1};
  ResolveOptions resolve;
  std::string annotator = "default";

  std::size_t max_len = kDefaultMaxLen;
  PositionMode positions = PositionMode::restart;
  DistractorMode distractor_mode = DistractorMode::random;
  std::size_t distractors = 3;

  std::size_t beam = 4;
  double alpha = 0.6;
  double lambda = 1.0;
  std::size_t decode_max_tokens = 40;
  std::size_t decode_items = 0;

  std::optional<std::string> scorer_cmd;
  std::vector<std::size_t> hits = {1, 3};
  std::size_t eval_distractors = 19;
};

namespace detail {

template <typename T>
T config_value(const Json& section, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline const Json& config_section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  if (!j.contains(key)) return empty;
  if (!j[key].is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return j[key];
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.corpus.empty()) fail("config: 'corpus' is required");
  if (c.out_dir.empty()) fail("config: 'out_dir' is required");
  if (!(c.resolve.cosine_threshold > 0 && c.resolve.cosine_threshold <= 1)) fail("config: cosine must be in (0, 1]");
  if (!(c.resolve.jaccard_threshold >= 0 && c.resolve.jaccard_threshold <= 1)) fail("config: jaccard must be in [0, 1]");
  if (c.resolve.levenshtein_threshold > 64) fail("config: levenshtein must be in [0, 64]");
  double sum = 0;
  for (double f : c.fractions) {
    if (!(f >= 0 && f <= 1)) fail("config: split fractions must be in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1) > 1e-9) fail("config: split fractions must sum to 1");
  if (c.max_len < 8 || c.max_len > 1 << 16) fail("config: max_len must be in [8, 65536]");
  if (c.distractors < 1) fail("config: distractors must be at least 1");
  if (c.beam < 1) fail("config: beam must be at least 1");
  if (!(c.alpha >= 0 && c.alpha <= 10)) fail("config: alpha must be in [0, 10]");
  if (!std::isfinite(c.lambda)) fail("config: lambda must be finite");
  if (c.decode_max_tokens < 1) fail("config: decode max_tokens must be at least 1");
  if (c.eval_distractors < 1) fail("config: eval distractors must be at least 1");
  for (auto n : c.hits)
    if (n < 1 || n > c.eval_distractors + 1) fail("config: hits values must be in [1, distractors + 1]");
}

// Keys: corpus, out_dir, tokenizer, bpe_merges,
// seeds {split, encode, eval} (all required),
// split {fractions}, resolve {cosine, levenshtein, jaccard},
// adherence {annotator}, encode {max_len, positions, distractor_mode, distractors},
// decode {beam, alpha, lambda, max_tokens, items}, eval {scorer_cmd, hits, distractors}.
inline PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  auto path = [&](const std::string& p) {
    std::filesystem::path x(p);
    return x.empty() || x.is_absolute() || base.empty() ? x : base / x;
  };
  c.corpus = path(detail::config_value<std::string>(j, "corpus", ""));
  c.out_dir = path(detail::config_value<std::string>(j, "out_dir", ""));
  if (j.contains("tokenizer")) c.tokenizer = path(j["tokenizer"].get<std::string>());
  c.bpe_merges = detail::config_value<std::size_t>(j, "bpe_merges", c.bpe_merges);

  const Json& seeds = detail::config_section(j, "seeds");
  for (const char* k : {"split", "encode", "eval"})
    if (!seeds.contains(k)) throw ConfigError(std::string("config: seeds.") + k + " is required");
  c.seed_split = detail::config_value<std::uint64_t>(seeds, "split", 0);
  c.seed_encode = detail::config_value<std::uint64_t>(seeds, "encode", 0);
  c.seed_eval = detail::config_value<std::uint64_t>(seeds, "eval", 0);

  const Json& split = detail::config_section(j, "split");
  if (split.contains("fractions")) {
    auto f = detail::config_value<std::vector<double>>(split, "fractions", {});
    if (f.size() != 3) throw ConfigError("config: split.fractions needs three values");
    c.fractions = {f[0], f[1], f[2]};
  }
  const Json& res = detail::config_section(j, "resolve");
  c.resolve.cosine_threshold = detail::config_value(res, "cosine", c.resolve.cosine_threshold);
  double lev = detail::config_value(res, "levenshtein", double(c.resolve.levenshtein_threshold));
  if (lev < 0 || lev != std::floor(lev)) throw ConfigError("config: levenshtein must be a non-negative integer");
  c.resolve.levenshtein_threshold = static_cast<std::size_t>(lev);
  c.resolve.jaccard_threshold = detail::config_value(res, "jaccard", c.resolve.jaccard_threshold);

  c.annotator = detail::config_value<std::string>(detail::config_section(j, "adherence"), "annotator", c.annotator);

  const Json& enc = detail::config_section(j, "encode");
  c.max_len = detail::config_value(enc, "max_len", c.max_len);
  c.positions = parse_position_mode(detail::config_value<std::string>(enc, "positions", "restart"));
  c.distractor_mode = parse_distractor_mode(detail::config_value<std::string>(enc, "distractor_mode", "random"));
  c.distractors = detail::config_value(enc, "distractors", c.distractors);

  const Json& dec = detail::config_section(j, "decode");
  c.beam = detail::config_value(dec, "beam", c.beam);
  c.alpha = detail::config_value(dec, "alpha", c.alpha);
  c.lambda = detail::config_value(dec, "lambda", c.lambda);
  c.decode_max_tokens = detail::config_value(dec, "max_tokens", c.decode_max_tokens);
  c.decode_items = detail::config_value(dec, "items", c.decode_items);

  const Json& ev = detail::config_section(j, "eval");
  if (ev.contains("scorer_cmd") && !ev["scorer_cmd"].is_null())
    c.scorer_cmd = detail::config_value<std::string>(ev, "scorer_cmd", "");
  c.hits = detail::config_value(ev, "hits", c.hits);
  c.eval_distractors = detail::config_value(ev, "distractors", c.eval_distractors);
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Run

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StagePlan {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

inline std::vector<StagePlan> plan(const PipelineConfig& c) {
  std::vector<StagePlan> p = {
      {"ingest", {c.corpus.string()}, {"corpus.json", "stats.json"}},
      {"split", {"corpus.json"}, {"split.json"}},
      {"resolve", {"corpus.json"}, {"matches.json"}},
      {"coverage", {"corpus.json", "matches.json"}, {"coverage.json"}},
      {"adherence", {"corpus.json", "matches.json"}, {"adherence.json", "labeled.json"}},
      {"tokenizer",
       {c.tokenizer ? c.tokenizer->string() : "labeled.json"},
       {"tokenizer.json"}},
      {"encode", {"labeled.json", "matches.json", "split.json", "tokenizer.json"}, {"samples.bin", "samples.bin.json", "encode.json"}},
  };
  if (c.scorer_cmd) {
    p.push_back({"eval", {"labeled.json", "split.json", "tokenizer.json"}, {"eval.json"}});
    if (c.decode_items) p.push_back({"decode", {"labeled.json", "split.json", "tokenizer.json"}, {"decoded.json"}});
  }
  return p;
}

inline std::string digest(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

inline std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + p.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return digest(bytes);
}

// Executes every stage of plan(config). Each stage writes its outputs
// atomically and logs "stage in=<digest> out=<digest>" lines to `log`. A
// manifest.json with all digests is written last.
inline void run(const PipelineConfig& c, std::ostream& log) {
  validate(c);
  const auto& dir = c.out_dir;
  Json manifest = {{"stages", Json::array()}};
  auto record = [&](const StagePlan& s) {
    Json in = Json::object(), out = Json::object();
    for (const auto& i : s.inputs) {
      std::filesystem::path p = std::filesystem::path(i).is_absolute() || i == c.corpus.string() ? std::filesystem::path(i) : dir / i;
      in[i] = file_digest(p);
    }
    for (const auto& o : s.outputs) out[o] = file_digest(dir / o);
    log << s.name;
    for (auto& [k, v] : in.items()) log << " in:" << k << "=" << v.get<std::string>();
    for (auto& [k, v] : out.items()) log << " out:" << k << "=" << v.get<std::string>();
    log << "\n";
    manifest["stages"].push_back({{"stage", s.name}, {"inputs", in}, {"outputs", out}});
  };
  auto write_json = [&](const std::string& name, const Json& j) { write_file_atomic(dir / name, j.dump(1) + "\n"); };

  Corpus corpus, labeled;
  SplitAssignment split;
  MatchTable matches;
  std::unique_ptr<BpeTokenizer> tok;
  BuildOptions build{c.max_len, c.positions};

  std::map<std::string, std::function<void()>> stages;
  stages["ingest"] = [&] {
    corpus = ingest(c.corpus);
    write_corpus(corpus, dir / "corpus.json");
    write_json("stats.json", to_json(compute_stats(corpus)));
  };
  stages["split"] = [&] {
    split = split_by_movie(corpus, c.fractions, c.seed_split);
    write_json("split.json", to_json(split));
  };
  stages["resolve"] = [&] {
    CharTrigramEmbedder embedder;
    matches = resolve_corpus(corpus, embedder, nullptr, c.resolve);
    write_json("matches.json", to_json(matches));
  };
  stages["coverage"] = [&] {
    auto cov = coverage(corpus, matches);
    write_json("coverage.json", {{"coverage", cov.coverage}, {"dialogues", cov.dialogues}, {"skipped", cov.skipped}});
  };
  stages["adherence"] = [&] {
    AdherenceReport rep;
    if (c.annotator == "default") {
      ClauseSplitParser parser;
      LexiconSentimentAnnotator lex;
      rep = check_adherence(corpus, matches, parser, lex);
    } else {
      ExternalAnnotator ext(c.annotator);
      rep = check_adherence(corpus, matches, ext, ext);
    }
    labeled = emit_sentiment_labels(corpus, rep.units);
    write_json("adherence.json", to_json(rep));
    write_corpus(labeled, dir / "labeled.json");
  };
  stages["tokenizer"] = [&] {
    if (c.tokenizer) {
      tok = std::make_unique<BpeTokenizer>(load_bpe(*c.tokenizer));
    } else {
      std::vector<std::string> texts;
      for (const auto& d : delexicalise_corpus(select_split(labeled, split, Split::train), matches).dialogues)
        for (const auto& u : d.utterances) texts.push_back(u.text);
      tok = std::make_unique<BpeTokenizer>(train_bpe(texts, c.bpe_merges));
    }
    write_json("tokenizer.json", to_json(*tok));
  };
  stages["encode"] = [&] {
    Corpus train = delexicalise_corpus(select_split(labeled, split, Split::train), matches);
    DistractorPool pool(train);
    Rng rng(c.seed_encode);
    auto rep = encode_corpus(train, pool, *tok, c.distractor_mode, c.distractors, rng, build);
    SamplesHeader h{c.max_len, 0, tok->vocab_size(), tok->pad_id(), tok->clf_id(), c.positions};
    write_samples(dir / "samples.bin", rep.sets, h);
    write_json("encode.json", to_json(rep));
  };
  stages["eval"] = [&] {
    Corpus test = delexicalise_corpus(select_split(labeled, split, Split::test), matches);
    DistractorPool pool(test);
    SubprocessScorer scorer(*c.scorer_cmd);
    Rng rng(c.seed_eval);
    EvalOptions eo{c.hits, c.eval_distractors, build, true};
    auto rep = evaluate(eval_items(test), pool, scorer, *tok, rng, eo);
    if (rep.error) throw Error(*rep.error);
    write_json("eval.json", to_json(rep));
  };
  stages["decode"] = [&] {
    Corpus test = delexicalise_corpus(select_split(labeled, split, Split::test), matches);
    SubprocessScorer scorer(*c.scorer_cmd);
    Json out = Json::array();
    auto items = eval_items(test);
    for (std::size_t i = 0; i < items.size() && i < c.decode_items; ++i) {
      const auto& it = items[i];
      auto ctx = build_context(it.profile, it.history, it.next.speaker, *tok, c.decode_max_tokens + 1, build);
      BeamOptions bo{c.beam, c.alpha, c.decode_max_tokens, tok->clf_id(), true};
      auto res = beam_search(ctx, scorer, bo);
      auto sel = select_final(res.hypotheses, ctx, scorer, *tok, c.lambda);
      auto toks = res.hypotheses[sel.index].tokens;
      if (!toks.empty() && toks.back() == tok->clf_id()) toks.pop_back();
      out.push_back({{"dialogue_id", it.dialogue_id},
                     {"utterance_index", it.next.index},
                     {"text", tok->decode(toks)},
                     {"fallback", sel.fallback},
                     {"warnings", res.warnings}});
    }
    write_json("decoded.json", out);
  };

  for (const auto& s : plan(c)) {
    try {
      stages.at(s.name)();
      record(s);
    } catch (const std::exception& e) {
      throw StageError(s.name, e.what());
    }
  }
  write_json("manifest.json", manifest);
}

}  // namespace opdial
