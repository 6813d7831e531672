// opdial command line.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "opdial/opdial.hpp"

namespace fs = std::filesystem;
using namespace opdial;

namespace {

void emit(const Json& j, const std::string& out) {
  if (out.empty())
    std::cout << j.dump(1) << "\n";
  else
    write_file_atomic(out, j.dump(1) + "\n");
}

std::array<double, 3> parse_fractions(const std::string& s) {
  auto parts = split(s, ',');
  if (parts.size() != 3) throw ConfigError("--fractions needs three comma-separated values");
  std::array<double, 3> f{};
  for (int i = 0; i < 3; ++i) {
    try {
      f[i] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw ConfigError("--fractions: '" + parts[i] + "' is not a number");
    }
  }
  return f;
}

std::vector<std::size_t> parse_hits(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& p : split(s, ',')) {
    try {
      out.push_back(std::stoul(p));
    } catch (const std::exception&) {
      throw ConfigError("--hits: '" + p + "' is not a positive integer");
    }
  }
  return out;
}

MatchTable load_or_resolve(const Corpus& corpus, const std::string& matches_path, const ResolveOptions& opts) {
  if (!matches_path.empty()) return match_table_from_json(read_json_file(matches_path));
  CharTrigramEmbedder embedder;
  return resolve_corpus(corpus, embedder, nullptr, opts);
}

// Delexicalised corpus unless --no-delex was given.
Corpus prepared(const std::string& corpus_path, const std::string& matches_path, bool delex) {
  Corpus c = ingest(corpus_path);
  if (!delex) return c;
  return delexicalise_corpus(c, load_or_resolve(c, matches_path, {}));
}

const Dialogue& find_dialogue(const Corpus& c, const std::string& id) {
  for (const auto& d : c.dialogues)
    if (d.id == id) return d;
  throw Error("dialogue '" + id + "' not found");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Opinion-grounded dialogue corpus toolkit"};
  app.require_subcommand(1);

  // ingest
  std::string in_path, out_path, corpus_path, matches_path, tok_path, scorer_cmd;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a corpus and write it in canonical form");
  ingest_cmd->add_option("input", in_path, "Corpus JSON")->required();
  ingest_cmd->add_option("--out", out_path, "Canonical corpus output");
  ingest_cmd->callback([&] {
    Corpus c = ingest(in_path);
    if (out_path.empty())
      std::cout << to_json(c).dump(1) << "\n";
    else
      write_corpus(c, out_path);
    std::cerr << "ingested " << c.dialogues.size() << " dialogues\n";
  });

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics");
  stats_cmd->add_option("--corpus", corpus_path)->required();
  stats_cmd->add_option("--out", out_path);
  stats_cmd->callback([&] { emit(to_json(compute_stats(ingest(corpus_path))), out_path); });

  // split
  std::uint64_t seed = 0;
  std::string fractions = "0.8,0.1,0.1";
  auto* split_cmd = app.add_subcommand("split", "Movie-disjoint train/valid/test split");
  split_cmd->add_option("--corpus", corpus_path)->required();
  split_cmd->add_option("--seed", seed)->required();
  split_cmd->add_option("--fractions", fractions, "train,valid,test")->capture_default_str();
  split_cmd->add_option("--out", out_path);
  split_cmd->callback([&] {
    Corpus c = ingest(corpus_path);
    auto s = split_by_movie(c, parse_fractions(fractions), seed);
    std::array<std::size_t, 3> n{};
    for (const auto& d : c.dialogues) ++n[static_cast<int>(s.of(d.movie_id))];
    emit(to_json(s), out_path);
    std::cerr << "train " << n[0] << ", valid " << n[1] << ", test " << n[2] << " dialogues\n";
  });

  // gen-profiles
  std::string kb_path, relation = "none", movie_id;
  std::size_t count = 1;
  auto* gen_cmd = app.add_subcommand("gen-profiles", "Generate profile pairs from a knowledge base");
  gen_cmd->add_option("--movie-kb", kb_path)->required();
  gen_cmd->add_option("--relation", relation, "equal|compatible|conflicting|none")->capture_default_str();
  gen_cmd->add_option("--seed", seed)->required();
  gen_cmd->add_option("--count", count)->capture_default_str();
  gen_cmd->add_option("--movie", movie_id, "Movie id (default: cycle through the knowledge base)");
  gen_cmd->add_option("--out", out_path);
  gen_cmd->callback([&] {
    KnowledgeBase kb = load_kb(kb_path);
    if (kb.movies.empty()) throw Error("knowledge base has no movies");
    std::optional<ProfileRelation> rel;
    if (relation != "none") rel = parse_relation(relation);
    ProfileGenerator gen(kb);
    Rng rng(seed);
    Json out = Json::array();
    for (std::size_t i = 0; i < count; ++i) {
      const std::string& m = movie_id.empty() ? kb.movies[i % kb.movies.size()].movie.id : movie_id;
      auto [a, b] = gen.generate_pair(m, rel, rng);
      out.push_back({{"movie_id", m},
                     {"relation", to_string(unify(a, b))},
                     {"profile_a", to_json(a)},
                     {"profile_b", to_json(b)}});
    }
    emit(out, out_path);
  });

  // resolve
  ResolveOptions ropts;
  auto* resolve_cmd = app.add_subcommand("resolve", "Detect profile-entity mentions");
  resolve_cmd->add_option("--corpus", corpus_path)->required();
  resolve_cmd->add_option("--cosine", ropts.cosine_threshold)->capture_default_str();
  resolve_cmd->add_option("--levenshtein", ropts.levenshtein_threshold)->capture_default_str();
  resolve_cmd->add_option("--jaccard", ropts.jaccard_threshold)->capture_default_str();
  resolve_cmd->add_option("--out", out_path);
  resolve_cmd->callback([&] {
    CharTrigramEmbedder embedder;
    emit(to_json(resolve_corpus(ingest(corpus_path), embedder, nullptr, ropts)), out_path);
  });

  // coverage
  auto* coverage_cmd = app.add_subcommand("coverage", "Fraction of profile entities mentioned per dialogue");
  coverage_cmd->add_option("--corpus", corpus_path)->required();
  coverage_cmd->add_option("--matches", matches_path, "Matches from 'resolve' (resolved on the fly if absent)");
  coverage_cmd->add_option("--out", out_path);
  coverage_cmd->callback([&] {
    Corpus c = ingest(corpus_path);
    auto r = coverage(c, load_or_resolve(c, matches_path, ropts));
    emit({{"coverage", r.coverage}, {"dialogues", r.dialogues}, {"skipped", r.skipped}}, out_path);
  });

  // eval-ner
  std::string gold_path;
  auto* ner_cmd = app.add_subcommand("eval-ner", "Precision/recall of mention detection against gold spans");
  ner_cmd->add_option("--corpus", corpus_path)->required();
  ner_cmd->add_option("--gold", gold_path)->required();
  ner_cmd->add_option("--matches", matches_path);
  ner_cmd->add_option("--out", out_path);
  ner_cmd->callback([&] {
    Corpus c = ingest(corpus_path);
    auto s = evaluate_ner(to_records(load_or_resolve(c, matches_path, ropts)),
                          gold_from_json(read_json_file(gold_path)));
    emit({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}, out_path);
  });

  // adherence
  std::string annotator = "default", labeled_out;
  auto* adh_cmd = app.add_subcommand("adherence", "Compare expressed sentiment with profile opinions");
  adh_cmd->add_option("--corpus", corpus_path)->required();
  adh_cmd->add_option("--matches", matches_path);
  adh_cmd->add_option("--annotator", annotator, "'default' or a command speaking the annotator protocol")
      ->capture_default_str();
  adh_cmd->add_option("--labeled-out", labeled_out, "Corpus with sentiment labels");
  adh_cmd->add_option("--out", out_path);
  adh_cmd->callback([&] {
    Corpus c = ingest(corpus_path);
    MatchTable m = load_or_resolve(c, matches_path, ropts);
    AdherenceReport r;
    if (annotator == "default") {
      ClauseSplitParser parser;
      LexiconSentimentAnnotator lex;
      r = check_adherence(c, m, parser, lex);
    } else {
      ExternalAnnotator ext(annotator);
      r = check_adherence(c, m, ext, ext);
    }
    if (!labeled_out.empty()) write_corpus(emit_sentiment_labels(c, r.units), labeled_out);
    emit(to_json(r), out_path);
  });

  // encode
  std::size_t max_len = kDefaultMaxLen, k = 3;
  std::string positions = "restart", mode = "random";
  bool no_delex = false;
  auto* enc_cmd = app.add_subcommand("encode", "Build candidate sets and write the binary sample file");
  enc_cmd->add_option("--corpus", corpus_path)->required();
  enc_cmd->add_option("--tok", tok_path)->required();
  enc_cmd->add_option("--matches", matches_path);
  enc_cmd->add_option("--max-len", max_len)->capture_default_str();
  enc_cmd->add_option("--positions", positions, "restart|continuous")->capture_default_str();
  enc_cmd->add_option("--mode", mode, "random|rule")->capture_default_str();
  enc_cmd->add_option("--k", k, "Distractors per sample")->capture_default_str();
  enc_cmd->add_option("--seed", seed)->required();
  enc_cmd->add_flag("--no-delex", no_delex, "Keep entity surfaces");
  enc_cmd->add_option("--out", out_path)->required();
  enc_cmd->callback([&] {
    Corpus c = prepared(corpus_path, matches_path, !no_delex);
    BpeTokenizer tok = load_bpe(tok_path);
    DistractorPool pool(c);
    Rng rng(seed);
    BuildOptions b{max_len, parse_position_mode(positions)};
    auto r = encode_corpus(c, pool, tok, parse_distractor_mode(mode), k, rng, b);
    write_samples(out_path, r.sets, {max_len, 0, tok.vocab_size(), tok.pad_id(), tok.clf_id(), b.positions});
    std::cout << to_json(r).dump(1) << "\n";
  });

  // distractors
  std::string dialogue_id;
  int turn = -1;
  auto* dis_cmd = app.add_subcommand("distractors", "Sample distractors for one utterance or every utterance");
  dis_cmd->add_option("--corpus", corpus_path)->required();
  dis_cmd->add_option("--mode", mode, "random|rule")->capture_default_str();
  dis_cmd->add_option("--k", k)->capture_default_str();
  dis_cmd->add_option("--seed", seed)->required();
  dis_cmd->add_option("--dialogue", dialogue_id);
  dis_cmd->add_option("--turn", turn, "Utterance index within --dialogue");
  dis_cmd->add_option("--out", out_path);
  dis_cmd->callback([&] {
    Corpus c = ingest(corpus_path);
    DistractorPool pool(c);
    Rng rng(seed);
    auto m = parse_distractor_mode(mode);
    Json out = Json::array();
    for (const auto& d : c.dialogues) {
      if (!dialogue_id.empty() && d.id != dialogue_id) continue;
      for (const auto& u : d.utterances) {
        if (turn >= 0 && u.index != turn) continue;
        auto r = m == DistractorMode::random
                     ? random_distractors(pool, d.movie_id, d.id, u.text, k, rng)
                     : rule_based_distractors(pool, d.movie_id, d.id, u.text, u.sentiment_labels, k, rng);
        Json ds = Json::array();
        for (const auto& x : r.distractors) ds.push_back(to_json(x));
        out.push_back({{"dialogue_id", d.id}, {"utterance_index", u.index}, {"fallback", r.fallback}, {"distractors", ds}});
      }
    }
    emit(out, out_path);
  });

  // decode
  BeamOptions bopts;
  double lambda = 1.0;
  auto* dec_cmd = app.add_subcommand("decode", "Beam-search the next utterance of a dialogue");
  dec_cmd->add_option("--corpus", corpus_path)->required();
  dec_cmd->add_option("--tok", tok_path)->required();
  dec_cmd->add_option("--scorer-cmd", scorer_cmd)->required();
  dec_cmd->add_option("--matches", matches_path);
  dec_cmd->add_option("--dialogue", dialogue_id)->required();
  dec_cmd->add_option("--turn", turn, "Index of the utterance to generate")->required();
  dec_cmd->add_option("--beam", bopts.beam)->capture_default_str();
  dec_cmd->add_option("--alpha", bopts.alpha)->capture_default_str();
  dec_cmd->add_option("--lambda", lambda)->capture_default_str();
  dec_cmd->add_option("--max-tokens", bopts.max_len)->capture_default_str();
  dec_cmd->add_option("--max-len", max_len)->capture_default_str();
  dec_cmd->add_flag("--no-trigram-filter", [&](std::int64_t) { bopts.trigram_filter = false; });
  dec_cmd->add_flag("--no-delex", no_delex);
  dec_cmd->add_option("--out", out_path);
  dec_cmd->callback([&] {
    Corpus c = prepared(corpus_path, matches_path, !no_delex);
    const Dialogue& d = find_dialogue(c, dialogue_id);
    auto it = std::find_if(d.utterances.begin(), d.utterances.end(), [&](const auto& u) { return u.index == turn; });
    if (it == d.utterances.end()) throw Error("dialogue '" + dialogue_id + "' has no utterance " + std::to_string(turn));
    BpeTokenizer tok = load_bpe(tok_path);
    std::vector<Utterance> history(d.utterances.begin(), it);
    auto ctx = build_context(d.profile(it->speaker), history, it->speaker, tok, bopts.max_len + 1,
                             {max_len, PositionMode::restart});
    bopts.eos = tok.clf_id();
    SubprocessScorer scorer(scorer_cmd);
    auto res = beam_search(ctx, scorer, bopts);
    auto sel = select_final(res.hypotheses, ctx, scorer, tok, lambda);
    Json hyps = Json::array();
    for (std::size_t i = 0; i < res.hypotheses.size(); ++i) {
      Json h = to_json(res.hypotheses[i]);
      h["final_score"] = sel.scores[i];
      h["text"] = tok.decode(res.hypotheses[i].tokens);
      hyps.push_back(h);
    }
    auto best = res.hypotheses[sel.index].tokens;
    if (!best.empty() && best.back() == tok.clf_id()) best.pop_back();
    Json out = {{"text", tok.decode(best)}, {"hypotheses", hyps}, {"fallback", sel.fallback},
                {"warnings", res.warnings}};
    if (sel.fallback) out["classifier_error"] = sel.error;
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    emit(out, out_path);
  });

  // eval
  std::string hits = "1,3";
  std::size_t num_distractors = 19;
  std::size_t limit = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Perplexity and hits@n against a scorer");
  eval_cmd->add_option("--corpus", corpus_path)->required();
  eval_cmd->add_option("--tok", tok_path)->required();
  eval_cmd->add_option("--scorer-cmd", scorer_cmd)->required();
  eval_cmd->add_option("--matches", matches_path);
  eval_cmd->add_option("--hits", hits)->capture_default_str();
  eval_cmd->add_option("--distractors", num_distractors)->capture_default_str();
  eval_cmd->add_option("--seed", seed)->required();
  eval_cmd->add_option("--max-len", max_len)->capture_default_str();
  eval_cmd->add_option("--limit", limit, "Evaluate at most this many items (0 = all)");
  eval_cmd->add_flag("--no-delex", no_delex);
  eval_cmd->add_option("--out", out_path);
  eval_cmd->callback([&] {
    Corpus c = prepared(corpus_path, matches_path, !no_delex);
    BpeTokenizer tok = load_bpe(tok_path);
    DistractorPool pool(c);
    SubprocessScorer scorer(scorer_cmd);
    Rng rng(seed);
    auto items = eval_items(c);
    if (limit && items.size() > limit) items.resize(limit);
    EvalOptions eo{parse_hits(hits), num_distractors, {max_len, PositionMode::restart}, true};
    auto r = evaluate(items, pool, scorer, tok, rng, eo);
    emit(to_json(r), out_path);
    if (r.error) throw Error(*r.error);
  });

  // run
  std::string config_path;
  bool dry_run = false;
  auto* run_cmd = app.add_subcommand("run", "Run the configured pipeline");
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_flag("--dry-run", dry_run, "Print the plan without writing anything");
  run_cmd->callback([&] {
    PipelineConfig cfg = load_config(config_path);
    if (dry_run) {
      for (const auto& s : plan(cfg)) {
        std::cout << s.name << ":";
        for (const auto& i : s.inputs) std::cout << " <" << i;
        for (const auto& o : s.outputs) std::cout << " >" << (cfg.out_dir / o).lexically_normal().string();
        std::cout << "\n";
      }
      return;
    }
    run(cfg, std::cerr);
  });

  // train-bpe
  std::size_t merges = 500;
  auto* bpe_cmd = app.add_subcommand("train-bpe", "Train a byte-level BPE tokenizer on corpus utterances");
  bpe_cmd->add_option("--corpus", corpus_path)->required();
  bpe_cmd->add_option("--merges", merges)->capture_default_str();
  bpe_cmd->add_option("--matches", matches_path);
  bpe_cmd->add_flag("--no-delex", no_delex);
  bpe_cmd->add_option("--out", out_path)->required();
  bpe_cmd->callback([&] {
    Corpus c = prepared(corpus_path, matches_path, !no_delex);
    std::vector<std::string> texts;
    for (const auto& d : c.dialogues)
      for (const auto& u : d.utterances) texts.push_back(u.text);
    BpeTokenizer tok(train_bpe(texts, merges));
    write_file_atomic(out_path, to_json(tok).dump(1) + "\n");
    std::cerr << "vocabulary size " << tok.vocab_size() << "\n";
  });

  // stub-scorer
  int vocab = 0;
  auto* stub_cmd = app.add_subcommand("stub-scorer", "Serve a uniform scorer on stdin/stdout");
  stub_cmd->add_option("--vocab", vocab, "Vocabulary size");
  stub_cmd->add_option("--tok", tok_path, "Take the vocabulary size from a tokenizer");
  stub_cmd->add_option("--seed", seed)->capture_default_str();
  stub_cmd->callback([&] {
    if (!tok_path.empty()) vocab = load_bpe(tok_path).vocab_size();
    UniformScorer s(vocab, seed);
    serve_scorer(std::cin, std::cout, s);
  });

  // annotator-server
  auto* ann_cmd = app.add_subcommand("annotator-server", "Serve the built-in parser and lexicon on stdin/stdout");
  ann_cmd->callback([&] { serve_annotator(std::cin, std::cout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
