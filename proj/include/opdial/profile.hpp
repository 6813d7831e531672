#pragma once

// Speaker profiles as feature structures: the unification relation between
// two profiles, a movie knowledge base, and the constrained generator that
// samples fact sets and opinions for a profile pair.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "opdial/corpus_io.hpp"
#include "opdial/error.hpp"
#include "opdial/types.hpp"

namespace opdial {

enum class ProfileRelation { equal, compatible, conflicting };

inline std::string_view to_string(ProfileRelation r) {
  switch (r) {
    case ProfileRelation::equal: return "equal";
    case ProfileRelation::compatible: return "compatible";
    case ProfileRelation::conflicting: return "conflicting";
  }
  return "compatible";
}

inline ProfileRelation parse_relation(std::string_view s) {
  if (s == "equal") return ProfileRelation::equal;
  if (s == "compatible") return ProfileRelation::compatible;
  if (s == "conflicting") return ProfileRelation::conflicting;
  throw ConfigError("unknown profile relation '" + std::string(s) + "'");
}

namespace detail {

using FactKey = std::tuple<FactKind, std::string, std::string, std::string>;

inline std::set<FactKey> fact_keys(const Profile& p) {
  std::set<FactKey> out;
  for (const auto& f : p.facts) out.emplace(f.kind, f.target.id, f.text, f.source_id);
  return out;
}

inline std::map<std::string, OpinionScale> opinion_map(const Profile& p) {
  std::map<std::string, OpinionScale> out;
  for (const auto& o : p.opinions) out[o.target.id] = o.strength;
  return out;
}

}  // namespace detail

// Unification of two profiles about the same movie. Facts never conflict;
// the pair fails to unify exactly when a shared opinion target carries
// strengths of opposite sign.
inline ProfileRelation unify(const Profile& a, const Profile& b) {
  if (a.movie.id != b.movie.id)
    throw Error("unify: profiles are about different movies ('" + a.movie.id + "' vs '" +
                b.movie.id + "')");
  auto oa = detail::opinion_map(a), ob = detail::opinion_map(b);
  for (const auto& [target, s] : oa) {
    auto it = ob.find(target);
    if (it != ob.end() && sign(s) * sign(it->second) < 0) return ProfileRelation::conflicting;
  }
  if (oa == ob && detail::fact_keys(a) == detail::fact_keys(b)) return ProfileRelation::equal;
  return ProfileRelation::compatible;
}

// ---------------------------------------------------------------------------
// Knowledge base

struct KbTrivia {
  std::string id;
  std::string text;
  EntityRef target;
  std::vector<EntityRef> mentions;
};

struct KbTriple {
  std::string relation;
  std::string value;
  EntityRef value_entity;
};

// Trivia are stored best-first; the generator does not re-rank them.
struct KbMovie {
  EntityRef movie;
  std::string plot;
  std::vector<KbTrivia> trivia;
  std::vector<KbTriple> triples;
};

struct KnowledgeBase {
  std::vector<KbMovie> movies;

  const KbMovie* find(std::string_view movie_id) const {
    for (const auto& m : movies)
      if (m.movie.id == movie_id) return &m;
    return nullptr;
  }
};

// Entity for the value of a triple, typed by relation.
inline EntityRef triple_value_entity(const EntityRef& movie, const std::string& relation,
                                     const std::string& value) {
  EntityRef e;
  e.id = movie.id + "/" + relation + "/" + normalize_words(value);
  e.surface = value;
  if (relation == "genre") {
    e.kind = EntityKind::genre;
  } else if (relation == "country") {
    e.kind = EntityKind::country;
  } else if (relation == "director" || relation == "writer" || relation == "actor") {
    e.kind = EntityKind::person;
    e.role = relation;
  } else {
    e.kind = EntityKind::other;
    e.role = relation;
  }
  return e;
}

inline KnowledgeBase kb_from_json(const Json& j) {
  KnowledgeBase kb;
  const Json& movies = detail::require(j, "movies", "kb");
  for (std::size_t i = 0; i < movies.size(); ++i) {
    const Json& mj = movies[i];
    std::string ctx = "kb.movies[" + std::to_string(i) + "]";
    KbMovie m;
    m.movie = entity_from_json(detail::require(mj, "movie", ctx), ctx + ".movie");
    m.plot = detail::optional_string(mj, "plot");
    if (auto it = mj.find("trivia"); it != mj.end())
      for (const auto& tj : *it) {
        KbTrivia t;
        t.id = detail::require_string(tj, "id", ctx + ".trivia");
        t.text = detail::require_string(tj, "text", ctx + ".trivia");
        t.target = tj.contains("target") ? entity_from_json(tj["target"], ctx + ".trivia") : m.movie;
        if (auto mt = tj.find("mentions"); mt != tj.end())
          for (const auto& e : *mt) t.mentions.push_back(entity_from_json(e, ctx + ".trivia"));
        m.trivia.push_back(std::move(t));
      }
    if (auto it = mj.find("triples"); it != mj.end())
      for (const auto& tj : *it) {
        KbTriple t;
        t.relation = detail::require_string(tj, "relation", ctx + ".triples");
        t.value = detail::require_string(tj, "value", ctx + ".triples");
        t.value_entity = tj.contains("entity") ? entity_from_json(tj["entity"], ctx + ".triples")
                                               : triple_value_entity(m.movie, t.relation, t.value);
        m.triples.push_back(std::move(t));
      }
    kb.movies.push_back(std::move(m));
  }
  return kb;
}

inline KnowledgeBase load_kb(const std::filesystem::path& path) { return kb_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Sentence patterns

namespace detail {

inline std::string fill(std::string pattern, const std::string& movie, const std::string& value) {
  for (auto [key, rep] : {std::pair<std::string, const std::string*>{"{movie}", &movie},
                          std::pair<std::string, const std::string*>{"{value}", &value}}) {
    for (std::size_t pos; (pos = pattern.find(key)) != std::string::npos;)
      pattern.replace(pos, key.size(), *rep);
  }
  return pattern;
}

inline const std::vector<std::string>& triple_patterns(const std::string& relation) {
  static const std::map<std::string, std::vector<std::string>> patterns = {
      {"budget", {"The budget of {movie} was {value}.", "{movie} was made with a budget of {value}."}},
      {"release_year", {"{movie} was released in {value}.", "{movie} came out in {value}."}},
      {"genre", {"{movie} is a {value} movie.", "The genre of {movie} is {value}."}},
      {"country", {"{movie} was produced in {value}.", "{movie} is a movie from {value}."}},
      {"director", {"{movie} was directed by {value}.", "{value} directed {movie}."}},
      {"writer", {"{movie} was written by {value}.", "{value} wrote {movie}."}},
      {"actor", {"{value} starred in {movie}.", "{value} played in {movie}."}},
      {"certificate", {"{movie} is rated {value}.", "The age certificate of {movie} is {value}."}},
  };
  static const std::vector<std::string> fallback = {"The {relation} of {movie} is {value}."};
  auto it = patterns.find(relation);
  return it == patterns.end() ? fallback : it->second;
}

inline std::string question_for(const std::string& relation, const std::string& movie) {
  static const std::map<std::string, std::string> q = {
      {"budget", "Do you know the budget of {movie}?"},
      {"release_year", "When was {movie} released?"},
      {"genre", "What genre is {movie}?"},
      {"country", "Where was {movie} produced?"},
      {"director", "Who directed {movie}?"},
      {"writer", "Who wrote {movie}?"},
      {"actor", "Who starred in {movie}?"},
      {"certificate", "What is the age rating of {movie}?"},
  };
  auto it = q.find(relation);
  std::string pattern = it == q.end() ? "What is the " + relation + " of {movie}?" : it->second;
  return detail::fill(pattern, movie, std::string());
}

}  // namespace detail

inline std::string triple_source_id(const EntityRef& movie, const std::string& relation) {
  return movie.id + "/triple/" + relation;
}

inline Fact render_triple(const EntityRef& movie, const KbTriple& t, Rng& rng) {
  const auto& pats = detail::triple_patterns(t.relation);
  std::uniform_int_distribution<std::size_t> pick(0, pats.size() - 1);
  std::string pattern = pats[pick(rng)];
  for (std::size_t pos; (pos = pattern.find("{relation}")) != std::string::npos;)
    pattern.replace(pos, 10, t.relation);
  Fact f;
  f.kind = FactKind::kb_triple;
  f.target = movie;
  f.text = detail::fill(pattern, movie.surface, t.value);
  f.source_id = triple_source_id(movie, t.relation);
  f.relation = t.relation;
  f.value = t.value;
  f.mentions.push_back(t.value_entity);
  return f;
}

// ---------------------------------------------------------------------------
// Opinion assignment

struct OpinionPair {
  std::vector<Opinion> a;
  std::vector<Opinion> b;
};

// Entities that receive an opinion: fact targets and mentions of kind movie,
// person, genre or country, ordered by id.
inline std::vector<EntityRef> opinion_targets(const std::vector<Fact>& facts) {
  std::map<std::string, EntityRef> by_id;
  auto add = [&](const EntityRef& e) {
    if (e.kind != EntityKind::other && !e.id.empty()) by_id.emplace(e.id, e);
  };
  for (const auto& f : facts) {
    add(f.target);
    for (const auto& m : f.mentions) add(m);
  }
  std::vector<EntityRef> out;
  for (auto& [id, e] : by_id) out.push_back(e);
  return out;
}

// Draws opinions for both speakers over every entity the facts mention.
// `relation` = nullopt draws both sides independently and uniformly over all
// six strengths. Targets listed in `unknown_a` / `unknown_b` are pinned to
// dont_know for that speaker (used for a speaker who pretends not to know
// the movie).
inline OpinionPair assign_opinions(const std::vector<Fact>& facts,
                                   std::optional<ProfileRelation> relation, Rng& rng,
                                   const std::set<std::string>& unknown_a = {},
                                   const std::set<std::string>& unknown_b = {}) {
  if (facts.empty()) throw Error("assign_opinions: no facts");
  auto targets = opinion_targets(facts);
  if (targets.empty()) throw Error("assign_opinions: facts mention no entity");

  std::uniform_int_distribution<int> any(0, kOpinionLevels - 1);
  auto draw = [&] { return kAllOpinions[any(rng)]; };
  auto draw_from = [&](const std::vector<OpinionScale>& options) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    return options[d(rng)];
  };
  auto compatible_with = [](OpinionScale s) {
    std::vector<OpinionScale> out;
    for (auto o : kAllOpinions)
      if (sign(o) * sign(s) >= 0) out.push_back(o);
    return out;
  };
  const std::vector<OpinionScale> positives = {OpinionScale::like, OpinionScale::really_like,
                                               OpinionScale::favorite};
  const std::vector<OpinionScale> negatives = {OpinionScale::really_dont_like,
                                               OpinionScale::dont_like};

  const std::size_t n = targets.size();
  std::vector<OpinionScale> sa(n), sb(n);
  std::vector<bool> pinned_a(n), pinned_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    pinned_a[i] = unknown_a.count(targets[i].id) > 0;
    pinned_b[i] = unknown_b.count(targets[i].id) > 0;
    sa[i] = pinned_a[i] ? OpinionScale::dont_know : draw();
  }

  if (!relation) {
    for (std::size_t i = 0; i < n; ++i) sb[i] = pinned_b[i] ? OpinionScale::dont_know : draw();
  } else if (*relation == ProfileRelation::equal) {
    if (pinned_a != pinned_b) throw Error("assign_opinions: equal profiles need identical unknown sets");
    sb = sa;
  } else if (*relation == ProfileRelation::compatible) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < n; ++i) {
      sb[i] = pinned_b[i] ? OpinionScale::dont_know : draw_from(compatible_with(sa[i]));
      if (!(pinned_a[i] && pinned_b[i])) free.push_back(i);
    }
    if (free.empty()) throw Error("assign_opinions: no target can differ for a compatible pair");
    if (sa == sb) {
      // Force one difference without breaking compatibility.
      std::uniform_int_distribution<std::size_t> d(0, free.size() - 1);
      std::size_t i = free[d(rng)];
      std::vector<OpinionScale> options;
      if (pinned_b[i]) {
        for (auto o : kAllOpinions)
          if (o != OpinionScale::dont_know) options.push_back(o);
        sa[i] = draw_from(options);
      } else {
        for (auto o : compatible_with(sa[i]))
          if (o != sa[i]) options.push_back(o);
        sb[i] = draw_from(options);
      }
    }
  } else {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < n; ++i) {
      sb[i] = pinned_b[i] ? OpinionScale::dont_know : draw();
      if (!pinned_a[i] && !pinned_b[i]) eligible.push_back(i);
    }
    if (eligible.empty())
      throw Error("assign_opinions: conflict requested but every shared target is dont_know");
    bool conflict = false;
    for (std::size_t i = 0; i < n; ++i) conflict = conflict || sign(sa[i]) * sign(sb[i]) < 0;
    if (!conflict) {
      std::uniform_int_distribution<std::size_t> d(0, eligible.size() - 1);
      std::size_t i = eligible[d(rng)];
      std::bernoulli_distribution coin(0.5);
      bool a_positive = coin(rng);
      sa[i] = draw_from(a_positive ? positives : negatives);
      sb[i] = draw_from(a_positive ? negatives : positives);
    }
  }

  OpinionPair out;
  for (std::size_t i = 0; i < n; ++i) {
    out.a.push_back({targets[i], sa[i]});
    out.b.push_back({targets[i], sb[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fact-set sampling

struct GeneratorOptions {
  double pretend_unknown_prob = 0.1;
  double question_prob = 0.3;
  double triple_prob = 0.4;
  double plot_prob = 0.2;
};

struct FactSet {
  std::vector<Fact> facts_a;
  std::vector<Fact> facts_b;
  std::vector<Question> questions_a;
  std::vector<Question> questions_b;
  bool pretend_unknown_a = false;
  bool pretend_unknown_b = false;
};

// Stateful generator: remembers every trivia it handed out so that no trivia
// is used twice across the generated collection.
class ProfileGenerator {
 public:
  explicit ProfileGenerator(const KnowledgeBase& kb, GeneratorOptions opts = {})
      : kb_(kb), opts_(opts) {}

  const std::unordered_set<std::string>& used_trivia() const { return used_; }

  // `shared` gives both speakers the same facts and no questions.
  FactSet sample_fact_set(const std::string& movie_id, Rng& rng, bool shared = false,
                          bool allow_pretend = true) {
    const KbMovie* m = kb_.find(movie_id);
    if (!m) throw Error("movie '" + movie_id + "' not in knowledge base");
    if (unused_trivia(*m).empty())
      throw PoolExhausted("trivia pool exhausted for movie '" + movie_id + "'");

    std::uniform_int_distribution<int> size(2, 4);
    std::bernoulli_distribution pretend(opts_.pretend_unknown_prob);
    std::bernoulli_distribution ask(opts_.question_prob);

    FactSet fs;
    bool can_ask = !m->triples.empty() || !m->plot.empty();
    if (!shared && allow_pretend && can_ask && pretend(rng)) {
      if (std::bernoulli_distribution(0.5)(rng))
        fs.pretend_unknown_a = true;
      else
        fs.pretend_unknown_b = true;
    }

    std::vector<Fact> knowing = draw_facts(*m, size(rng), {}, rng);
    if (shared) {
      fs.facts_a = fs.facts_b = knowing;
      return fs;
    }
    if (fs.pretend_unknown_a || fs.pretend_unknown_b) {
      auto& knower = fs.pretend_unknown_a ? fs.facts_b : fs.facts_a;
      auto& asker_q = fs.pretend_unknown_a ? fs.questions_a : fs.questions_b;
      knower = std::move(knowing);
      add_question(*m, asker_q, knower, {}, rng);
      return fs;
    }

    // Second speaker: a random subset of the first speaker's facts, topped up
    // with fresh ones.
    fs.facts_a = knowing;
    int nb = size(rng);
    std::vector<Fact> keep = knowing;
    std::shuffle(keep.begin(), keep.end(), rng);
    std::uniform_int_distribution<int> keep_n(1, static_cast<int>(std::min<std::size_t>(keep.size(), nb)));
    keep.resize(static_cast<std::size_t>(keep_n(rng)));
    fs.facts_b = draw_facts(*m, nb, std::move(keep), rng);

    if (ask(rng)) {
      bool a_asks = std::bernoulli_distribution(0.5)(rng);
      if (a_asks)
        add_question(*m, fs.questions_a, fs.facts_b, fs.facts_a, rng);
      else
        add_question(*m, fs.questions_b, fs.facts_a, fs.facts_b, rng);
    }
    return fs;
  }

  // Full profile pair for `movie_id` satisfying `relation` (nullopt:
  // unconstrained opinions). Pretend-unknown is only drawn for
  // non-equal relations and never for both speakers.
  std::pair<Profile, Profile> generate_pair(const std::string& movie_id,
                                            std::optional<ProfileRelation> relation, Rng& rng) {
    const KbMovie* m = kb_.find(movie_id);
    if (!m) throw Error("movie '" + movie_id + "' not in knowledge base");
    bool shared = relation && *relation == ProfileRelation::equal;
    bool allow_pretend = !(relation && *relation == ProfileRelation::conflicting);
    FactSet fs = sample_fact_set(movie_id, rng, shared, allow_pretend);

    std::vector<Fact> all = fs.facts_a;
    for (const auto& f : fs.facts_b)
      if (std::find(all.begin(), all.end(), f) == all.end()) all.push_back(f);
    Fact movie_anchor;
    movie_anchor.target = m->movie;
    all.push_back(movie_anchor);

    std::set<std::string> unk_a, unk_b;
    if (fs.pretend_unknown_a) unk_a.insert(movie_id);
    if (fs.pretend_unknown_b) unk_b.insert(movie_id);
    OpinionPair ops = assign_opinions(all, relation, rng, unk_a, unk_b);

    Profile a{m->movie, fs.facts_a, ops.a, fs.questions_a, fs.pretend_unknown_a};
    Profile b{m->movie, fs.facts_b, ops.b, fs.questions_b, fs.pretend_unknown_b};
    return {std::move(a), std::move(b)};
  }

 private:
  std::vector<const KbTrivia*> unused_trivia(const KbMovie& m) const {
    std::vector<const KbTrivia*> out;
    for (const auto& t : m.trivia)
      if (!used_.count(t.id)) out.push_back(&t);
    return out;
  }

  static bool has_source(const std::vector<Fact>& facts, const std::string& id) {
    for (const auto& f : facts)
      if (f.source_id == id) return true;
    return false;
  }

  Fact take_trivia(const KbTrivia& t) {
    used_.insert(t.id);
    Fact f;
    f.kind = FactKind::trivia;
    f.target = t.target;
    f.text = t.text;
    f.source_id = t.id;
    f.mentions = t.mentions;
    return f;
  }

  // Extends `facts` to `n` entries. A trivia mentioning an actor is followed
  // by a fact about that actor when one is available; trivia mentioning
  // actors are preferred when starting a chain.
  std::vector<Fact> draw_facts(const KbMovie& m, int n, std::vector<Fact> facts, Rng& rng) {
    std::bernoulli_distribution triple(opts_.triple_prob), plot(opts_.plot_prob);
    std::optional<EntityRef> follow;
    bool first_trivia = true;
    while (static_cast<int>(facts.size()) < n) {
      auto pool = unused_trivia(m);
      if (follow) {
        const KbTrivia* about = nullptr;
        for (const auto* t : pool)
          if (t->target.id == follow->id) {
            about = t;
            break;
          }
        follow.reset();
        if (about) {
          facts.push_back(take_trivia(*about));
          continue;
        }
      }
      if (first_trivia && !pool.empty()) {
        first_trivia = false;
        std::vector<const KbTrivia*> with_actor;
        for (const auto* t : pool)
          for (const auto& e : t->mentions)
            if (e.kind == EntityKind::person) {
              with_actor.push_back(t);
              break;
            }
        const auto& from = with_actor.empty() ? pool : with_actor;
        std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
        const KbTrivia* t = from[d(rng)];
        facts.push_back(take_trivia(*t));
        for (const auto& e : t->mentions)
          if (e.kind == EntityKind::person) {
            follow = e;
            break;
          }
        continue;
      }
      bool want_triple = triple(rng), want_plot = plot(rng);
      if (want_plot && !m.plot.empty() && !has_source(facts, m.movie.id + "/plot")) {
        Fact f;
        f.kind = FactKind::plot;
        f.target = m.movie;
        f.text = m.plot;
        f.source_id = m.movie.id + "/plot";
        facts.push_back(std::move(f));
        continue;
      }
      if (want_triple || pool.empty()) {
        std::vector<const KbTriple*> free;
        for (const auto& t : m.triples)
          if (!has_source(facts, triple_source_id(m.movie, t.relation))) free.push_back(&t);
        if (!free.empty()) {
          std::uniform_int_distribution<std::size_t> d(0, free.size() - 1);
          facts.push_back(render_triple(m.movie, *free[d(rng)], rng));
          continue;
        }
      }
      if (!pool.empty()) {
        std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
        const KbTrivia* t = pool[d(rng)];
        facts.push_back(take_trivia(*t));
        for (const auto& e : t->mentions)
          if (e.kind == EntityKind::person) {
            follow = e;
            break;
          }
        continue;
      }
      if (!m.plot.empty() && !has_source(facts, m.movie.id + "/plot")) {
        Fact f{FactKind::plot, m.movie, m.plot, m.movie.id + "/plot", {}, {}, {}};
        facts.push_back(std::move(f));
        continue;
      }
      break;
    }
    if (facts.size() < 2)
      throw PoolExhausted("not enough facts left for movie '" + m.movie.id + "'");
    return facts;
  }

  // Gives `asker` a question about a triple missing from `asker_facts` and
  // hands the answer to `answerer`.
  void add_question(const KbMovie& m, std::vector<Question>& asker, std::vector<Fact>& answerer,
                    const std::vector<Fact>& asker_facts, Rng& rng) {
    std::vector<const KbTriple*> free;
    for (const auto& t : m.triples)
      if (!has_source(asker_facts, triple_source_id(m.movie, t.relation))) free.push_back(&t);
    if (free.empty()) {
      if (m.plot.empty()) return;
      asker.push_back({"What is " + m.movie.surface + " about?", m.movie.id + "/plot"});
      if (!has_source(answerer, m.movie.id + "/plot")) {
        Fact f{FactKind::plot, m.movie, m.plot, m.movie.id + "/plot", {}, {}, {}};
        if (answerer.size() >= 4) answerer.back() = std::move(f);
        else answerer.push_back(std::move(f));
      }
      return;
    }
    std::uniform_int_distribution<std::size_t> d(0, free.size() - 1);
    const KbTriple& t = *free[d(rng)];
    std::string sid = triple_source_id(m.movie, t.relation);
    asker.push_back({detail::question_for(t.relation, m.movie.surface), sid});
    if (!has_source(answerer, sid)) {
      Fact f = render_triple(m.movie, t, rng);
      if (answerer.size() >= 4) answerer.back() = std::move(f);
      else answerer.push_back(std::move(f));
    }
  }

  const KnowledgeBase& kb_;
  GeneratorOptions opts_;
  std::unordered_set<std::string> used_;
};

}  // namespace opdial
