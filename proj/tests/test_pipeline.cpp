#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace opdial;
using namespace opdial::testing;

namespace {

namespace fs = std::filesystem;

// First dialogue of every movie in the sample corpus.
fs::path five_dialogue_fixture(const fs::path& dir) {
  Corpus all = ingest(source_dir() / "data/sample_corpus.json");
  Corpus c;
  std::set<std::string> movies;
  for (const auto& d : all.dialogues)
    if (movies.insert(d.movie_id).second) c.dialogues.push_back(d);
  fs::create_directories(dir);
  write_corpus(c, dir / "corpus5.json");
  return dir / "corpus5.json";
}

Json base_config(const fs::path& corpus, const fs::path& out) {
  return {{"corpus", corpus.string()},
          {"out_dir", out.string()},
          {"bpe_merges", 100},
          {"seeds", {{"split", 1}, {"encode", 2}, {"eval", 3}}},
          {"split", {{"fractions", {0.6, 0.2, 0.2}}}},
          {"encode", {{"max_len", 256}, {"distractor_mode", "rule"}, {"distractors", 3}}},
          {"decode", {{"beam", 2}, {"max_tokens", 4}, {"items", 1}}},
          {"eval",
           {{"scorer_cmd", std::string(OPDIAL_CLI) + " stub-scorer --tok " + (out / "tokenizer.json").string()},
            {"distractors", 3}}}};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("opdial_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, RejectsOutOfRangeThreshold) {
  Json j = base_config("c.json", "out");
  j["resolve"] = {{"cosine", 1.5}};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["resolve"] = {{"levenshtein", 2.5}};
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, RequiresSeedsAndValidEnums) {
  Json j = base_config("c.json", "out");
  j["seeds"].erase("eval");
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = base_config("c.json", "out");
  j["encode"]["positions"] = "sideways";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = base_config("c.json", "out");
  j["eval"]["hits"] = {1, 30};
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  Json j = base_config("c.json", "out");
  auto c = config_from_json(j, "/cfg");
  EXPECT_EQ(c.corpus, fs::path("/cfg/c.json"));
  EXPECT_EQ(c.out_dir, fs::path("/cfg/out"));
  EXPECT_EQ(c.lambda, 1.0);
}

TEST(Plan, StagesInOrder) {
  auto c = config_from_json(base_config("c.json", "out"));
  std::vector<std::string> names;
  for (const auto& s : plan(c)) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"ingest", "split", "resolve", "coverage", "adherence", "tokenizer",
                                             "encode", "eval", "decode"}));
  Json j = base_config("c.json", "out");
  j["eval"].erase("scorer_cmd");
  EXPECT_EQ(plan(config_from_json(j)).size(), 7u);
}

TEST(Cli, DryRunWritesNothing) {
  auto dir = scratch("dry");
  auto corpus = five_dialogue_fixture(dir);
  auto out = dir / "out";
  std::ofstream(dir / "cfg.json") << base_config(corpus, out).dump();
  std::string cmd = std::string(OPDIAL_CLI) + " run --dry-run --config " + (dir / "cfg.json").string() + " > " +
                    (dir / "plan.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_FALSE(fs::exists(out));
  std::string planned = read_file(dir / "plan.txt");
  EXPECT_NE(planned.find("ingest:"), std::string::npos);
  EXPECT_NE(planned.find("decode:"), std::string::npos);
}

TEST(Cli, ConfigErrorStopsBeforeAnyStage) {
  auto dir = scratch("bad");
  auto corpus = five_dialogue_fixture(dir);
  Json j = base_config(corpus, dir / "out");
  j["resolve"] = {{"cosine", 1.5}};
  std::ofstream(dir / "cfg.json") << j.dump();
  std::string cmd = std::string(OPDIAL_CLI) + " run --config " + (dir / "cfg.json").string() + " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(rc), 2);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Run, FullRunProducesStableArtifacts) {
  auto dir = scratch("full");
  auto corpus = five_dialogue_fixture(dir);
  std::map<std::string, std::string> first;
  for (const char* name : {"a", "b"}) {
    auto out = dir / name;
    auto cfg = config_from_json(base_config(corpus, out));
    std::ostringstream log;
    run(cfg, log);
    for (const char* f : {"corpus.json", "stats.json", "split.json", "matches.json", "coverage.json", "adherence.json",
                          "labeled.json", "tokenizer.json", "samples.bin", "samples.bin.json", "encode.json",
                          "eval.json", "decoded.json", "manifest.json"})
      ASSERT_TRUE(fs::exists(out / f)) << f;
    Json manifest = read_json_file(out / "manifest.json");
    ASSERT_EQ(manifest["stages"].size(), 9u);
    for (const auto& s : manifest["stages"])
      for (auto& [k, v] : s["outputs"].items()) {
        std::string key = s["stage"].get<std::string>() + "/" + k;
        if (first.count(key))
          EXPECT_EQ(first[key], v.get<std::string>()) << key;
        else
          first[key] = v.get<std::string>();
      }
    EXPECT_NE(log.str().find("encode in:"), std::string::npos);
  }
  auto [h, sets] = read_samples(dir / "a" / "samples.bin");
  EXPECT_EQ(h.max_len, 256u);
  for (const auto& s : sets) EXPECT_EQ(s.candidates.size(), 4u);
}

TEST(Run, StageFailureNamesStage) {
  auto dir = scratch("fail");
  auto corpus = five_dialogue_fixture(dir);
  Json j = base_config(corpus, dir / "out");
  j["eval"]["scorer_cmd"] = "false";
  auto cfg = config_from_json(j);
  cfg.corpus = dir / "missing.json";
  std::ostringstream log0;
  try {
    run(cfg, log0);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
  }
  cfg.corpus = corpus;
  std::ostringstream log;
  try {
    run(cfg, log);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "decode");
  }
}
