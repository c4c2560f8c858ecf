#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "rarecog/cli.hpp"

using namespace rarecog;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "rarecog");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

/// Small text corpus: three topical subclasses and a majority class.
std::string text_corpus() {
  const std::vector<std::pair<std::string, std::vector<std::string>>> topics{
      {"flood", {"flood", "river", "rain", "water", "levee"}},
      {"fire", {"fire", "smoke", "blaze", "burn", "forest"}},
      {"quake", {"quake", "tremor", "fault", "shaking", "magnitude"}}};
  const std::vector<std::string> common{"city", "news", "today", "market", "sports", "weather", "traffic", "music"};
  std::ostringstream s;
  for (const auto& [name, words] : topics)
    for (int i = 0; i < 12; ++i)
      s << json{{"text", words[i % 5] + " " + words[(i + 2) % 5] + " " + common[i % 8]},
                {"label", "rare"},
                {"subclass", name}}
               .dump()
        << "\n";
  for (int i = 0; i < 60; ++i)
    s << json{{"text", common[i % 8] + " " + common[(i * 3 + 1) % 8] + " report"}, {"label", "majority"}}.dump()
      << "\n";
  return s.str();
}

}  // namespace

TEST_CASE("train then predict on text") {
  fixture::TempDir dir;
  write(dir / "corpus.jsonl", text_corpus());
  const Run t = run({"train", "--input", (dir / "corpus.jsonl").string(), "--out", (dir / "model.json").string(),
                     "--reject", "percentile", "--q", "0.05", "--iters", "200"});
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  CHECK(std::filesystem::exists(dir / "model.json"));

  write(dir / "stream.jsonl", "{\"text\": \"city news report\"}\n{\"text\": \"market traffic report\"}\n");
  const Run p = run({"predict", "--model", (dir / "model.json").string(), "--input", (dir / "stream.jsonl").string()});
  REQUIRE_MESSAGE(p.code == kExitOk, p.err);
  std::istringstream lines(p.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    CHECK(j["index"] == n);
    CHECK(j["verdict"] == "Majority");
    ++n;
  }
  CHECK(n == 2);

  write(dir / "bad.jsonl", "{\"nope\": 1}\n");
  CHECK(run({"predict", "--model", (dir / "model.json").string(), "--input", (dir / "bad.jsonl").string()}).code ==
        kExitData);
}

TEST_CASE("flags override config values") {
  fixture::TempDir dir;
  write(dir / "corpus.jsonl", text_corpus());
  write(dir / "cfg.json", json{{"iters", 5}, {"mu", 0.5}}.dump());
  const Run t = run({"train", "--config", (dir / "cfg.json").string(), "--input", (dir / "corpus.jsonl").string(),
                     "--out", (dir / "model.json").string(), "--iters", "7", "--reject", "percentile"});
  REQUIRE_MESSAGE(t.code == kExitOk, t.err);
  const json m = json::parse(slurp(dir / "model.json"));
  CHECK(m["provenance"]["config"]["iters"] == 7);
  CHECK(m["provenance"]["config"]["mu"] == 0.5);
}

TEST_CASE("unknown config keys are rejected") {
  fixture::TempDir dir;
  write(dir / "cfg.json", json{{"iterations", 5}}.dump());
  CHECK(run({"train", "--config", (dir / "cfg.json").string(), "--input", "x", "--out", "y"}).code == kExitUsage);
}

TEST_CASE("exit codes") {
  fixture::TempDir dir;
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"train", "--bogus"}).code == kExitUsage);
  CHECK(run({"train", "--out", (dir / "m.json").string()}).code == kExitUsage);
  CHECK(run({"train", "--input", (dir / "missing.jsonl").string(), "--out", (dir / "m.json").string()}).code ==
        kExitData);
  CHECK(run({"--help"}).code == kExitOk);

  write(dir / "corpus.jsonl", text_corpus());
  const Run diverge = run({"train", "--input", (dir / "corpus.jsonl").string(), "--out", (dir / "m.json").string(),
                           "--step", "1e6", "--decay", "fixed", "--mu", "1"});
  CHECK(diverge.code == kExitNumerical);
  CHECK_FALSE(std::filesystem::exists(dir / "m.json"));
}

TEST_CASE("synth, evaluate and reproducibility") {
  fixture::TempDir dir;
  const auto corpus = (dir / "syn.jsonl").string();
  const Run s = run({"synth", "--out", corpus, "--d", "6", "--k-total", "3", "--docs-per-subclass", "30",
                     "--majority-docs", "90", "--collinear", "0,1;3,4", "--seed", "3"});
  REQUIRE_MESSAGE(s.code == kExitOk, s.err);
  CHECK(run({"synth", "--out", corpus, "--collinear", "0,x"}).code == kExitUsage);

  const std::vector<std::string> eval{"evaluate", "--input", corpus, "--rep", "raw", "--reps", "2",
                                      "--iters", "100", "--reject", "percentile", "--q", "0.05", "--seed", "11"};
  auto a = eval, b = eval;
  a.insert(a.end(), {"--out", (dir / "a.json").string()});
  b.insert(b.end(), {"--out", (dir / "b.json").string()});
  const Run ra = run(a);
  REQUIRE_MESSAGE(ra.code == kExitOk, ra.err);
  REQUIRE(run(b).code == kExitOk);
  // Reports differ only in the --out path they record.
  json ja = json::parse(slurp(dir / "a.json")), jb = json::parse(slurp(dir / "b.json"));
  ja["config"]["effective"].erase("out");
  jb["config"]["effective"].erase("out");
  CHECK(ja.dump() == jb.dump());
  CHECK(ra.out.find("acc_rare") != std::string::npos);
}

TEST_CASE("seed from the environment") {
  fixture::TempDir dir;
  const auto corpus = (dir / "syn.jsonl").string();
  REQUIRE(run({"synth", "--out", corpus, "--d", "4", "--k-total", "2", "--docs-per-subclass", "20",
               "--majority-docs", "40", "--seed", "1"})
              .code == kExitOk);
  ::setenv("RARE_SEED", "42", 1);
  const Run r = run({"evaluate", "--input", corpus, "--rep", "raw", "--reps", "1", "--iters", "20", "--reject",
                     "percentile", "--q", "0.05", "--out", (dir / "r.json").string()});
  ::setenv("RARE_SEED", "not-a-number", 1);
  const Run bad = run({"evaluate", "--input", corpus, "--rep", "raw", "--reps", "1"});
  ::unsetenv("RARE_SEED");
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  CHECK(json::parse(slurp(dir / "r.json"))["repetitions"][0]["seed"] == 42);
  CHECK(bad.code == kExitUsage);
}

TEST_CASE("coverage command") {
  fixture::TempDir dir;
  write(dir / "corpus.jsonl", text_corpus());
  const Run c = run({"coverage", "--input", (dir / "corpus.jsonl").string(), "--words", "12", "--solver", "greedy",
                     "--out", (dir / "cov.json").string(), "--csv", (dir / "words.csv").string()});
  REQUIRE_MESSAGE(c.code == kExitOk, c.err);
  const json j = json::parse(slurp(dir / "cov.json"));
  CHECK(j["sets"].size() == 4);
  CHECK(slurp(dir / "words.csv").rfind("set,word,within,cross,ratio\n", 0) == 0);
  CHECK(run({"coverage", "--input", (dir / "corpus.jsonl").string(), "--solver", "simplex"}).code == kExitUsage);
  CHECK(run({"coverage", "--input", (dir / "corpus.jsonl").string(), "--solver", "exact"}).code == kExitUsage);
}

TEST_CASE("bench command") {
  const Run b = run({"bench", "--n", "40", "--d", "5", "--K", "2", "--iters", "5", "--repeats", "1"});
  REQUIRE_MESSAGE(b.code == kExitOk, b.err);
  const json j = json::parse(b.out);
  CHECK(j["points"].size() == 3);
  CHECK(j["ratios"].size() == 2);
}
