#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "rarecog/corpus.hpp"
#include "rarecog/errors.hpp"

using namespace rarecog;

TEST_CASE("jsonl corpus with two subclasses") {
  std::istringstream in(R"({"text": "river flood warning", "label": "rare", "subclass": "flood"}
{"text": "forest fire spreads", "label": "rare", "subclass": "fire"}
{"text": "market closes higher", "label": "majority"}
)");
  const LabeledCorpus c = parse_jsonl(in);
  CHECK(c.num_subclasses() == 2);
  CHECK(c.size() == 3);
  CHECK(c.rare_count() == 2);
  CHECK(c.subclass_names == std::vector<std::string>{"flood", "fire"});
  CHECK(c.docs[1].subclass == 2);
  CHECK(c.docs[2].subclass == 0);
}

TEST_CASE("majority record with a subclass is rejected with its line") {
  std::istringstream in(R"({"text": "a", "label": "rare", "subclass": "x"}
{"text": "b", "label": "majority", "subclass": "x"}
)");
  try {
    parse_jsonl(in);
    FAIL("expected an error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("majority doc carries subclass") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("rare record without subclass, empty corpus and bad json") {
  std::istringstream missing(R"({"text": "a", "label": "rare"})");
  CHECK_THROWS_WITH_AS(parse_jsonl(missing), doctest::Contains("rare doc missing subclass"), DataError);
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_jsonl(empty), DataError);
  std::istringstream broken("{\"text\": \"a\", \"label\": \"rare\", \"subclass\": \"x\"}\n{not json\n");
  CHECK_THROWS_WITH_AS(parse_jsonl(broken), doctest::Contains("line 2"), DataError);
}

TEST_CASE("fifteen subclasses give K = 15") {
  std::ostringstream s;
  for (int k = 0; k < 15; ++k) s << R"({"text": "t", "label": "rare", "subclass": "risk)" << k << "\"}\n";
  s << R"({"text": "t", "label": "majority"})" << "\n";
  std::istringstream in(s.str());
  CHECK(parse_jsonl(in).num_subclasses() == 15);
}

TEST_CASE("csv with quoted fields and header") {
  std::istringstream in("text,label,subclass\n\"storm, \"\"big\"\" one\",rare,storm\nquiet day,majority,\nhail,rare,storm\n");
  const LabeledCorpus c = parse_csv(in);
  REQUIRE(c.size() == 3);
  CHECK(c.docs[0].text == "storm, \"big\" one");
  CHECK(c.num_subclasses() == 1);
  CHECK(c.docs[2].subclass == 1);
}

TEST_CASE("load_corpus reads files by extension and reports missing files") {
  fixture::TempDir dir;
  {
    std::ofstream f(dir / "c.csv");
    f << "text,label,subclass\nx,rare,a\ny,majority,\n";
  }
  CHECK(load_corpus(dir / "c.csv").size() == 2);
  CHECK_THROWS_AS(load_corpus(dir / "absent.jsonl"), DataError);
}

TEST_CASE("jsonl round trip keeps features") {
  SyntheticConfig cfg;
  cfg.d = 3;
  cfg.k_total = 2;
  cfg.docs_per_subclass = 4;
  cfg.majority_docs = 3;
  const LabeledCorpus c = gen_synthetic(cfg);
  std::stringstream s;
  write_jsonl(c, s);
  const LabeledCorpus back = parse_jsonl(s);
  REQUIRE(back.features.has_value());
  CHECK(*back.features == *c.features);
  CHECK(back.subclass_names == c.subclass_names);
}

TEST_CASE("split of K = 15 holds out five subclasses") {
  const auto c = fixture::sized_corpus(std::vector<int>(15, 5), 10);
  const SplitResult s = split_protocol(c, 3);
  CHECK(s.seen_subclasses.size() == 10);
  CHECK(s.unseen_subclasses.size() == 5);
}

TEST_CASE("split arithmetic on three subclasses of ten") {
  const auto c = fixture::sized_corpus({10, 10, 10}, 20);
  const SplitResult s = split_protocol(c, 11);
  REQUIRE(s.seen_subclasses.size() == 2);
  for (int k : s.seen_subclasses) {
    const auto in_train = std::count_if(s.train.begin(), s.train.end(), [&](std::size_t i) { return c.docs[i].subclass == k; });
    CHECK(in_train == 8);
  }
  CHECK(s.test_seen.size() == 4);
  CHECK(s.test_unseen.size() == 10);
  CHECK(s.test_majority.size() == 4);
  CHECK(split_protocol(c, 11) == s);
}

TEST_CASE("split needs two subclasses") {
  CHECK_THROWS_AS(split_protocol(fixture::sized_corpus({6}, 4), 0), DataError);
}

TEST_CASE("splits partition the corpus and never train on unseen subclasses") {
  const auto c = fixture::sized_corpus({7, 9, 5, 12, 4}, 23);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SplitResult s = split_protocol(c, seed);
    std::vector<std::size_t> all;
    for (const auto* set : {&s.train, &s.test_seen, &s.test_unseen, &s.test_majority}) all.insert(all.end(), set->begin(), set->end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == c.size());
    const std::set<int> unseen(s.unseen_subclasses.begin(), s.unseen_subclasses.end());
    for (auto i : s.train) CHECK(unseen.count(c.docs[i].subclass) == 0);
    for (auto i : s.test_unseen) CHECK(unseen.count(c.docs[i].subclass) == 1);
    for (auto i : s.test_majority) CHECK(c.docs[i].label == Label::majority);
  }
}

TEST_CASE("synthetic generator is deterministic and shapes hold") {
  SyntheticConfig cfg;
  cfg.seed = 5;
  const auto a = gen_synthetic(cfg);
  const auto b = gen_synthetic(cfg);
  CHECK(*a.features == *b.features);
  CHECK(a.size() == 6u * 200 + 1200);
  CHECK(a.num_subclasses() == 6);
  a.validate();
}

TEST_CASE("synthetic collinear columns are strongly correlated") {
  SyntheticConfig cfg;
  cfg.d = 6;
  cfg.k_total = 2;
  cfg.docs_per_subclass = 100;
  cfg.majority_docs = 800;
  cfg.collinearity_groups = {{0, 1}};
  const auto c = gen_synthetic(cfg);
  const Eigen::MatrixXd& X = *c.features;
  const Eigen::VectorXd a = X.col(0).array() - X.col(0).mean();
  const Eigen::VectorXd b = X.col(1).array() - X.col(1).mean();
  CHECK(std::abs(a.dot(b) / (a.norm() * b.norm())) > 0.95);
}

TEST_CASE("zero separation puts rare and majority centres together") {
  SyntheticConfig cfg;
  cfg.d = 2;
  cfg.k_total = 2;
  cfg.docs_per_subclass = 400;
  cfg.majority_docs = 800;
  cfg.subclass_separation = 0.0;
  const auto c = gen_synthetic(cfg);
  const Eigen::MatrixXd& X = *c.features;
  const Eigen::RowVectorXd rare = X.topRows(800).colwise().mean();
  const Eigen::RowVectorXd maj = X.bottomRows(800).colwise().mean();
  CHECK((rare - maj).norm() < 0.2);
}

TEST_CASE("synthetic preconditions") {
  SyntheticConfig cfg;
  cfg.d = 1;
  CHECK_THROWS_AS(gen_synthetic(cfg), UsageError);
  cfg = {};
  cfg.docs_per_subclass = 3;
  CHECK_THROWS_AS(gen_synthetic(cfg), UsageError);
  cfg = {};
  cfg.k_total = 1;
  CHECK_THROWS_AS(gen_synthetic(cfg), UsageError);
}
