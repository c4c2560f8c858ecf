#include "rarecog/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rarecog/corpus.hpp"
#include "rarecog/coverage.hpp"
#include "rarecog/errors.hpp"
#include "rarecog/eval.hpp"
#include "rarecog/featurize.hpp"
#include "rarecog/io.hpp"
#include "rarecog/recognizer.hpp"
#include "rarecog/rejection.hpp"
#include "rarecog/trainer.hpp"

namespace rarecog {

using json = nlohmann::json;

namespace {

/// Typed storage for the options of one subcommand. Values given on the
/// command line are collected into a JSON object keyed like the config file.
class Options {
 public:
  void real(CLI::App* app, const std::string& key, const std::string& help) {
    app->add_option(flag(key), reals_[key], help);
  }
  void integer(CLI::App* app, const std::string& key, const std::string& help) {
    app->add_option(flag(key), ints_[key], help);
  }
  void text(CLI::App* app, const std::string& key, const std::string& help) {
    app->add_option(flag(key), texts_[key], help);
  }

  json given() const {
    json j = json::object();
    for (const auto& [k, v] : reals_)
      if (v) j[k] = *v;
    for (const auto& [k, v] : ints_)
      if (v) j[k] = *v;
    for (const auto& [k, v] : texts_)
      if (v) j[k] = *v;
    return j;
  }

 private:
  static std::string flag(const std::string& key) {
    std::string f = "--" + key;
    for (auto& c : f)
      if (c == '_') c = '-';
    return f;
  }
  std::map<std::string, std::optional<double>> reals_;
  std::map<std::string, std::optional<long long>> ints_;
  std::map<std::string, std::optional<std::string>> texts_;
};

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "input",   "out",      "model",   "rep",         "lambda0",  "lambdak",    "mu",       "iters",
      "step",    "decay",    "momentum", "tol",        "batch",    "reject",     "q",        "reps",
      "seed",    "log_every", "words",  "solver",      "csv",      "time_cap",   "n",        "d",
      "K",       "repeats",  "k_total", "docs_per_subclass", "majority_docs", "separation", "noise",
      "collinear"};
  return keys;
}

json load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + ": expected a JSON object");
  const auto& keys = config_keys();
  for (const auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw UsageError("config " + path + ": unknown key '" + k + "'");
  return j;
}

/// File values, then command-line values on top.
class Effective {
 public:
  explicit Effective(json values) : v_(std::move(values)) {}

  const json& values() const { return v_; }
  bool has(const std::string& key) const { return v_.contains(key) && !v_[key].is_null(); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return v_.at(key).get<T>();
    } catch (const json::exception&) {
      throw UsageError("option '" + key + "' has the wrong type");
    }
  }
  std::string need(const std::string& key) const {
    if (!has(key)) throw UsageError("missing required option --" + dashed(key));
    return get<std::string>(key, "");
  }

 private:
  static std::string dashed(std::string k) {
    for (auto& c : k)
      if (c == '_') c = '-';
    return k;
  }
  json v_;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("RARE_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("RARE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

std::uint64_t seed_of(const Effective& e) {
  if (!e.has("seed")) return default_seed();
  const long long s = e.get<long long>("seed", 0);
  if (s < 0) throw UsageError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

TrainConfig train_config(const Effective& e, std::ostream& err) {
  TrainConfig tc;
  tc.max_iters = e.get<int>("iters", tc.max_iters);
  if (e.has("step")) tc.step_size = e.get<double>("step", 0.0);
  const auto decay = e.get<std::string>("decay", "inv_sqrt");
  if (decay == "inv_sqrt")
    tc.step_decay = StepDecay::inv_sqrt;
  else if (decay == "fixed")
    tc.step_decay = StepDecay::fixed;
  else
    throw UsageError("--decay must be inv_sqrt or fixed");
  tc.momentum = e.get<double>("momentum", tc.momentum);
  tc.tol = e.get<double>("tol", tc.tol);
  const long long batch = e.get<long long>("batch", 0);
  if (batch < 0) throw UsageError("--batch must be >= 0");
  tc.batch = static_cast<std::size_t>(batch);
  tc.seed = seed_of(e);
  tc.log_every = e.get<int>("log_every", 0);
  tc.log = &err;
  tc.validate();
  return tc;
}

/// Writes to --out atomically when given, otherwise to `out`.
void emit(const Effective& e, const std::string& content, std::ostream& out) {
  if (e.has("out"))
    write_file_atomic(e.get<std::string>("out", ""), content);
  else
    out << content;
}

int cmd_train(const Effective& e, std::ostream& out, std::ostream& err) {
  const std::string input = e.need("input");
  const std::string dest = e.need("out");
  const LabeledCorpus corpus = load_corpus(input);
  const int K = corpus.num_subclasses();
  const RepresentationSpec rep = RepresentationSpec::parse(e.get<std::string>("rep", "tfidf1k"));

  SplitResult all;
  all.train.resize(corpus.size());
  std::iota(all.train.begin(), all.train.end(), std::size_t{0});
  EvalSet none;
  for (int k = 1; k <= K; ++k) none.seen_map.push_back(k);
  const FeaturizedSplit fs = featurize_split(corpus, all, none, rep);

  const BoundData data(fs.train, fs.train_subclass, K);
  const Hyperparams hp =
      Hyperparams::uniform(K, e.get<double>("lambda0", 1.0), e.get<double>("lambdak", 1.0), e.get<double>("mu", 1.0));
  TrainConfig tc = train_config(e, err);
  if (rep.kind == Representation::pca) tc.correlation = FeatureCorrelation::identity;
  const TrainedModel trained = fit(data, hp, tc);

  ModelDocument model;
  model.params = trained.params;
  model.thresholds = calibrate(trained.params, data, parse_rejection_method(e.get<std::string>("reject", "evt")),
                               e.get<double>("q", 0.01));
  model.features = fs.space;
  model.subclass_names = corpus.subclass_names;
  model.provenance = {{"config", e.values()},
                      {"corpus", corpus.id},
                      {"iters_run", trained.iters_run},
                      {"converged", trained.converged},
                      {"best_loss", trained.best_loss},
                      {"step_size", trained.step_size}};
  save_model(model, dest);
  out << "trained K=" << K << " d=" << model.d() << " iters=" << trained.iters_run
      << " loss=" << trained.best_loss << " -> " << dest << "\n";
  return kExitOk;
}

int cmd_predict(const Effective& e, std::ostream& out, std::ostream&) {
  const ModelDocument model = load_model(e.need("model"));
  std::ifstream in(e.need("input"));
  if (!in) throw DataError("cannot open " + e.get<std::string>("input", ""));

  std::vector<Eigen::VectorXd> stream;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      if (model.features.accepts_text()) {
        if (!rec.contains("text")) throw DataError("record has no text");
        stream.push_back(model.features.embed_text(rec.at("text").get<std::string>()));
      } else {
        if (!rec.contains("features")) throw DataError("record has no features");
        const auto f = rec.at("features").get<std::vector<double>>();
        stream.push_back(model.features.embed_features(f));
      }
    } catch (const json::exception& ex) {
      throw DataError("line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
      throw DataError("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }

  const StreamResult res = predict_stream(model, stream);
  std::ostringstream buf;
  for (std::size_t i = 0; i < res.decisions.size(); ++i) {
    const Decision& d = res.decisions[i];
    json j{{"index", i}, {"verdict", to_string(d.verdict)}};
    if (d.verdict == Verdict::known) {
      j["subclass"] = d.subclass;
      j["subclass_name"] = model.subclass_names.at(static_cast<std::size_t>(d.subclass - 1));
    }
    j["gc_score"] = d.gc_score;
    buf << j.dump() << "\n";
  }
  emit(e, buf.str(), out);
  return kExitOk;
}

int cmd_evaluate(const Effective& e, std::ostream& out, std::ostream& err) {
  const LabeledCorpus corpus = load_corpus(e.need("input"));
  ExperimentConfig cfg;
  cfg.repetitions = e.get<int>("reps", 5);
  cfg.base_seed = seed_of(e);
  cfg.representation = RepresentationSpec::parse(e.get<std::string>("rep", "tfidf1k"));
  cfg.lambda0 = e.get<double>("lambda0", 1.0);
  cfg.lambdak = e.get<double>("lambdak", 1.0);
  cfg.mu = e.get<double>("mu", 1.0);
  cfg.train = train_config(e, err);
  cfg.rejection = parse_rejection_method(e.get<std::string>("reject", "evt"));
  cfg.q = e.get<double>("q", 0.01);
  MetricReport report = run_experiment(corpus, cfg);
  report.config = {{"effective", e.values()}, {"experiment", report.config}};
  if (e.has("out")) write_file_atomic(e.get<std::string>("out", ""), report.to_json().dump(2) + "\n");
  out << report.to_text();
  return report.incomplete ? kExitData : kExitOk;
}

int cmd_coverage(const Effective& e, std::ostream& out, std::ostream&) {
  const LabeledCorpus corpus = load_corpus(e.need("input"));
  std::vector<std::size_t> all(corpus.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const int words = e.get<int>("words", 20);
  if (words < 1) throw UsageError("--words must be positive");
  const Vocabulary vocab = build_vocab(corpus, all, static_cast<std::size_t>(words));
  const CoverProgram program = build_program(corpus, vocab);

  ExactLimits limits;
  limits.time_cap_seconds = e.get<double>("time_cap", limits.time_cap_seconds);
  const auto solver = e.get<std::string>("solver", "auto");
  const bool exact_fits = program.d() <= limits.max_words && program.total_docs() <= limits.max_docs;
  CoverSolution sol;
  if (solver == "exact")
    sol = solve_exact(program, limits);
  else if (solver == "greedy")
    sol = solve_greedy(program);
  else if (solver == "auto")
    sol = exact_fits ? solve_exact(program, limits) : solve_greedy(program);
  else
    throw UsageError("--solver must be auto, exact or greedy");

  const CoverageReport report = coverage_report(sol, program);
  json j = report.to_json();
  j["solution"] = sol.to_json(program);
  j["config"] = e.values();
  if (e.has("out")) write_file_atomic(e.get<std::string>("out", ""), j.dump(2) + "\n");
  if (e.has("csv")) write_file_atomic(e.get<std::string>("csv", ""), report.words_csv());
  out << report.to_text();
  return kExitOk;
}

int cmd_bench(const Effective& e, std::ostream& out, std::ostream& err) {
  BenchConfig cfg;
  const long long n = e.get<long long>("n", static_cast<long long>(cfg.n));
  if (n < 1) throw UsageError("--n must be positive");
  cfg.n = static_cast<std::size_t>(n);
  cfg.d = e.get<int>("d", cfg.d);
  cfg.K = e.get<int>("K", cfg.K);
  cfg.iters = e.get<int>("iters", cfg.iters);
  cfg.repeats = e.get<int>("repeats", cfg.repeats);
  cfg.seed = seed_of(e);
  cfg.lambda0 = e.get<double>("lambda0", cfg.lambda0);
  cfg.lambdak = e.get<double>("lambdak", cfg.lambdak);
  cfg.mu = e.get<double>("mu", cfg.mu);
  cfg.train = train_config(e, err);
  const BenchResult res = run_bench(cfg);
  json j = res.to_json();
  j["effective"] = e.values();
  emit(e, j.dump(2) + "\n", out);
  return kExitOk;
}

std::vector<std::vector<int>> parse_groups(const std::string& s) {
  // "0,1,2;5,6"
  std::vector<std::vector<int>> groups;
  std::stringstream gs(s);
  std::string group;
  while (std::getline(gs, group, ';')) {
    std::vector<int> g;
    std::stringstream is(group);
    std::string item;
    while (std::getline(is, item, ',')) {
      try {
        std::size_t used = 0;
        g.push_back(std::stoi(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw UsageError("bad --collinear entry '" + item + "'");
      }
    }
    if (!g.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

int cmd_synth(const Effective& e, std::ostream& out, std::ostream&) {
  const std::string dest = e.need("out");
  SyntheticConfig sc;
  sc.d = e.get<int>("d", sc.d);
  sc.k_total = e.get<int>("k_total", sc.k_total);
  sc.docs_per_subclass = e.get<int>("docs_per_subclass", sc.docs_per_subclass);
  sc.majority_docs = e.get<int>("majority_docs", sc.majority_docs);
  sc.subclass_separation = e.get<double>("separation", sc.subclass_separation);
  sc.noise_scale = e.get<double>("noise", sc.noise_scale);
  if (e.has("collinear")) sc.collinearity_groups = parse_groups(e.get<std::string>("collinear", ""));
  sc.seed = seed_of(e);
  const LabeledCorpus corpus = gen_synthetic(sc);
  std::ostringstream buf;
  write_jsonl(corpus, buf);
  write_file_atomic(dest, buf.str());
  out << "wrote " << corpus.size() << " documents -> " << dest << "\n";
  return kExitOk;
}

void add_training(Options& o, CLI::App* app) {
  o.text(app, "rep", "tfidf1k | pca:<rank> | raw");
  o.real(app, "lambda0", "ridge weight of the general classifier");
  o.real(app, "lambdak", "ridge weight of every specialized classifier");
  o.real(app, "mu", "correlation penalty weight");
  o.integer(app, "iters", "maximum iterations");
  o.real(app, "step", "initial step size");
  o.text(app, "decay", "inv_sqrt | fixed");
  o.real(app, "momentum", "Nesterov momentum in [0, 1)");
  o.real(app, "tol", "relative loss change for convergence");
  o.integer(app, "batch", "mini-batch size (0 = full batch)");
  o.integer(app, "seed", "random seed");
  o.integer(app, "log_every", "progress line every N iterations");
}

void add_rejection(Options& o, CLI::App* app) {
  o.text(app, "reject", "evt | percentile");
  o.real(app, "q", "false-rejection rate of each specialized classifier");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rare-class recognition: training, stream prediction, evaluation and coverage analysis", "rarecog"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of option values; flags take precedence");

  std::map<std::string, Options> opts;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON file of option values; flags take precedence");
    return s;
  };

  CLI::App* train = sub("train", "fit a model and write it as JSON");
  opts["train"].text(train, "input", "labelled corpus (.jsonl or .csv)");
  opts["train"].text(train, "out", "model file");
  add_training(opts["train"], train);
  add_rejection(opts["train"], train);

  CLI::App* predict = sub("predict", "classify a jsonl stream");
  opts["predict"].text(predict, "model", "model file");
  opts["predict"].text(predict, "input", "jsonl records with text or features");
  opts["predict"].text(predict, "out", "decisions file (default stdout)");

  CLI::App* evaluate = sub("evaluate", "run the repeated split/train/test protocol");
  opts["evaluate"].text(evaluate, "input", "labelled corpus");
  opts["evaluate"].text(evaluate, "out", "JSON report");
  opts["evaluate"].integer(evaluate, "reps", "repetitions");
  add_training(opts["evaluate"], evaluate);
  add_rejection(opts["evaluate"], evaluate);

  CLI::App* coverage = sub("coverage", "solve the word-cover program over the top words");
  opts["coverage"].text(coverage, "input", "labelled corpus");
  opts["coverage"].text(coverage, "out", "JSON report");
  opts["coverage"].text(coverage, "csv", "per-word CSV");
  opts["coverage"].integer(coverage, "words", "vocabulary size");
  opts["coverage"].text(coverage, "solver", "auto | exact | greedy");
  opts["coverage"].real(coverage, "time_cap", "exact solver time limit in seconds");

  CLI::App* bench = sub("bench", "time fit at n, 2n and 4n rows");
  opts["bench"].text(bench, "out", "JSON timings (default stdout)");
  opts["bench"].integer(bench, "n", "base row count");
  opts["bench"].integer(bench, "d", "feature dimension");
  opts["bench"].integer(bench, "K", "subclasses");
  opts["bench"].integer(bench, "repeats", "timed runs per size");
  add_training(opts["bench"], bench);

  CLI::App* synth = sub("synth", "write a synthetic corpus");
  opts["synth"].text(synth, "out", "jsonl file");
  opts["synth"].integer(synth, "d", "feature dimension");
  opts["synth"].integer(synth, "k_total", "number of subclasses");
  opts["synth"].integer(synth, "docs_per_subclass", "documents per subclass");
  opts["synth"].integer(synth, "majority_docs", "majority documents");
  opts["synth"].real(synth, "separation", "distance of subclass centres from the origin");
  opts["synth"].real(synth, "noise", "Gaussian noise scale");
  opts["synth"].text(synth, "collinear", "column groups, e.g. 0,1,2;5,6");
  opts["synth"].integer(synth, "seed", "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    json values = config_path.empty() ? json::object() : load_config(config_path);
    values.update(opts[name].given());
    const Effective e(std::move(values));
    if (name == "train") return cmd_train(e, out, err);
    if (name == "predict") return cmd_predict(e, out, err);
    if (name == "evaluate") return cmd_evaluate(e, out, err);
    if (name == "coverage") return cmd_coverage(e, out, err);
    if (name == "bench") return cmd_bench(e, out, err);
    return cmd_synth(e, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace rarecog
