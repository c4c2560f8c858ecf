#include "rarecog/eval.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "rarecog/errors.hpp"

namespace rarecog {

using json = nlohmann::json;

EvalSet make_eval_set(const LabeledCorpus& corpus, const SplitResult& split) {
  EvalSet out;
  out.seen_map = split.seen_subclasses;
  std::map<int, int> to_model;
  for (std::size_t i = 0; i < split.seen_subclasses.size(); ++i) to_model[split.seen_subclasses[i]] = static_cast<int>(i) + 1;
  for (auto id : split.test_seen) {
    const int s = corpus.docs.at(id).subclass;
    auto it = to_model.find(s);
    if (it == to_model.end()) throw DataError("split lists document " + std::to_string(id) + " as seen, but its subclass is not");
    out.doc_ids.push_back(id);
    out.targets.push_back({TruthSet::seen, it->second});
  }
  for (auto id : split.test_unseen) {
    out.doc_ids.push_back(id);
    out.targets.push_back({TruthSet::unseen, 0});
  }
  for (auto id : split.test_majority) {
    out.doc_ids.push_back(id);
    out.targets.push_back({TruthSet::majority, 0});
  }
  return out;
}

namespace {

void check_sizes(std::span<const Decision> decisions, std::span<const EvalTarget> targets) {
  if (decisions.size() != targets.size())
    throw UsageError("got " + std::to_string(decisions.size()) + " decisions for " + std::to_string(targets.size()) +
                     " test instances");
}

std::optional<double> ratio(double num, double den) {
  if (den <= 0) return std::nullopt;
  return num / den;
}

}  // namespace

TopLevelMetrics top_level_metrics(std::span<const Decision> decisions, std::span<const EvalTarget> targets) {
  check_sizes(decisions, targets);
  double predicted = 0, seen = 0, unseen = 0, seen_hit = 0, unseen_hit = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool flagged = decisions[i].verdict != Verdict::majority;
    predicted += flagged;
    if (targets[i].truth == TruthSet::seen) {
      ++seen;
      seen_hit += flagged;
    } else if (targets[i].truth == TruthSet::unseen) {
      ++unseen;
      unseen_hit += flagged;
    }
  }
  TopLevelMetrics m;
  m.precision = ratio(seen_hit + unseen_hit, predicted);
  m.recall = ratio(seen_hit + unseen_hit, seen + unseen);
  if (m.precision && m.recall) m.f1 = *m.precision + *m.recall > 0 ? 2 * *m.precision * *m.recall / (*m.precision + *m.recall) : 0.0;
  m.precision_seen = ratio(seen_hit, predicted);
  m.recall_seen = ratio(seen_hit, seen);
  m.recall_unseen = ratio(unseen_hit, unseen);
  return m;
}

double ConfusionTable::column_total(ConfusionCol c) const {
  double s = 0;
  for (const auto& row : cells) s += row[static_cast<std::size_t>(c)];
  return s;
}

double ConfusionTable::row_total(ConfusionRow r) const {
  const auto& row = cells[static_cast<std::size_t>(r)];
  return row[0] + row[1] + row[2];
}

double ConfusionTable::total() const {
  return column_total(ConfusionCol::seen) + column_total(ConfusionCol::unseen) + column_total(ConfusionCol::majority);
}

ConfusionTable& ConfusionTable::operator+=(const ConfusionTable& o) {
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) cells[r][c] += o.cells[r][c];
  if (per_seen.size() < o.per_seen.size()) per_seen.resize(o.per_seen.size(), std::array<double, 4>{});
  for (std::size_t k = 0; k < o.per_seen.size(); ++k)
    for (std::size_t r = 0; r < 4; ++r) per_seen[k][r] += o.per_seen[k][r];
  return *this;
}

ConfusionTable& ConfusionTable::operator*=(double s) {
  for (auto& row : cells)
    for (auto& v : row) v *= s;
  for (auto& k : per_seen)
    for (auto& v : k) v *= s;
  return *this;
}

namespace {

const char* kRowNames[] = {"known_correct", "known_wrong", "emerging", "majority"};
const char* kColNames[] = {"seen", "unseen", "majority"};

}  // namespace

json ConfusionTable::to_json() const {
  json rows = json::object();
  for (std::size_t r = 0; r < 4; ++r) {
    json row = json::object();
    for (std::size_t c = 0; c < 3; ++c) row[kColNames[c]] = cells[r][c];
    rows[kRowNames[r]] = row;
  }
  json seen = json::array();
  for (const auto& k : per_seen) seen.push_back(json(std::vector<double>(k.begin(), k.end())));
  return json{{"rows", rows},
              {"per_seen_subclass", seen},
              {"totals",
               {{"seen", column_total(ConfusionCol::seen)},
                {"unseen", column_total(ConfusionCol::unseen)},
                {"majority", column_total(ConfusionCol::majority)}}}};
}

std::string ConfusionTable::to_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s\n", "predicted\\true", "R_s", "R_u", "N_test");
  out << line;
  auto cell = [&](std::size_t r, std::size_t c) { return cells[r][c]; };
  std::snprintf(line, sizeof line, "%-16s %10.1f %10s %10s\n", "Known (correct)", cell(0, 0), "", "");
  out << line;
  std::snprintf(line, sizeof line, "%-16s %10.1f %10.1f %10.1f\n", "Known (other)", cell(1, 0), cell(0, 1) + cell(1, 1),
                cell(0, 2) + cell(1, 2));
  out << line;
  for (std::size_t r = 2; r < 4; ++r) {
    std::snprintf(line, sizeof line, "%-16s %10.1f %10.1f %10.1f\n", r == 2 ? "Emerging" : "Majority", cell(r, 0),
                  cell(r, 1), cell(r, 2));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %10.1f %10.1f %10.1f\n", "total", column_total(ConfusionCol::seen),
                column_total(ConfusionCol::unseen), column_total(ConfusionCol::majority));
  out << line;
  return out.str();
}

ConfusionTable confusion_table(std::span<const Decision> decisions, std::span<const EvalTarget> targets,
                               int seen_subclasses) {
  check_sizes(decisions, targets);
  ConfusionTable t;
  t.per_seen.assign(static_cast<std::size_t>(seen_subclasses), std::array<double, 4>{});
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    const EvalTarget& g = targets[i];
    ConfusionRow row = ConfusionRow::majority;
    if (d.verdict == Verdict::emerging)
      row = ConfusionRow::emerging;
    else if (d.verdict == Verdict::known)
      row = (g.truth == TruthSet::seen && d.subclass == g.subclass) ? ConfusionRow::known_correct : ConfusionRow::known_wrong;
    const auto col = g.truth == TruthSet::seen     ? ConfusionCol::seen
                     : g.truth == TruthSet::unseen ? ConfusionCol::unseen
                                                   : ConfusionCol::majority;
    t.at(row, col) += 1;
    if (g.truth == TruthSet::seen) {
      if (g.subclass < 1 || g.subclass > seen_subclasses)
        throw UsageError("test instance " + std::to_string(i) + " has seen subclass " + std::to_string(g.subclass) +
                         " outside 1.." + std::to_string(seen_subclasses));
      t.per_seen[static_cast<std::size_t>(g.subclass - 1)][static_cast<std::size_t>(row)] += 1;
    }
  }
  return t;
}

double acc_rare(const ConfusionTable& t) {
  const double rare = t.column_total(ConfusionCol::seen) + t.column_total(ConfusionCol::unseen);
  if (rare <= 0) throw UsageError("acc_rare: the test set has no rare instance");
  return (t.at(ConfusionRow::known_correct, ConfusionCol::seen) + t.at(ConfusionRow::emerging, ConfusionCol::unseen)) /
         rare;
}

std::string RepresentationSpec::to_string() const {
  switch (kind) {
    case Representation::raw: return "raw";
    case Representation::pca: return "pca:" + std::to_string(rank);
    case Representation::tfidf:
      return vocab_size % 1000 == 0 ? "tfidf" + std::to_string(vocab_size / 1000) + "k"
                                    : "tfidf" + std::to_string(vocab_size);
  }
  return "?";
}

RepresentationSpec RepresentationSpec::parse(std::string_view s) {
  RepresentationSpec r;
  const std::string str(s);
  if (str == "raw") {
    r.kind = Representation::raw;
    return r;
  }
  if (str.rfind("pca:", 0) == 0) {
    r.kind = Representation::pca;
    try {
      std::size_t used = 0;
      r.rank = std::stoi(str.substr(4), &used);
      if (used != str.size() - 4) throw std::invalid_argument(str);
    } catch (const std::exception&) {
      throw UsageError("bad PCA rank in '" + str + "'");
    }
    if (r.rank < 1) throw UsageError("PCA rank must be positive");
    return r;
  }
  if (str.rfind("tfidf", 0) == 0) {
    r.kind = Representation::tfidf;
    std::string n = str.substr(5);
    std::size_t mult = 1;
    if (!n.empty() && n.back() == 'k') {
      mult = 1000;
      n.pop_back();
    }
    if (n.empty()) return r;
    try {
      std::size_t used = 0;
      const long v = std::stol(n, &used);
      if (used != n.size() || v < 1) throw std::invalid_argument(n);
      r.vocab_size = static_cast<std::size_t>(v) * mult;
    } catch (const std::exception&) {
      throw UsageError("bad vocabulary size in '" + str + "'");
    }
    return r;
  }
  throw UsageError("unknown representation '" + str + "' (expected tfidf1k, pca:<rank> or raw)");
}

json ExperimentConfig::to_json() const {
  return json{{"repetitions", repetitions},
              {"base_seed", base_seed},
              {"representation", representation.to_string()},
              {"lambda0", lambda0},
              {"lambdak", lambdak},
              {"mu", mu},
              {"max_iters", train.max_iters},
              {"step_size", train.step_size ? json(*train.step_size) : json(nullptr)},
              {"step_decay", train.step_decay == StepDecay::inv_sqrt ? "inv_sqrt" : "fixed"},
              {"momentum", train.momentum},
              {"tol", train.tol},
              {"batch", train.batch},
              {"reject", to_string(rejection)},
              {"q", q}};
}

namespace {

Eigen::MatrixXd gather_features(const LabeledCorpus& corpus, std::span<const std::size_t> ids) {
  const auto& F = *corpus.features;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), F.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = F.row(static_cast<Eigen::Index>(ids[i]));
  return out;
}

}  // namespace

FeaturizedSplit featurize_split(const LabeledCorpus& corpus, const SplitResult& split, const EvalSet& eval,
                                const RepresentationSpec& rep) {
  FeaturizedSplit out;
  std::map<int, int> to_model;
  for (std::size_t i = 0; i < eval.seen_map.size(); ++i) to_model[eval.seen_map[i]] = static_cast<int>(i) + 1;
  for (auto id : split.train) {
    const int s = corpus.docs.at(id).subclass;
    if (s == 0) {
      out.train_subclass.push_back(0);
      continue;
    }
    auto it = to_model.find(s);
    if (it == to_model.end()) throw DataError("training document " + std::to_string(id) + " belongs to an unseen subclass");
    out.train_subclass.push_back(it->second);
  }

  out.space.kind = rep.kind;
  const bool use_features = rep.kind == Representation::raw || (rep.kind == Representation::pca && corpus.features);
  if (use_features) {
    if (!corpus.features) throw DataError("representation 'raw' needs a corpus with feature vectors");
    out.train = gather_features(corpus, split.train);
    out.test = gather_features(corpus, eval.doc_ids);
    out.space.raw_dim = static_cast<int>(corpus.features->cols());
  } else {
    Vocabulary vocab = build_vocab(corpus, split.train, rep.vocab_size);
    out.train = tfidf_transform(corpus, split.train, vocab).values;
    out.test = tfidf_transform(corpus, eval.doc_ids, vocab).values;
    out.space.vocab = std::move(vocab);
  }
  if (rep.kind == Representation::pca) {
    PcaProjection proj = pca_fit(out.train, rep.rank);
    out.train = pca_transform(out.train, proj);
    out.test = pca_transform(out.test, proj);
    out.space.projection = std::move(proj);
  }
  return out;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"precision",   "recall",        "f1",      "precision_seen",
                                              "recall_seen", "recall_unseen", "acc_rare"};
  return names;
}

namespace {

std::optional<double> metric_value(const RepetitionResult& r, const std::string& name) {
  if (!r.metrics) return std::nullopt;
  const auto& m = *r.metrics;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "f1") return m.f1;
  if (name == "precision_seen") return m.precision_seen;
  if (name == "recall_seen") return m.recall_seen;
  if (name == "recall_unseen") return m.recall_unseen;
  if (name == "acc_rare") return r.acc_rare;
  return std::nullopt;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

RepetitionResult run_once(const LabeledCorpus& corpus, const ExperimentConfig& cfg, std::uint64_t seed) {
  RepetitionResult res;
  res.seed = seed;
  const SplitResult split = split_protocol(corpus, seed);
  const EvalSet eval = make_eval_set(corpus, split);
  const FeaturizedSplit fs = featurize_split(corpus, split, eval, cfg.representation);
  const int K = static_cast<int>(eval.seen_map.size());

  BoundData data(fs.train, fs.train_subclass, K);
  const Hyperparams hp = Hyperparams::uniform(K, cfg.lambda0, cfg.lambdak, cfg.mu);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  if (cfg.representation.kind == Representation::pca) tc.correlation = FeatureCorrelation::identity;
  const TrainedModel trained = fit(data, hp, tc);
  res.iters_run = trained.iters_run;
  res.converged = trained.converged;

  ModelDocument model;
  model.params = trained.params;
  model.thresholds = calibrate(trained.params, data, cfg.rejection, cfg.q);
  model.features = fs.space;
  for (int s : eval.seen_map) model.subclass_names.push_back(corpus.subclass_names.at(static_cast<std::size_t>(s - 1)));

  std::vector<Eigen::VectorXd> stream;
  stream.reserve(static_cast<std::size_t>(fs.test.rows()));
  for (Eigen::Index i = 0; i < fs.test.rows(); ++i) stream.emplace_back(fs.test.row(i).transpose());
  const StreamResult sr = predict_stream(model, stream);

  res.metrics = top_level_metrics(sr.decisions, eval.targets);
  res.confusion = confusion_table(sr.decisions, eval.targets, K);
  res.acc_rare = acc_rare(*res.confusion);
  return res;
}

}  // namespace

const MetricSummary& MetricReport::get(std::string_view name) const {
  for (const auto& [n, s] : summary)
    if (n == name) return s;
  throw UsageError("unknown metric '" + std::string(name) + "'");
}

MetricReport run_experiment(const LabeledCorpus& corpus, const ExperimentConfig& cfg) {
  corpus.validate();
  if (cfg.repetitions < 1) throw UsageError("repetitions must be at least 1");
  MetricReport rep;
  rep.config = cfg.to_json();
  ConfusionTable sum;
  int ok = 0;
  for (int i = 0; i < cfg.repetitions; ++i) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
    try {
      rep.repetitions.push_back(run_once(corpus, cfg, seed));
      sum += *rep.repetitions.back().confusion;
      ++ok;
    } catch (const Error& e) {
      RepetitionResult failed;
      failed.seed = seed;
      failed.error = e.what();
      rep.repetitions.push_back(std::move(failed));
      rep.incomplete = true;
    }
  }
  if (ok > 0) {
    sum *= 1.0 / ok;
    rep.mean_confusion = sum;
  }
  for (const auto& name : metric_names()) {
    std::vector<double> vals;
    for (const auto& r : rep.repetitions)
      if (auto v = metric_value(r, name)) vals.push_back(*v);
    MetricSummary s;
    if (!vals.empty()) {
      double mean = 0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      s.mean = mean;
      if (vals.size() > 1) {
        double ss = 0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        s.sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
      }
    }
    rep.summary.emplace_back(name, s);
  }
  return rep;
}

json MetricReport::to_json() const {
  json summary_json = json::object();
  for (const auto& [name, s] : summary) summary_json[name] = {{"mean", opt(s.mean)}, {"sd", opt(s.sd)}};
  json reps = json::array();
  for (const auto& r : repetitions) {
    json j{{"seed", r.seed}};
    if (!r.error.empty()) {
      j["error"] = r.error;
    } else {
      for (const auto& name : metric_names()) j[name] = opt(metric_value(r, name));
      j["iters_run"] = r.iters_run;
      j["converged"] = r.converged;
      j["confusion"] = r.confusion->to_json();
    }
    reps.push_back(j);
  }
  json out{{"config", config}, {"summary", summary_json}, {"repetitions", reps}, {"incomplete", incomplete}};
  out["mean_confusion"] = mean_confusion ? mean_confusion->to_json() : json(nullptr);
  return out;
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %10s %10s\n", "metric", "mean", "sd");
  out << line;
  auto fmt = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  for (const auto& [name, s] : summary) {
    std::snprintf(line, sizeof line, "%-16s %10s %10s\n", name.c_str(), fmt(s.mean).c_str(), fmt(s.sd).c_str());
    out << line;
  }
  if (mean_confusion) out << "\n" << mean_confusion->to_text();
  for (const auto& r : repetitions)
    if (!r.error.empty()) out << "repetition seed=" << r.seed << " failed: " << r.error << "\n";
  if (incomplete) out << "report incomplete\n";
  return out.str();
}

json BenchConfig::to_json() const {
  return json{{"n", n},           {"d", d},           {"K", K},   {"iters", iters},
              {"repeats", repeats}, {"seed", seed},   {"lambda0", lambda0},
              {"lambdak", lambdak}, {"mu", mu},       {"batch", train.batch},
              {"momentum", train.momentum},
              {"step_size", train.step_size ? json(*train.step_size) : json(nullptr)}};
}

json BenchResult::to_json() const {
  json pts = json::array();
  for (const auto& p : points) pts.push_back({{"n", p.n}, {"seconds", p.seconds}, {"iters_run", p.iters_run}});
  return json{{"config", config}, {"points", pts}, {"ratios", ratios}};
}

BenchResult run_bench(const BenchConfig& cfg) {
  if (cfg.n < static_cast<std::size_t>(2 * cfg.K)) throw UsageError("bench: n must be at least 2K");
  if (cfg.repeats < 1) throw UsageError("bench: repeats must be at least 1");
  BenchResult out;
  out.config = cfg.to_json();
  TrainConfig tc = cfg.train;
  tc.max_iters = cfg.iters;
  // Run every iteration so the work per size is comparable.
  tc.tol = std::numeric_limits<double>::min();
  tc.log_every = 0;
  const Hyperparams hp = Hyperparams::uniform(cfg.K, cfg.lambda0, cfg.lambdak, cfg.mu);
  for (std::size_t scale : {1u, 2u, 4u}) {
    const std::size_t n = cfg.n * scale;
    SyntheticConfig sc;
    sc.d = cfg.d;
    sc.k_total = cfg.K;
    sc.docs_per_subclass = static_cast<int>(n / (2 * static_cast<std::size_t>(cfg.K)));
    sc.majority_docs = static_cast<int>(n) - cfg.K * sc.docs_per_subclass;
    sc.seed = cfg.seed;
    const LabeledCorpus corpus = gen_synthetic(sc);
    std::vector<int> subclass;
    for (const auto& doc : corpus.docs) subclass.push_back(doc.subclass);
    const BoundData data(*corpus.features, subclass, cfg.K);
    BenchPoint pt;
    pt.n = n;
    pt.seconds = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const TrainedModel m = fit(data, hp, tc);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      pt.seconds = std::min(pt.seconds, dt.count());
      pt.iters_run = m.iters_run;
    }
    out.points.push_back(pt);
  }
  for (std::size_t i = 1; i < out.points.size(); ++i)
    out.ratios.push_back(out.points[i].seconds / out.points[i - 1].seconds);
  return out;
}

}  // namespace rarecog
