#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rarecog/corpus.hpp"
#include "rarecog/featurize.hpp"
#include "rarecog/recognizer.hpp"
#include "rarecog/rejection.hpp"
#include "rarecog/trainer.hpp"

namespace rarecog {

enum class TruthSet { seen, unseen, majority };

/// Ground truth of one test instance. `subclass` is the model-side id
/// (1..K_seen) for seen instances and 0 otherwise.
struct EvalTarget {
  TruthSet truth = TruthSet::majority;
  int subclass = 0;
};

/// Test instances in the order R_s, R_u, N_test, together with their
/// corpus indices. Seen subclasses are renumbered 1..K_seen in the order of
/// split.seen_subclasses.
struct EvalSet {
  std::vector<std::size_t> doc_ids;
  std::vector<EvalTarget> targets;
  /// seen_map[k - 1] is the corpus subclass behind model subclass k.
  std::vector<int> seen_map;
};

EvalSet make_eval_set(const LabeledCorpus& corpus, const SplitResult& split);

struct TopLevelMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> precision_seen;
  std::optional<double> recall_seen;
  std::optional<double> recall_unseen;
};

/// R̂_test is every instance with a non-Majority verdict. Ratios with an
/// empty denominator are left empty, as is F1 when precision or recall is.
TopLevelMetrics top_level_metrics(std::span<const Decision> decisions, std::span<const EvalTarget> targets);

enum class ConfusionRow { known_correct = 0, known_wrong = 1, emerging = 2, majority = 3 };
enum class ConfusionCol { seen = 0, unseen = 1, majority = 2 };

/// Predicted outcome x true set. A Known verdict on an unseen or majority
/// instance is counted in the known_wrong row. Counts are real so that tables
/// can be averaged over repetitions.
struct ConfusionTable {
  std::array<std::array<double, 3>, 4> cells{};
  /// Seen-column breakdown by model subclass: per_seen[k - 1][row].
  std::vector<std::array<double, 4>> per_seen;

  double& at(ConfusionRow r, ConfusionCol c) { return cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]; }
  double at(ConfusionRow r, ConfusionCol c) const {
    return cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  double column_total(ConfusionCol c) const;
  double row_total(ConfusionRow r) const;
  double total() const;

  ConfusionTable& operator+=(const ConfusionTable& o);
  ConfusionTable& operator*=(double s);

  nlohmann::json to_json() const;
  std::string to_text() const;
};

ConfusionTable confusion_table(std::span<const Decision> decisions, std::span<const EvalTarget> targets,
                               int seen_subclasses);

/// (Emerging on R_u + Known-correct on R_s) / |R_test|.
double acc_rare(const ConfusionTable& table);

struct RepresentationSpec {
  Representation kind = Representation::tfidf;
  std::size_t vocab_size = 1000;
  /// PCA rank. The projection is fitted on the corpus feature vectors when
  /// the corpus carries them, otherwise on TF-IDF.
  int rank = 0;

  /// "tfidf1k", "raw" or "pca:<rank>".
  std::string to_string() const;
  static RepresentationSpec parse(std::string_view s);
};

struct ExperimentConfig {
  int repetitions = 5;
  std::uint64_t base_seed = 0;
  RepresentationSpec representation;
  double lambda0 = 1.0;
  double lambdak = 1.0;
  double mu = 1.0;
  TrainConfig train;
  RejectionMethod rejection = RejectionMethod::evt_pot;
  double q = 0.01;

  nlohmann::json to_json() const;
};

/// Train-fitted featurization of one split.
struct FeaturizedSplit {
  FeatureSpace space;
  Eigen::MatrixXd train;
  /// Model-side subclass (0 majority) of every training row.
  std::vector<int> train_subclass;
  Eigen::MatrixXd test;
};

FeaturizedSplit featurize_split(const LabeledCorpus& corpus, const SplitResult& split, const EvalSet& eval,
                                const RepresentationSpec& rep);

struct RepetitionResult {
  std::uint64_t seed = 0;
  std::optional<TopLevelMetrics> metrics;
  std::optional<double> acc_rare;
  std::optional<ConfusionTable> confusion;
  int iters_run = 0;
  bool converged = false;
  std::string error;
};

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> sd;
};

struct MetricReport {
  std::vector<RepetitionResult> repetitions;
  /// Keyed by metric name in the order of metric_names().
  std::vector<std::pair<std::string, MetricSummary>> summary;
  /// Mean confusion table over successful repetitions.
  std::optional<ConfusionTable> mean_confusion;
  bool incomplete = false;
  nlohmann::json config;

  const MetricSummary& get(std::string_view name) const;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

const std::vector<std::string>& metric_names();

/// Split, featurize, fit, calibrate and predict the test set as one stream,
/// once per seed base_seed + i. A failing repetition is recorded and marks
/// the report incomplete.
MetricReport run_experiment(const LabeledCorpus& corpus, const ExperimentConfig& cfg);

/// Fit timing at n, 2n and 4n training rows with d, K and the iteration
/// count held fixed.
struct BenchConfig {
  std::size_t n = 2000;
  int d = 200;
  int K = 4;
  int iters = 200;
  /// Each size is timed this many times and the fastest run kept.
  int repeats = 3;
  std::uint64_t seed = 0;
  double lambda0 = 1.0;
  double lambdak = 1.0;
  double mu = 1.0;
  TrainConfig train;

  nlohmann::json to_json() const;
};

struct BenchPoint {
  std::size_t n = 0;
  double seconds = 0.0;
  int iters_run = 0;
};

struct BenchResult {
  std::vector<BenchPoint> points;
  /// seconds[i + 1] / seconds[i].
  std::vector<double> ratios;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

BenchResult run_bench(const BenchConfig& cfg);

}  // namespace rarecog
