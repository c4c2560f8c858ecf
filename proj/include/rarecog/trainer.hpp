#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rarecog/objective.hpp"

namespace rarecog {

enum class StepDecay { fixed, inv_sqrt };

struct TrainConfig {
  int max_iters = 500;
  /// Defaults to default_step_size() when unset.
  std::optional<double> step_size;
  StepDecay step_decay = StepDecay::inv_sqrt;
  double momentum = 0.9;
  /// Stop once the relative loss change over a 10-iteration window drops below tol.
  double tol = 1e-6;
  /// 0 means full batch; otherwise rows sampled per step.
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  /// Emit a progress line every log_every iterations (0 disables).
  int log_every = 0;
  std::ostream* log = nullptr;  // std::cerr when null
  FeatureCorrelation correlation = FeatureCorrelation::gram_squared;
  /// Keep the flattened parameter block after every iteration.
  bool record_iterates = false;

  void validate() const;
};

inline constexpr int kConvergenceWindow = 10;
inline constexpr double kDivergenceFactor = 1e6;

struct TrainedModel {
  /// Lowest-loss iterate seen during the run.
  ModelParams params;
  Hyperparams hp;
  /// Loss after each iteration.
  std::vector<double> loss_trace;
  double best_loss = 0.0;
  bool converged = false;
  int iters_run = 0;
  double step_size = 0.0;
  std::vector<Eigen::VectorXd> iterates;
};

/// 1 / (lambda0 + mu * max_p g2[p][p]).
double default_step_size(const Hyperparams& hp, const GramCache& gram);

/// Nesterov-accelerated subgradient descent on the joint loss, starting from
/// zero. Builds the Gram cache once; mini-batch when cfg.batch > 0.
TrainedModel fit(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg);
TrainedModel fit(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg, const GramCache& gram);

/// fit() with the hinge terms estimated from `batch` sampled rows per step
/// (scaled by n/m for the general classifier and n0/m' for the specialized
/// ones). A batch covering every row reproduces the full-batch trajectory.
TrainedModel fit_minibatch(const BoundData& data, const Hyperparams& hp, TrainConfig cfg, std::size_t batch);

/// The K+1 classifiers trained separately on hinge + ridge loss only, each
/// with its own copy of the optimizer. `block_iterates[i]` holds (w_i, b_i)
/// after each iteration when cfg.record_iterates is set.
struct IndependentFit {
  ModelParams params;
  std::vector<std::vector<Eigen::VectorXd>> block_iterates;
  std::vector<bool> converged;
};
IndependentFit fit_independent(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg);

}  // namespace rarecog
