#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "rarecog/objective.hpp"

namespace rarecog {

enum class RejectionMethod { evt_pot, percentile };

std::string to_string(RejectionMethod m);
RejectionMethod parse_rejection_method(std::string_view s);

/// Generalized Pareto fit of the lower tail below `anchor`.
struct TailFit {
  double shape = 0.0;  // xi
  double scale = 0.0;  // sigma
  double anchor = 0.0; // u
  int excess_count = 0;
};

struct RejectionThresholds {
  /// thresholds[k - 1] is the cutoff of subclass k.
  std::vector<double> thresholds;
  RejectionMethod method = RejectionMethod::evt_pot;
  double q = 0.01;
  std::vector<std::optional<TailFit>> tail_fits;
  /// Set for subclasses where the tail fit was degenerate and the percentile
  /// rule was used instead.
  std::vector<bool> fell_back;

  int num_subclasses() const { return static_cast<int>(thresholds.size()); }

  nlohmann::json to_json() const;
  static RejectionThresholds from_json(const nlohmann::json& j);
};

inline constexpr double kAnchorQuantile = 0.2;
inline constexpr int kMinEvtSamples = 8;
inline constexpr int kMinPercentileSamples = 2;

/// Linear-interpolation (type 7) empirical quantile.
double empirical_quantile(std::vector<double> sample, double p);

struct ThresholdResult {
  double threshold = 0.0;
  std::optional<TailFit> tail;
  bool fell_back = false;
};

/// Cutoff below which a genuine member's score falls with probability q.
/// Throws UsageError when the sample is too small for the method.
ThresholdResult threshold_from_scores(std::span<const double> scores, RejectionMethod method, double q);

/// Scores of every subclass-k training member under f_k feed
/// threshold_from_scores for each k.
RejectionThresholds calibrate(const ModelParams& params, const BoundData& data, RejectionMethod method,
                              double q = 0.01);

/// score >= thresholds[k - 1].
bool accepts(const RejectionThresholds& t, int k, double score);

}  // namespace rarecog
