#include "rarecog/rejection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rarecog/errors.hpp"

namespace rarecog {

using json = nlohmann::json;

std::string to_string(RejectionMethod m) { return m == RejectionMethod::evt_pot ? "evt" : "percentile"; }

RejectionMethod parse_rejection_method(std::string_view s) {
  if (s == "evt" || s == "evt_pot") return RejectionMethod::evt_pot;
  if (s == "percentile") return RejectionMethod::percentile;
  throw UsageError("unknown rejection method '" + std::string(s) + "' (expected evt or percentile)");
}

double empirical_quantile(std::vector<double> sample, double p) {
  if (sample.empty()) throw UsageError("empirical_quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double h = (static_cast<double>(sample.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

ThresholdResult threshold_from_scores(std::span<const double> scores, RejectionMethod method, double q) {
  if (!(q > 0.0 && q < 1.0)) throw UsageError("risk level q must lie in (0, 1)");
  const std::vector<double> s(scores.begin(), scores.end());
  const int needed = method == RejectionMethod::evt_pot ? kMinEvtSamples : kMinPercentileSamples;
  if (static_cast<int>(s.size()) < needed)
    throw UsageError("rejection calibration needs >= " + std::to_string(needed) + " scores, got " +
                     std::to_string(s.size()));

  ThresholdResult out;
  if (method == RejectionMethod::percentile) {
    out.threshold = empirical_quantile(s, q);
    return out;
  }

  const double u = empirical_quantile(s, kAnchorQuantile);
  std::vector<double> excess;
  for (double v : s)
    if (v < u) excess.push_back(u - v);
  double mean = 0.0;
  double var = 0.0;
  if (excess.size() >= 2) {
    for (double e : excess) mean += e;
    mean /= static_cast<double>(excess.size());
    for (double e : excess) var += (e - mean) * (e - mean);
    var /= static_cast<double>(excess.size() - 1);
  }
  if (excess.size() < 2 || !(var > 0.0) || !(mean > 0.0)) {
    out.threshold = empirical_quantile(s, q);
    out.fell_back = true;
    return out;
  }

  // Method of moments: mean = sigma / (1 - xi), var = sigma^2 / ((1 - xi)^2 (1 - 2 xi)).
  const double ratio = mean * mean / var;
  TailFit fit;
  fit.shape = 0.5 * (1.0 - ratio);
  fit.scale = 0.5 * mean * (ratio + 1.0);
  fit.anchor = u;
  fit.excess_count = static_cast<int>(excess.size());

  const double m = static_cast<double>(s.size());
  const double nu = static_cast<double>(excess.size());
  if (std::abs(fit.shape) < 1e-6)
    out.threshold = u - fit.scale * std::log(nu / (q * m));
  else
    out.threshold = u - fit.scale / fit.shape * (std::pow(q * m / nu, -fit.shape) - 1.0);
  out.tail = fit;
  return out;
}

RejectionThresholds calibrate(const ModelParams& params, const BoundData& data, RejectionMethod method, double q) {
  if (params.dim() != data.d() || params.num_subclasses() != data.K())
    throw UsageError("calibrate: parameters do not match the bound data");
  RejectionThresholds out;
  out.method = method;
  out.q = q;
  for (int k = 1; k <= data.K(); ++k) {
    const Eigen::VectorXd scores = (data.R() * params.W.row(k - 1).transpose()).array() + params.b(k - 1);
    std::vector<double> members;
    for (Eigen::Index r = 0; r < scores.size(); ++r)
      if (data.y_k(k)(r) > 0) members.push_back(scores(r));
    ThresholdResult t;
    try {
      t = threshold_from_scores(members, method, q);
    } catch (const UsageError& e) {
      throw DataError("subclass " + std::to_string(k) + ": " + e.what());
    }
    out.thresholds.push_back(t.threshold);
    out.tail_fits.push_back(t.tail);
    out.fell_back.push_back(t.fell_back);
  }
  return out;
}

bool accepts(const RejectionThresholds& t, int k, double score) {
  if (k < 1 || k > t.num_subclasses()) throw UsageError("accepts: subclass " + std::to_string(k) + " out of range");
  return score >= t.thresholds[static_cast<std::size_t>(k - 1)];
}

json RejectionThresholds::to_json() const {
  json fits = json::array();
  for (const auto& f : tail_fits) {
    if (f)
      fits.push_back({{"shape", f->shape}, {"scale", f->scale}, {"anchor", f->anchor}, {"excess_count", f->excess_count}});
    else
      fits.push_back(nullptr);
  }
  return json{{"method", to_string(method)}, {"q", q},          {"thresholds", thresholds},
              {"tail_fits", fits},           {"fell_back", fell_back}};
}

RejectionThresholds RejectionThresholds::from_json(const json& j) {
  try {
    RejectionThresholds t;
    t.method = parse_rejection_method(j.at("method").get<std::string>());
    t.q = j.at("q").get<double>();
    if (!(t.q > 0.0 && t.q < 1.0)) throw DataError("thresholds: q outside (0, 1)");
    t.thresholds = j.at("thresholds").get<std::vector<double>>();
    for (double v : t.thresholds)
      if (!std::isfinite(v)) throw DataError("thresholds: non-finite threshold");
    for (const auto& f : j.value("tail_fits", json::array())) {
      if (f.is_null()) {
        t.tail_fits.emplace_back();
      } else {
        t.tail_fits.push_back(TailFit{f.at("shape").get<double>(), f.at("scale").get<double>(),
                                      f.at("anchor").get<double>(), f.at("excess_count").get<int>()});
      }
    }
    t.fell_back = j.value("fell_back", std::vector<bool>{});
    t.tail_fits.resize(t.thresholds.size());
    t.fell_back.resize(t.thresholds.size(), false);
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("thresholds: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("thresholds: ") + e.what());
  }
}

}  // namespace rarecog
