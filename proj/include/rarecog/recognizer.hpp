#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rarecog/featurize.hpp"
#include "rarecog/objective.hpp"
#include "rarecog/rejection.hpp"

namespace rarecog {

enum class Verdict { majority, known, emerging };

std::string to_string(Verdict v);

struct Decision {
  Verdict verdict = Verdict::majority;
  /// Subclass id in 1..K when verdict is known, else 0.
  int subclass = 0;
  double gc_score = 0.0;
  /// Present exactly when the specialized classifiers were evaluated.
  std::optional<Eigen::VectorXd> sc_scores;

  bool operator==(const Decision& o) const;
};

/// How raw inputs become model features: raw vectors or TF-IDF text,
/// optionally followed by a PCA projection.
struct FeatureSpace {
  Representation kind = Representation::raw;
  std::optional<Vocabulary> vocab;
  std::optional<PcaProjection> projection;
  /// Length of raw feature vectors (raw base only).
  int raw_dim = 0;

  /// Dimension of the model-side feature vector.
  int output_dim() const;
  bool accepts_text() const { return vocab.has_value(); }
  Eigen::VectorXd embed_text(std::string_view text) const;
  Eigen::VectorXd embed_features(std::span<const double> raw) const;

  nlohmann::json to_json() const;
  static FeatureSpace from_json(const nlohmann::json& j);
};

inline constexpr int kModelVersion = 1;

struct ModelDocument {
  int version = kModelVersion;
  ModelParams params;
  RejectionThresholds thresholds;
  FeatureSpace features;
  std::vector<std::string> subclass_names;
  /// Free-form record of the configuration that produced the model.
  nlohmann::json provenance = nlohmann::json::object();

  int d() const { return params.dim(); }
  int K() const { return params.num_subclasses(); }
  /// Throws DataError naming the fields that disagree.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelDocument from_json(const nlohmann::json& j);
};

/// General classifier first; only instances it scores strictly positive are
/// passed to the specialized classifiers. `sc_evaluations`, when given, is
/// incremented each time the specialized scores are computed.
Decision predict(const ModelDocument& model, std::span<const double> x, std::uint64_t* sc_evaluations = nullptr);
Decision predict(const ModelDocument& model, const Eigen::VectorXd& x, std::uint64_t* sc_evaluations = nullptr);

struct StreamStats {
  std::size_t majority = 0;
  std::size_t emerging = 0;
  /// known[k - 1] counts Known(k) verdicts.
  std::vector<std::size_t> known;
  std::uint64_t sc_evaluations = 0;

  std::size_t total() const;
  nlohmann::json to_json() const;
};

struct StreamResult {
  std::vector<Decision> decisions;
  StreamStats stats;
};

/// One decision per input, in input order.
StreamResult predict_stream(const ModelDocument& model, std::span<const Eigen::VectorXd> source);

std::string serialize_model(const ModelDocument& model);
ModelDocument parse_model(std::string_view text);
void save_model(const ModelDocument& model, const std::filesystem::path& path);
ModelDocument load_model(const std::filesystem::path& path);

}  // namespace rarecog
