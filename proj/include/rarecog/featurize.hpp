#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rarecog/corpus.hpp"

namespace rarecog {

enum class Representation { raw, tfidf, pca };

std::string to_string(Representation rep);

/// Lowercases, splits on non-alphabetic code points and keeps tokens of at
/// least two code points. Input is UTF-8; letters outside ASCII are recognised
/// for Latin-1, Latin Extended-A/B, Greek and Cyrillic.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<int> df, std::size_t n_docs_fitted);

  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<int>& df() const { return df_; }
  std::size_t n_docs_fitted() const { return n_docs_fitted_; }
  std::size_t size() const { return terms_.size(); }
  std::optional<std::size_t> index_of(std::string_view term) const;

  std::uint64_t fingerprint() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> terms_;
  std::vector<int> df_;
  std::size_t n_docs_fitted_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Keeps the `top_n` most frequent tokens of the given documents (ties broken
/// lexicographically). Throws DataError if no token survives.
Vocabulary build_vocab(const LabeledCorpus& corpus, std::span<const std::size_t> doc_ids,
                       std::size_t top_n = 1000);

struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::size_t> row_ids;
  Representation representation = Representation::raw;
};

/// Raw count times ln((1 + N) / (1 + df)), rows scaled to unit L2 norm.
/// Rows with no in-vocabulary term stay zero.
Eigen::RowVectorXd tfidf_row(std::string_view text, const Vocabulary& vocab);
FeatureMatrix tfidf_transform(const LabeledCorpus& corpus, std::span<const std::size_t> doc_ids,
                              const Vocabulary& vocab);

struct PcaProjection {
  Eigen::VectorXd mean;
  /// One unit-norm principal direction per row, by decreasing variance.
  Eigen::MatrixXd components;
  Eigen::VectorXd explained_variance;
  /// Set when fewer than the requested number of components were returned.
  bool truncated = false;

  int rank() const { return static_cast<int>(components.rows()); }
  int input_dim() const { return static_cast<int>(mean.size()); }

  nlohmann::json to_json() const;
  static PcaProjection from_json(const nlohmann::json& j);
};

/// Eigendecomposition of the sample covariance (n - 1 denominator).
/// Directions whose variance is numerically zero are dropped and `truncated`
/// is set when that leaves fewer than `rank` components.
PcaProjection pca_fit(const Eigen::MatrixXd& X, int rank);
Eigen::MatrixXd pca_transform(const Eigen::MatrixXd& X, const PcaProjection& proj);
Eigen::MatrixXd pca_inverse_transform(const Eigen::MatrixXd& Z, const PcaProjection& proj);

}  // namespace rarecog
