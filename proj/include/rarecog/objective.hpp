#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rarecog {

/// Weights and biases of the general classifier (index 0) and the K
/// specialized classifiers (rows of W, indices 1..K).
struct ModelParams {
  Eigen::VectorXd w0;
  double b0 = 0.0;
  Eigen::MatrixXd W;  // K x d
  Eigen::VectorXd b;  // K

  static ModelParams zeros(int d, int K);

  int dim() const { return static_cast<int>(w0.size()); }
  int num_subclasses() const { return static_cast<int>(W.rows()); }
  bool all_finite() const;

  /// Concatenated block (w0, b0, w1, b1, ..., wK, bK).
  Eigen::VectorXd flatten() const;
  static ModelParams unflatten(const Eigen::VectorXd& theta, int d, int K);

  bool operator==(const ModelParams& other) const;
};

struct Hyperparams {
  double lambda0 = 1.0;
  Eigen::VectorXd lambdak;  // one per subclass
  double mu = 1.0;

  static Hyperparams uniform(int K, double lambda0, double lambdak, double mu);
  void validate(int K) const;
};

/// Row-major storage keeps matrix-vector products streaming in n.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowRef = Eigen::Ref<const RowMatrix>;

/// Training matrix with its label encodings. Rows whose subclass is 0 are
/// majority; 1..K are rare. Immutable after construction.
///
/// Rows are stored rare first (each group in input order) so that R is a
/// view into X rather than a second copy; row_order() maps back.
class BoundData {
 public:
  BoundData(Eigen::MatrixXd X, std::vector<int> subclass, int K);

  const RowMatrix& X() const { return X_; }
  /// +1 on rare rows, -1 on majority rows.
  const Eigen::VectorXd& y_all() const { return y_all_; }
  /// The first n0 rows of X.
  RowRef R() const { return X_.topRows(n0_); }
  /// Input index of each stored row.
  const std::vector<Eigen::Index>& row_order() const { return row_order_; }
  /// +1 on rare rows of subclass k, -1 on the other rare rows (length n0).
  const Eigen::VectorXd& y_k(int k) const { return y_k_[static_cast<std::size_t>(k - 1)]; }
  const std::vector<int>& subclass() const { return subclass_; }

  int n() const { return static_cast<int>(X_.rows()); }
  int n0() const { return static_cast<int>(n0_); }
  int d() const { return static_cast<int>(X_.cols()); }
  int K() const { return K_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  RowMatrix X_;
  std::vector<int> subclass_;
  int K_;
  Eigen::VectorXd y_all_;
  Eigen::Index n0_ = 0;
  std::vector<Eigen::Index> row_order_;
  std::vector<Eigen::VectorXd> y_k_;
  std::uint64_t fingerprint_;
};

std::uint64_t matrix_fingerprint(const Eigen::MatrixXd& X);

enum class FeatureCorrelation {
  /// Penalty weights (x_pᵀx_q)² from the data.
  gram_squared,
  /// Penalty weights replaced by the identity, for decorrelated (PCA) features.
  identity,
};

/// Elementwise-squared Gram matrix of the training features, computed once
/// and shared by every loss and gradient evaluation.
class GramCache {
 public:
  GramCache(Eigen::MatrixXd g2, std::uint64_t fingerprint, FeatureCorrelation mode);

  const Eigen::MatrixXd& g2() const { return g2_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  FeatureCorrelation mode() const { return mode_; }
  int dim() const { return static_cast<int>(g2_.rows()); }
  /// g2 times v; skips the product in identity mode.
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

 private:
  Eigen::MatrixXd g2_;
  std::uint64_t fingerprint_;
  FeatureCorrelation mode_;
};

/// (XᵀX) ⊙ (XᵀX). Each call increments gram_computation_count().
GramCache gram_squared(const Eigen::MatrixXd& X);
GramCache gram_squared(const BoundData& data);
GramCache identity_gram(const BoundData& data);
GramCache make_gram(const BoundData& data, FeatureCorrelation mode);
std::uint64_t gram_computation_count();

/// Σ max(0, 1 - y s).
double hinge(std::span<const double> scores, std::span<const double> labels);
double hinge(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

/// The correlation penalty alone:
/// (μ/2) Σ_{p,q} {½ w0p² w0q² + ½ Σ_k wkp² wkq² + w0p² Σ_k wkq²} g2[p][q].
double penalty(const ModelParams& params, const GramCache& gram, double mu);

/// Hinge + ridge terms of all K+1 models plus the correlation penalty.
double total_loss(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                  const GramCache& gram);

Eigen::VectorXd grad_w0(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                        const GramCache& gram);
Eigen::VectorXd grad_wk(int k, const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                        const GramCache& gram);
/// model 0 is the general classifier, 1..K the specialized ones.
double grad_bias(int model, const ModelParams& params, const BoundData& data);

/// All weight and bias subgradients at once, sharing the Gram products.
ModelParams full_gradient(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                          const GramCache& gram);

/// Hessian of penalty() with respect to (w0, w1, ..., wK), biases excluded.
/// Limited to d (K + 1) <= 200.
Eigen::MatrixXd penalty_hessian(const ModelParams& params, const GramCache& gram, double mu);

inline constexpr int kMaxHessianDim = 200;

namespace detail {

struct HingeGrad {
  Eigen::VectorXd w;
  double b = 0.0;
};

/// Subgradient of Σ_i max(0, 1 - y_i (A_i w + b)) with the kink taken as 0.
HingeGrad hinge_subgradient(const RowRef& A, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b);
/// Same over the listed rows only, multiplied by `scale`.
HingeGrad hinge_subgradient(const RowRef& A, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                            std::span<const Eigen::Index> rows, double scale);

void check_compatible(const ModelParams& params, const BoundData& data, const GramCache& gram);

/// Rows used for the hinge terms of one stochastic step: `all` indexes rows
/// of X for the general classifier, `rare` indexes rows of R for the
/// specialized ones. Penalty and ridge terms stay exact.
struct RowSample {
  std::span<const Eigen::Index> all;
  double all_scale = 1.0;
  std::span<const Eigen::Index> rare;
  double rare_scale = 1.0;
};

/// full_gradient() when `sample` is null, otherwise with sampled hinge terms.
ModelParams joint_gradient(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                           const GramCache& gram, const RowSample* sample);

}  // namespace detail

}  // namespace rarecog
