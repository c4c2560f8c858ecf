#include "rarecog/objective.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "rarecog/errors.hpp"
#include "rarecog/io.hpp"

namespace rarecog {

namespace {
std::atomic<std::uint64_t> g_gram_computations{0};
}

ModelParams ModelParams::zeros(int d, int K) {
  ModelParams p;
  p.w0 = Eigen::VectorXd::Zero(d);
  p.W = Eigen::MatrixXd::Zero(K, d);
  p.b = Eigen::VectorXd::Zero(K);
  return p;
}

bool ModelParams::all_finite() const {
  return w0.allFinite() && std::isfinite(b0) && W.allFinite() && b.allFinite();
}

Eigen::VectorXd ModelParams::flatten() const {
  const int d = dim();
  const int K = num_subclasses();
  Eigen::VectorXd theta((K + 1) * (d + 1));
  theta.segment(0, d) = w0;
  theta(d) = b0;
  for (int k = 0; k < K; ++k) {
    const int off = (k + 1) * (d + 1);
    theta.segment(off, d) = W.row(k).transpose();
    theta(off + d) = b(k);
  }
  return theta;
}

ModelParams ModelParams::unflatten(const Eigen::VectorXd& theta, int d, int K) {
  if (theta.size() != static_cast<Eigen::Index>(K + 1) * (d + 1))
    throw UsageError("unflatten: parameter block has the wrong length");
  ModelParams p = zeros(d, K);
  p.w0 = theta.segment(0, d);
  p.b0 = theta(d);
  for (int k = 0; k < K; ++k) {
    const int off = (k + 1) * (d + 1);
    p.W.row(k) = theta.segment(off, d).transpose();
    p.b(k) = theta(off + d);
  }
  return p;
}

bool ModelParams::operator==(const ModelParams& o) const {
  return w0.size() == o.w0.size() && W.rows() == o.W.rows() && W.cols() == o.W.cols() &&
         b.size() == o.b.size() && w0 == o.w0 && b0 == o.b0 && W == o.W && b == o.b;
}

Hyperparams Hyperparams::uniform(int K, double lambda0, double lambdak, double mu) {
  Hyperparams hp;
  hp.lambda0 = lambda0;
  hp.lambdak = Eigen::VectorXd::Constant(K, lambdak);
  hp.mu = mu;
  return hp;
}

void Hyperparams::validate(int K) const {
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw UsageError("lambda0 must be a finite value >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw UsageError("mu must be a finite value >= 0");
  if (lambdak.size() != K)
    throw UsageError("lambdak has " + std::to_string(lambdak.size()) + " entries for K=" + std::to_string(K));
  for (Eigen::Index k = 0; k < lambdak.size(); ++k)
    if (!(lambdak(k) >= 0.0) || !std::isfinite(lambdak(k))) throw UsageError("lambdak entries must be >= 0");
}

std::uint64_t matrix_fingerprint(const Eigen::MatrixXd& X) {
  const std::int64_t dims[2] = {X.rows(), X.cols()};
  std::uint64_t h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(dims), sizeof dims));
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(X.data()),
                         static_cast<std::size_t>(X.size()) * sizeof(double)),
               h);
}

BoundData::BoundData(Eigen::MatrixXd X, std::vector<int> subclass, int K) : K_(K) {
  if (K_ < 1) throw DataError("bound data needs K >= 1");
  if (X.rows() == 0 || X.cols() == 0) throw DataError("bound data has an empty feature matrix");
  if (static_cast<Eigen::Index>(subclass.size()) != X.rows())
    throw DataError("bound data: " + std::to_string(subclass.size()) + " labels for " + std::to_string(X.rows()) +
                    " rows");
  if (!X.allFinite()) throw DataError("bound data: non-finite feature");
  std::vector<int> counts(static_cast<std::size_t>(K_) + 1, 0);
  for (int s : subclass) {
    if (s < 0 || s > K_) throw DataError("bound data: subclass label out of range");
    ++counts[static_cast<std::size_t>(s)];
  }
  for (int k = 1; k <= K_; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw DataError("bound data: subclass " + std::to_string(k) + " has no training rows");
  fingerprint_ = matrix_fingerprint(X);

  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (subclass[static_cast<std::size_t>(i)] > 0) row_order_.push_back(i);
  n0_ = static_cast<Eigen::Index>(row_order_.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (subclass[static_cast<std::size_t>(i)] == 0) row_order_.push_back(i);

  X_.resize(X.rows(), X.cols());
  y_all_.resize(X.rows());
  subclass_.resize(subclass.size());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const Eigen::Index i = row_order_[static_cast<std::size_t>(r)];
    X_.row(r) = X.row(i);
    subclass_[static_cast<std::size_t>(r)] = subclass[static_cast<std::size_t>(i)];
    y_all_(r) = r < n0_ ? 1.0 : -1.0;
  }
  y_k_.resize(static_cast<std::size_t>(K_));
  for (int k = 1; k <= K_; ++k) {
    auto& y = y_k_[static_cast<std::size_t>(k - 1)];
    y.resize(n0_);
    for (Eigen::Index r = 0; r < n0_; ++r) y(r) = subclass_[static_cast<std::size_t>(r)] == k ? 1.0 : -1.0;
  }
}

GramCache::GramCache(Eigen::MatrixXd g2, std::uint64_t fingerprint, FeatureCorrelation mode)
    : g2_(std::move(g2)), fingerprint_(fingerprint), mode_(mode) {}

Eigen::VectorXd GramCache::apply(const Eigen::VectorXd& v) const {
  if (mode_ == FeatureCorrelation::identity) return v;
  return g2_ * v;
}

GramCache gram_squared(const Eigen::MatrixXd& X) {
  if (!X.allFinite()) throw DataError("gram_squared: non-finite feature");
  ++g_gram_computations;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return GramCache(G.cwiseProduct(G), matrix_fingerprint(X), FeatureCorrelation::gram_squared);
}

GramCache gram_squared(const BoundData& data) {
  ++g_gram_computations;
  const RowMatrix& X = data.X();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return GramCache(G.cwiseProduct(G), data.fingerprint(), FeatureCorrelation::gram_squared);
}

GramCache identity_gram(const BoundData& data) {
  return GramCache(Eigen::MatrixXd::Identity(data.d(), data.d()), data.fingerprint(), FeatureCorrelation::identity);
}

GramCache make_gram(const BoundData& data, FeatureCorrelation mode) {
  return mode == FeatureCorrelation::identity ? identity_gram(data) : gram_squared(data);
}

std::uint64_t gram_computation_count() { return g_gram_computations.load(); }

double hinge(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw UsageError("hinge: scores and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += std::max(0.0, 1.0 - labels[i] * scores[i]);
  return total;
}

double hinge(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  return hinge(std::span(scores.data(), static_cast<std::size_t>(scores.size())),
               std::span(labels.data(), static_cast<std::size_t>(labels.size())));
}

namespace detail {

void check_compatible(const ModelParams& params, const BoundData& data, const GramCache& gram) {
  if (params.dim() != data.d() || params.num_subclasses() != data.K() || params.W.cols() != data.d() ||
      params.b.size() != data.K())
    throw UsageError("parameters are " + std::to_string(params.dim()) + "-dimensional with K=" +
                     std::to_string(params.num_subclasses()) + " but data has d=" + std::to_string(data.d()) +
                     ", K=" + std::to_string(data.K()));
  if (gram.dim() != data.d() || gram.fingerprint() != data.fingerprint())
    throw DataError("stale Gram cache: fingerprint does not match the bound feature matrix");
}

HingeGrad hinge_subgradient(const RowRef& A, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b) {
  const Eigen::VectorXd scores = (A * w).array() + b;
  Eigen::VectorXd coef(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) coef(i) = (1.0 - y(i) * scores(i) > 0.0) ? -y(i) : 0.0;
  return {A.transpose() * coef, coef.sum()};
}

HingeGrad hinge_subgradient(const RowRef& A, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                            std::span<const Eigen::Index> rows, double scale) {
  HingeGrad g{Eigen::VectorXd::Zero(A.cols()), 0.0};
  for (Eigen::Index i : rows) {
    const double score = A.row(i).dot(w) + b;
    if (1.0 - y(i) * score > 0.0) {
      g.w.noalias() -= y(i) * A.row(i).transpose();
      g.b -= y(i);
    }
  }
  g.w *= scale;
  g.b *= scale;
  return g;
}

}  // namespace detail

namespace {

Eigen::VectorXd squared_subclass_sum(const ModelParams& p) {
  return p.W.cwiseAbs2().colwise().sum().transpose();
}

}  // namespace

double penalty(const ModelParams& params, const GramCache& gram, double mu) {
  if (mu == 0.0) return 0.0;
  const Eigen::VectorXd a = params.w0.cwiseAbs2();
  const Eigen::VectorXd S = squared_subclass_sum(params);
  const Eigen::VectorXd Ga = gram.apply(a);
  double self = 0.5 * a.dot(Ga);
  for (Eigen::Index k = 0; k < params.W.rows(); ++k) {
    const Eigen::VectorXd Bk = params.W.row(k).transpose().cwiseAbs2();
    self += 0.5 * Bk.dot(gram.apply(Bk));
  }
  const double cross = S.dot(Ga);
  return 0.5 * mu * (self + cross);
}

double total_loss(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                  const GramCache& gram) {
  detail::check_compatible(params, data, gram);
  const Eigen::VectorXd s0 = (data.X() * params.w0).array() + params.b0;
  double loss = hinge(s0, data.y_all()) + 0.5 * hp.lambda0 * params.w0.squaredNorm();
  // All specialized scores in one product: one pass over R instead of K.
  Eigen::MatrixXd S = data.R() * params.W.transpose();
  S.rowwise() += params.b.transpose();
  for (int k = 1; k <= data.K(); ++k)
    loss += hinge(Eigen::VectorXd(S.col(k - 1)), data.y_k(k)) +
            0.5 * hp.lambdak(k - 1) * params.W.row(k - 1).squaredNorm();
  return loss + penalty(params, gram, hp.mu);
}

Eigen::VectorXd grad_w0(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                        const GramCache& gram) {
  detail::check_compatible(params, data, gram);
  const auto hg = detail::hinge_subgradient(data.X(), data.y_all(), params.w0, params.b0);
  const Eigen::VectorXd a = params.w0.cwiseAbs2();
  const Eigen::VectorXd corr = gram.apply(squared_subclass_sum(params) + a);
  const Eigen::VectorXd factor = (hp.lambda0 + hp.mu * corr.array()).matrix();
  return hg.w + params.w0.cwiseProduct(factor);
}

Eigen::VectorXd grad_wk(int k, const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                        const GramCache& gram) {
  detail::check_compatible(params, data, gram);
  if (k < 1 || k > data.K()) throw UsageError("grad_wk: subclass " + std::to_string(k) + " out of range");
  const Eigen::VectorXd wk = params.W.row(k - 1).transpose();
  const auto hg = detail::hinge_subgradient(data.R(), data.y_k(k), wk, params.b(k - 1));
  const Eigen::VectorXd corr = gram.apply(wk.cwiseAbs2() + params.w0.cwiseAbs2());
  const Eigen::VectorXd factor = (hp.lambdak(k - 1) + hp.mu * corr.array()).matrix();
  return hg.w + wk.cwiseProduct(factor);
}

double grad_bias(int model, const ModelParams& params, const BoundData& data) {
  if (model < 0 || model > data.K()) throw UsageError("grad_bias: model " + std::to_string(model) + " out of range");
  if (model == 0) return detail::hinge_subgradient(data.X(), data.y_all(), params.w0, params.b0).b;
  const Eigen::VectorXd wk = params.W.row(model - 1).transpose();
  return detail::hinge_subgradient(data.R(), data.y_k(model), wk, params.b(model - 1)).b;
}

ModelParams full_gradient(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                          const GramCache& gram) {
  return detail::joint_gradient(params, data, hp, gram, nullptr);
}

namespace detail {

ModelParams joint_gradient(const ModelParams& params, const BoundData& data, const Hyperparams& hp,
                           const GramCache& gram, const RowSample* sample) {
  check_compatible(params, data, gram);
  const int K = data.K();
  ModelParams g = ModelParams::zeros(data.d(), K);
  const Eigen::VectorXd a = params.w0.cwiseAbs2();
  const Eigen::VectorXd Ga = gram.apply(a);
  Eigen::VectorXd GS = Eigen::VectorXd::Zero(data.d());

  // Full-batch hinge terms of all specialized classifiers share two passes over R.
  Eigen::MatrixXd hinge_w;
  Eigen::VectorXd hinge_b;
  if (!sample && K > 0) {
    Eigen::MatrixXd S = data.R() * params.W.transpose();
    S.rowwise() += params.b.transpose();
    Eigen::MatrixXd C(S.rows(), K);
    for (int k = 1; k <= K; ++k) {
      const Eigen::VectorXd& y = data.y_k(k);
      for (Eigen::Index i = 0; i < S.rows(); ++i) C(i, k - 1) = (1.0 - y(i) * S(i, k - 1) > 0.0) ? -y(i) : 0.0;
    }
    hinge_w = C.transpose() * data.R();
    hinge_b = C.colwise().sum().transpose();
  }

  for (int k = 1; k <= K; ++k) {
    const Eigen::VectorXd wk = params.W.row(k - 1).transpose();
    const Eigen::VectorXd GBk = gram.apply(wk.cwiseAbs2());
    GS += GBk;
    HingeGrad hg;
    if (sample)
      hg = hinge_subgradient(data.R(), data.y_k(k), wk, params.b(k - 1), sample->rare, sample->rare_scale);
    else
      hg = {hinge_w.row(k - 1).transpose(), hinge_b(k - 1)};
    const Eigen::VectorXd factor = (hp.lambdak(k - 1) + hp.mu * (GBk + Ga).array()).matrix();
    g.W.row(k - 1) = (hg.w + wk.cwiseProduct(factor)).transpose();
    g.b(k - 1) = hg.b;
  }
  const auto hg = sample ? hinge_subgradient(data.X(), data.y_all(), params.w0, params.b0, sample->all,
                                             sample->all_scale)
                         : hinge_subgradient(data.X(), data.y_all(), params.w0, params.b0);
  const Eigen::VectorXd factor = (hp.lambda0 + hp.mu * (GS + Ga).array()).matrix();
  g.w0 = hg.w + params.w0.cwiseProduct(factor);
  g.b0 = hg.b;
  return g;
}

}  // namespace detail

Eigen::MatrixXd penalty_hessian(const ModelParams& params, const GramCache& gram, double mu) {
  const int d = params.dim();
  const int K = params.num_subclasses();
  const int D = d * (K + 1);
  if (D > kMaxHessianDim)
    throw UsageError("penalty_hessian: d(K+1)=" + std::to_string(D) + " exceeds " + std::to_string(kMaxHessianDim));
  if (gram.dim() != d) throw UsageError("penalty_hessian: Gram cache dimension mismatch");

  const Eigen::MatrixXd G = gram.mode() == FeatureCorrelation::identity ? Eigen::MatrixXd::Identity(d, d) : gram.g2();
  auto block = [&](int i) -> Eigen::VectorXd {
    return i == 0 ? Eigen::VectorXd(params.w0) : Eigen::VectorXd(params.W.row(i - 1).transpose());
  };
  const Eigen::VectorXd a = params.w0.cwiseAbs2();
  const Eigen::VectorXd S = squared_subclass_sum(params);

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  for (int i = 0; i <= K; ++i) {
    const Eigen::VectorXd wi = block(i);
    const Eigen::VectorXd diag = mu * (G * (i == 0 ? Eigen::VectorXd(a + S) : Eigen::VectorXd(a + wi.cwiseAbs2())));
    H.block(i * d, i * d, d, d) = 2.0 * mu * (wi * wi.transpose()).cwiseProduct(G);
    H.block(i * d, i * d, d, d).diagonal() += diag;
    if (i > 0) {
      const Eigen::MatrixXd cross = 2.0 * mu * (params.w0 * wi.transpose()).cwiseProduct(G);
      H.block(0, i * d, d, d) = cross;
      H.block(i * d, 0, d, d) = cross.transpose();
    }
  }
  return H;
}

}  // namespace rarecog
