#include "rarecog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "rarecog/errors.hpp"

namespace rarecog {

void TrainConfig::validate() const {
  if (max_iters < 1) throw UsageError("max_iters must be >= 1");
  if (step_size && !(*step_size > 0.0 && std::isfinite(*step_size))) throw UsageError("step size must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must lie in [0, 1)");
  if (!(tol > 0.0)) throw UsageError("tol must be > 0");
  if (log_every < 0) throw UsageError("log_every must be >= 0");
}

double default_step_size(const Hyperparams& hp, const GramCache& gram) {
  const double curvature = hp.lambda0 + hp.mu * gram.g2().diagonal().maxCoeff();
  return curvature > 0.0 ? 1.0 / curvature : 1.0;
}

namespace {

struct Objective {
  std::function<double(const Eigen::VectorXd&)> loss;
  /// Subgradient at theta for iteration `iter` (1-based).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)> grad;
};

struct RunResult {
  Eigen::VectorXd best;
  double best_loss = 0.0;
  std::vector<double> trace;
  std::vector<Eigen::VectorXd> iterates;
  bool converged = false;
  int iters = 0;
};

RunResult nesterov(Eigen::VectorXd theta, const Objective& obj, const TrainConfig& cfg, double eta,
                   const char* label) {
  RunResult out;
  const double initial = obj.loss(theta);
  if (!std::isfinite(initial)) throw NumericalAbort(std::string(label) + ": initial loss is not finite");
  const double limit = kDivergenceFactor * std::max(initial, 1.0);
  out.best = theta;
  out.best_loss = initial;
  out.trace.reserve(static_cast<std::size_t>(cfg.max_iters));
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  std::ostream& log = cfg.log ? *cfg.log : std::cerr;

  for (int t = 1; t <= cfg.max_iters; ++t) {
    const double step = cfg.step_decay == StepDecay::inv_sqrt ? eta / std::sqrt(static_cast<double>(t)) : eta;
    const Eigen::VectorXd lookahead = theta + cfg.momentum * velocity;
    const Eigen::VectorXd g = obj.grad(lookahead, t);
    velocity = cfg.momentum * velocity - step * g;
    theta += velocity;
    const double loss = obj.loss(theta);
    if (!std::isfinite(loss) || loss > limit) {
      std::ostringstream msg;
      msg << label << ": diverged at iter " << t << " (loss " << loss << ", initial " << initial
          << ", step " << step << "); lower the step size";
      throw NumericalAbort(msg.str());
    }
    out.trace.push_back(loss);
    if (cfg.record_iterates) out.iterates.push_back(theta);
    if (loss < out.best_loss) {
      out.best_loss = loss;
      out.best = theta;
    }
    if (cfg.log_every > 0 && t % cfg.log_every == 0)
      log << "iter=" << t << " loss=" << loss << " grad_norm=" << g.norm() << '\n';
    out.iters = t;
    if (t > kConvergenceWindow) {
      const double past = out.trace[static_cast<std::size_t>(t - 1 - kConvergenceWindow)];
      if (std::abs(past - loss) <= cfg.tol * std::abs(past)) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

// Draws `m` distinct indices from [0, population) and returns them sorted.
std::vector<Eigen::Index> sample_rows(std::mt19937_64& rng, Eigen::Index population, std::size_t m) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(population));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(m);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TrainedModel fit(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg) {
  cfg.validate();
  hp.validate(data.K());
  const GramCache gram = make_gram(data, cfg.correlation);
  return fit(data, hp, cfg, gram);
}

TrainedModel fit(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg, const GramCache& gram) {
  cfg.validate();
  hp.validate(data.K());
  const int d = data.d();
  const int K = data.K();
  const double eta = cfg.step_size.value_or(default_step_size(hp, gram));
  ModelParams zero = ModelParams::zeros(d, K);
  detail::check_compatible(zero, data, gram);

  const bool stochastic = cfg.batch > 0 && cfg.batch < static_cast<std::size_t>(data.n());
  std::mt19937_64 rng(cfg.seed);
  const std::size_t m_all = cfg.batch;
  const std::size_t m_rare = std::min<std::size_t>(cfg.batch, static_cast<std::size_t>(data.n0()));

  Objective obj;
  obj.loss = [&](const Eigen::VectorXd& theta) {
    return total_loss(ModelParams::unflatten(theta, d, K), data, hp, gram);
  };
  obj.grad = [&](const Eigen::VectorXd& theta, int) -> Eigen::VectorXd {
    const ModelParams p = ModelParams::unflatten(theta, d, K);
    if (!stochastic) return detail::joint_gradient(p, data, hp, gram, nullptr).flatten();
    const auto rows = sample_rows(rng, data.n(), m_all);
    const auto rare = sample_rows(rng, data.n0(), m_rare);
    const detail::RowSample sample{rows, static_cast<double>(data.n()) / static_cast<double>(m_all), rare,
                                   static_cast<double>(data.n0()) / static_cast<double>(m_rare)};
    return detail::joint_gradient(p, data, hp, gram, &sample).flatten();
  };

  RunResult run = nesterov(zero.flatten(), obj, cfg, eta, "fit");
  TrainedModel model;
  model.params = ModelParams::unflatten(run.best, d, K);
  model.hp = hp;
  model.loss_trace = std::move(run.trace);
  model.best_loss = run.best_loss;
  model.converged = run.converged;
  model.iters_run = run.iters;
  model.step_size = eta;
  model.iterates = std::move(run.iterates);
  return model;
}

TrainedModel fit_minibatch(const BoundData& data, const Hyperparams& hp, TrainConfig cfg, std::size_t batch) {
  if (batch < 1 || batch > static_cast<std::size_t>(data.n()))
    throw UsageError("mini-batch size must lie in [1, n]");
  cfg.batch = batch;
  return fit(data, hp, cfg);
}

IndependentFit fit_independent(const BoundData& data, const Hyperparams& hp, const TrainConfig& cfg) {
  cfg.validate();
  hp.validate(data.K());
  const int d = data.d();
  const int K = data.K();
  IndependentFit out;
  out.params = ModelParams::zeros(d, K);

  for (int model = 0; model <= K; ++model) {
    const RowRef A = model == 0 ? RowRef(data.X()) : data.R();
    const Eigen::VectorXd& y = model == 0 ? data.y_all() : data.y_k(model);
    const double lambda = model == 0 ? hp.lambda0 : hp.lambdak(model - 1);
    const double eta = cfg.step_size.value_or(lambda > 0.0 ? 1.0 / lambda : 1.0);
    const Eigen::VectorXd ridge = Eigen::VectorXd::Constant(d, lambda);

    Objective obj;
    obj.loss = [&](const Eigen::VectorXd& theta) {
      const Eigen::VectorXd w = theta.head(d);
      const Eigen::VectorXd s = (A * w).array() + theta(d);
      return hinge(s, y) + 0.5 * lambda * w.squaredNorm();
    };
    obj.grad = [&](const Eigen::VectorXd& theta, int) -> Eigen::VectorXd {
      const Eigen::VectorXd w = theta.head(d);
      const auto hg = detail::hinge_subgradient(A, y, w, theta(d));
      Eigen::VectorXd g(d + 1);
      g.head(d) = hg.w + w.cwiseProduct(ridge);
      g(d) = hg.b;
      return g;
    };
    RunResult run = nesterov(Eigen::VectorXd::Zero(d + 1), obj, cfg, eta, model == 0 ? "fit[general]" : "fit[sc]");
    if (model == 0) {
      out.params.w0 = run.best.head(d);
      out.params.b0 = run.best(d);
    } else {
      out.params.W.row(model - 1) = run.best.head(d).transpose();
      out.params.b(model - 1) = run.best(d);
    }
    out.block_iterates.push_back(std::move(run.iterates));
    out.converged.push_back(run.converged);
  }
  return out;
}

}  // namespace rarecog
