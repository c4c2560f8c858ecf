#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "rarecog/corpus.hpp"
#include "rarecog/errors.hpp"
#include "rarecog/trainer.hpp"

using namespace rarecog;

namespace {

BoundData synthetic_data(int d, int k_total, int per, int majority, double sep, double noise, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.d = d;
  cfg.k_total = k_total;
  cfg.docs_per_subclass = per;
  cfg.majority_docs = majority;
  cfg.subclass_separation = sep;
  cfg.noise_scale = noise;
  cfg.seed = seed;
  const LabeledCorpus c = gen_synthetic(cfg);
  std::vector<int> sub;
  for (const auto& doc : c.docs) sub.push_back(doc.subclass);
  return BoundData(*c.features, sub, k_total);
}

double top_level_accuracy(const ModelParams& m, const BoundData& data) {
  const Eigen::VectorXd s = (data.X() * m.w0).array() + m.b0;
  int ok = 0;
  for (int i = 0; i < data.n(); ++i) ok += (s(i) > 0) == (data.y_all()(i) > 0);
  return static_cast<double>(ok) / data.n();
}

}  // namespace

TEST_CASE("separable two-subclass data is fitted exactly at mu = 0") {
  const BoundData data = synthetic_data(2, 2, 40, 80, 10.0, 0.1, 1);
  TrainConfig cfg;
  cfg.max_iters = 500;
  const TrainedModel m = fit(data, Hyperparams::uniform(2, 1.0, 1.0, 0.0), cfg);
  CHECK(top_level_accuracy(m.params, data) == 1.0);
  CHECK(m.iters_run <= 500);
  for (double v : m.loss_trace) CHECK(std::isfinite(v));
}

TEST_CASE("mu = 0 joint fit follows the independent fits iterate by iterate") {
  const BoundData data = synthetic_data(4, 3, 15, 30, 3.0, 1.0, 2);
  TrainConfig cfg;
  cfg.max_iters = 60;
  cfg.step_size = 0.05;
  cfg.tol = 1e-300;
  cfg.record_iterates = true;
  const Hyperparams hp = Hyperparams::uniform(3, 1.0, 0.5, 0.0);
  const TrainedModel joint = fit(data, hp, cfg);
  const IndependentFit solo = fit_independent(data, hp, cfg);
  const int d = data.d();
  for (std::size_t t = 0; t < joint.iterates.size(); ++t)
    for (int block = 0; block <= 3; ++block) {
      if (t >= solo.block_iterates[static_cast<std::size_t>(block)].size()) continue;
      const Eigen::VectorXd a = joint.iterates[t].segment(block * (d + 1), d + 1);
      const Eigen::VectorXd& b = solo.block_iterates[static_cast<std::size_t>(block)][t];
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("huge lambda0 shrinks the general classifier") {
  const BoundData data = synthetic_data(3, 2, 10, 20, 4.0, 1.0, 3);
  TrainConfig cfg;
  cfg.max_iters = 200;
  const TrainedModel m = fit(data, Hyperparams::uniform(2, 1e6, 1.0, 1.0), cfg);
  CHECK(m.params.w0.norm() < 1e-3);
}

TEST_CASE("full-size batch reproduces the full-batch trajectory") {
  const BoundData data = synthetic_data(3, 2, 12, 24, 4.0, 1.0, 4);
  TrainConfig cfg;
  cfg.max_iters = 50;
  cfg.record_iterates = true;
  const Hyperparams hp = Hyperparams::uniform(2, 1.0, 1.0, 0.1);
  const TrainedModel full = fit(data, hp, cfg);
  const TrainedModel same = fit_minibatch(data, hp, cfg, static_cast<std::size_t>(data.n()));
  CHECK(full.loss_trace == same.loss_trace);
  CHECK(full.params == same.params);
  CHECK_THROWS_AS(fit_minibatch(data, hp, cfg, 0), UsageError);
}

TEST_CASE("mini-batch of 32 lands near the full-batch loss and is deterministic") {
  const BoundData data = synthetic_data(4, 2, 100, 200, 6.0, 1.0, 5);
  TrainConfig cfg;
  cfg.max_iters = 500;
  cfg.step_size = 1e-4;
  cfg.seed = 17;
  const Hyperparams hp = Hyperparams::uniform(2, 1.0, 1.0, 1e-6);
  const TrainedModel full = fit(data, hp, cfg);
  const TrainedModel mini = fit_minibatch(data, hp, cfg, 32);
  const auto gram = gram_squared(data);
  const double l_full = total_loss(full.params, data, hp, gram);
  const double l_mini = total_loss(mini.params, data, hp, gram);
  MESSAGE("full-batch loss " << l_full << ", mini-batch loss " << l_mini);
  CHECK(l_mini <= 1.05 * l_full);
  CHECK(fit_minibatch(data, hp, cfg, 32).params == mini.params);
}

TEST_CASE("more iterations never raise the best loss") {
  const BoundData data = synthetic_data(4, 3, 10, 30, 3.0, 1.0, 6);
  TrainConfig cfg;
  cfg.tol = 1e-300;
  const Hyperparams hp = Hyperparams::uniform(3, 1.0, 1.0, 0.5);
  cfg.max_iters = 100;
  const double short_run = fit(data, hp, cfg).best_loss;
  cfg.max_iters = 200;
  CHECK(fit(data, hp, cfg).best_loss <= short_run);
}

TEST_CASE("one Gram computation per fit") {
  const BoundData data = synthetic_data(3, 2, 8, 16, 3.0, 1.0, 7);
  TrainConfig cfg;
  cfg.max_iters = 30;
  const auto before = gram_computation_count();
  fit(data, Hyperparams::uniform(2, 1.0, 1.0, 1.0), cfg);
  CHECK(gram_computation_count() - before == 1);
}

TEST_CASE("progress log lines") {
  const BoundData data = synthetic_data(3, 2, 8, 16, 3.0, 1.0, 8);
  std::ostringstream log;
  TrainConfig cfg;
  cfg.max_iters = 20;
  cfg.tol = 1e-300;
  cfg.log_every = 10;
  cfg.log = &log;
  fit(data, Hyperparams::uniform(2, 1.0, 1.0, 1.0), cfg);
  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.rfind("iter=" + std::to_string(10 * (count + 1)) + " loss=", 0) == 0);
    CHECK(line.find(" grad_norm=") != std::string::npos);
    ++count;
  }
  CHECK(count == 2);
}

TEST_CASE("divergence guard") {
  const BoundData data = synthetic_data(3, 2, 8, 16, 3.0, 1.0, 9);
  TrainConfig cfg;
  cfg.step_size = 1e6;
  cfg.step_decay = StepDecay::fixed;
  CHECK_THROWS_AS(fit(data, Hyperparams::uniform(2, 1.0, 1.0, 1.0), cfg), NumericalAbort);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}
