#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "rarecog/errors.hpp"
#include "rarecog/rejection.hpp"

using namespace rarecog;

TEST_CASE("percentile threshold interpolates order statistics") {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  const auto r = threshold_from_scores(s, RejectionMethod::percentile, 0.05);
  CHECK(r.threshold == doctest::Approx(5.95).epsilon(1e-12));
  CHECK(empirical_quantile(s, 0.37) == doctest::Approx(oracle::sorted_quantile(s, 0.37)).epsilon(1e-14));
}

TEST_CASE("constant scores make the tail fit fall back") {
  const std::vector<double> s(20, 2.5);
  const auto r = threshold_from_scores(s, RejectionMethod::evt_pot, 0.01);
  CHECK(r.fell_back);
  CHECK(r.threshold == 2.5);
}

TEST_CASE("sample size requirements") {
  CHECK_THROWS_AS(threshold_from_scores(std::vector<double>(7, 1.0), RejectionMethod::evt_pot, 0.01), UsageError);
  CHECK_THROWS_AS(threshold_from_scores(std::vector<double>{1.0}, RejectionMethod::percentile, 0.01), UsageError);
  CHECK_NOTHROW(threshold_from_scores(std::vector<double>{1.0, 2.0}, RejectionMethod::percentile, 0.01));
}

TEST_CASE("exponential lower tail: shape near zero and calibrated rejection rate") {
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> s(5000);
  for (auto& v : s) v = 10.0 - e(rng);  // lower tail is exponential
  const auto r = threshold_from_scores(s, RejectionMethod::evt_pot, 0.01);
  REQUIRE(r.tail.has_value());
  CHECK(std::abs(r.tail->shape) < 0.15);
  int below = 0;
  const int fresh = 100000;
  for (int i = 0; i < fresh; ++i) below += (10.0 - e(rng)) < r.threshold;
  const double rate = static_cast<double>(below) / fresh;
  MESSAGE("fresh-sample rejection rate " << rate);
  CHECK(rate == doctest::Approx(0.01).epsilon(0.25));
}

TEST_CASE("accepts is inclusive at the threshold") {
  RejectionThresholds t;
  t.thresholds = {1.5, -0.25};
  CHECK(accepts(t, 1, 1.5));
  CHECK_FALSE(accepts(t, 1, std::nextafter(1.5, 0.0)));
  CHECK(accepts(t, 2, -0.25));
  CHECK_THROWS_AS(accepts(t, 3, 0.0), UsageError);
}

TEST_CASE("held-out accept rate is about 1 - q") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(3.0, 1.0);
  std::vector<double> cal(4000);
  for (auto& v : cal) v = g(rng);
  for (auto method : {RejectionMethod::percentile, RejectionMethod::evt_pot}) {
    const double q = 0.05;
    RejectionThresholds t;
    t.thresholds = {threshold_from_scores(cal, method, q).threshold};
    const int m = 20000;
    int acc = 0;
    for (int i = 0; i < m; ++i) acc += accepts(t, 1, g(rng));
    const double sigma = std::sqrt(q * (1 - q) / m);
    // Sampling error of the calibration set adds to the binomial spread.
    const double cal_sigma = std::sqrt(q * (1 - q) / static_cast<double>(cal.size()));
    CHECK(std::abs(static_cast<double>(acc) / m - (1 - q)) <= 3 * (sigma + cal_sigma));
  }
}

TEST_CASE("thresholds are monotone in q") {
  std::mt19937_64 rng(23);
  std::gamma_distribution<double> g(2.0, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(200);
    for (auto& v : s) v = g(rng);
    for (auto method : {RejectionMethod::percentile, RejectionMethod::evt_pot}) {
      double prev = -1e300;
      for (double q : {0.001, 0.005, 0.01, 0.05, 0.1}) {
        const double t = threshold_from_scores(s, method, q).threshold;
        CHECK(t >= prev);
        prev = t;
      }
    }
  }
}

TEST_CASE("percentile rule rejects at most ceil(q m) + 1 calibration points") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(10 + trial * 7);
    for (auto& v : s) v = u(rng);
    const double q = 0.03;
    const double t = threshold_from_scores(s, RejectionMethod::percentile, q).threshold;
    const auto rejected = std::count_if(s.begin(), s.end(), [&](double v) { return v < t; });
    CHECK(rejected <= static_cast<long>(std::ceil(q * static_cast<double>(s.size()))) + 1);
  }
}

TEST_CASE("tail fit and percentile agree on large uniform samples") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(20000);
  for (auto& v : s) v = u(rng);
  const double q = 0.01;
  const double evt = threshold_from_scores(s, RejectionMethod::evt_pot, q).threshold;
  const double pct = threshold_from_scores(s, RejectionMethod::percentile, q).threshold;
  const double gap = empirical_quantile(s, 2 * q) - empirical_quantile(s, q / 2);
  CHECK(std::abs(evt - pct) <= gap);
}

TEST_CASE("thresholds serialize") {
  std::vector<double> s(50);
  std::iota(s.begin(), s.end(), 0.0);
  RejectionThresholds t;
  const auto r = threshold_from_scores(s, RejectionMethod::evt_pot, 0.02);
  t.thresholds = {r.threshold};
  t.tail_fits = {r.tail};
  t.fell_back = {r.fell_back};
  t.q = 0.02;
  const auto back = RejectionThresholds::from_json(t.to_json());
  CHECK(back.thresholds == t.thresholds);
  CHECK(back.q == 0.02);
  CHECK(back.tail_fits[0].has_value() == t.tail_fits[0].has_value());
  CHECK(parse_rejection_method("percentile") == RejectionMethod::percentile);
  CHECK_THROWS_AS(parse_rejection_method("spot"), UsageError);
}
