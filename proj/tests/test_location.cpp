#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "marloc/location.hpp"

using Catch::Approx;
using namespace marloc;

namespace {

WeightedSample uniform_sample(std::vector<double> values) { return WeightedSample(std::move(values)); }

}  // namespace

TEST_CASE("presets by name", "[location]") {
  CHECK(LocationSpec::from_name("mean").kind == LocationKind::Mean);
  CHECK(LocationSpec::from_name("median").kind == LocationKind::Median);
  const auto mm90 = LocationSpec::from_name("mm90");
  CHECK(mm90.kind == LocationKind::MMLocation);
  CHECK(mm90.rho0.k == 1.57);
  CHECK(mm90.rho1.k == 3.88);
  CHECK(mm90.delta == 0.5);
  CHECK(LocationSpec::from_name("mm95").rho1.k == 4.68);
  CHECK_THROWS_AS(LocationSpec::from_name("trimmed"), Error);
}

TEST_CASE("median of {1, 2, 3} is 2 and lower median is used for even counts", "[location]") {
  CHECK(evaluate(LocationSpec::median(), uniform_sample({1.0, 2.0, 3.0})).value == 2.0);
  CHECK(evaluate(LocationSpec::median(), uniform_sample({4.0, 1.0, 2.0, 3.0})).value == 2.0);
  const ConvolvedDistribution dist({0.0, 1.0, 2.0}, {-1.0, 1.0});
  CHECK(evaluate(LocationSpec::median(), dist).value == 1.0);
}

TEST_CASE("MM location of a symmetric sample is its centre", "[location]") {
  const auto spec = LocationSpec::mm(1.57, 3.88, 0.5);
  CHECK(std::fabs(evaluate(spec, uniform_sample({-1.0, 0.0, 1.0})).value) < 1e-9);
  CHECK(std::fabs(evaluate(spec, ConvolvedDistribution({-2.0, 0.0, 2.0}, {-0.5, 0.5})).value) < 1e-9);
}

TEST_CASE("MM location of normal draws is near 0", "[location]") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  std::vector<double> v(2000);
  for (auto& x : v) x = normal(rng);
  for (const char* name : {"mm90", "mm95"}) {
    CHECK(std::fabs(mm_location_on_sample(LocationSpec::from_name(name), uniform_sample(v)).value) < 0.08);
  }
}

TEST_CASE("MM location resists 40% gross outliers", "[location]") {
  std::mt19937_64 rng(22);
  std::normal_distribution<double> normal;
  std::vector<double> v(200);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i < 80 ? 1e6 : normal(rng);
  const auto r = mm_location_on_sample(LocationSpec::from_name("mm90"), uniform_sample(v));
  CHECK(r.value >= -3.0);
  CHECK(r.value <= 3.0);
}

TEST_CASE("point mass is a degenerate but defined case", "[location]") {
  const auto r = mm_location_on_sample(LocationSpec::from_name("mm90"), uniform_sample({5.0, 5.0, 5.0}));
  CHECK(r.value == 5.0);
  CHECK(r.degenerate_scale);
}

TEST_CASE("location-scale equivariance for all functionals", "[location]") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  std::vector<double> preds(60), resids(45);
  for (auto& x : preds) x = 7.5 + 2.0 * normal(rng);
  for (auto& x : resids) x = std::pow(normal(rng), 3);
  const ConvolvedDistribution dist(preds, resids);
  for (const char* name : {"mean", "median", "mm90", "mm95"}) {
    const auto spec = LocationSpec::from_name(name);
    const double base = evaluate(spec, dist).value;
    for (auto [a, b] : {std::pair{3.0, -2.0}, std::pair{0.1, 100.0}}) {
      auto p = preds;
      auto r = resids;
      for (auto& x : p) x = a * x + b;
      for (auto& x : r) x *= a;
      const double moved = evaluate(spec, ConvolvedDistribution(p, r)).value;
      CHECK(std::fabs(moved - (a * base + b)) <= 1e-8 * std::max(1.0, std::fabs(a * base + b)));
    }
  }
}

TEST_CASE("median minimises the mean absolute deviation over the support", "[location]") {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> normal;
  std::vector<double> preds(50), resids(40);
  for (auto& x : preds) x = normal(rng);
  for (auto& x : resids) x = normal(rng);
  const ConvolvedDistribution dist(preds, resids);
  const auto support = dist.materialize();
  auto mad = [&](double mu) { return dist.expectation([mu](double y) { return std::fabs(y - mu); }); };
  const double at_median = mad(evaluate(LocationSpec::median(), dist).value);
  double best = std::numeric_limits<double>::infinity();
  for (double s : support) best = std::min(best, mad(s));
  CHECK(at_median <= best + 1e-12);
}

TEST_CASE("MM objective never increases and the fixed point solves the estimating equation", "[location]") {
  std::mt19937_64 rng(25);
  std::student_t_distribution<double> t3(3.0);
  std::vector<double> preds(80), resids(64);
  for (auto& x : preds) x = 7.5 + t3(rng);
  for (auto& x : resids) x = t3(rng) + (x > 1.5 ? 6.0 : 0.0);
  const ConvolvedDistribution dist(preds, resids);
  const auto spec = LocationSpec::from_name("mm90");
  const auto r = evaluate(spec, dist);
  REQUIRE(r.objective_trace.size() >= 2);
  for (std::size_t k = 1; k < r.objective_trace.size(); ++k) {
    CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] * (1.0 + 1e-12));
  }
  const double score = dist.expectation([&](double y) { return spec.rho1.psi((y - r.value) / r.sigma); });
  CHECK(std::fabs(score) < 1e-9);
}

TEST_CASE("S-location minimises the profiled scale", "[location]") {
  std::mt19937_64 rng(26);
  std::normal_distribution<double> normal;
  std::vector<double> v(300);
  for (auto& x : v) x = normal(rng) + (x < 0 ? 0.0 : 0.3);
  const WeightedSample sample(v);
  const auto rho0 = RhoKernel::tukey(1.57);
  const auto s = s_location(sample, rho0, 0.5);
  for (double d : {-0.05, -0.01, 0.01, 0.05}) {
    CHECK(profiled_scale(sample, rho0, 0.5, s.mu + d).scale >= s.sigma * (1.0 - 1e-9));
  }
}
