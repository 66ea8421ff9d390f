#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "marloc/convolution.hpp"

using Catch::Approx;
using marloc::ConvolvedDistribution;
using marloc::WeightedSample;

namespace {

std::vector<double> brute_sums(const std::vector<double>& preds, const std::vector<double>& resids) {
  std::vector<double> out;
  for (double p : preds) {
    for (double r : resids) out.push_back(p + r);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> draws(std::mt19937_64& rng, int count, double centre, double sd) {
  std::normal_distribution<double> normal(centre, sd);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& v : out) v = normal(rng);
  return out;
}

}  // namespace

TEST_CASE("small example enumerates six sums", "[convolution]") {
  const ConvolvedDistribution dist({0.0, 1.0, 2.0}, {-1.0, 1.0});
  CHECK(dist.size() == 6);
  CHECK(dist.materialize() == std::vector<double>{-1.0, 0.0, 1.0, 1.0, 2.0, 3.0});
  CHECK(dist.cdf(1.0) == Approx(4.0 / 6.0));
  CHECK(dist.cdf(-5.0) == 0.0);
  CHECK(dist.cdf(5.0) == 1.0);
  CHECK(dist.quantile(0.5) == 1.0);
  CHECK(dist.quantile(1e-12) == -1.0);
  CHECK(dist.mean() == 1.0);
  CHECK(dist.expectation([](double) { return 1.0; }) == 1.0);
  CHECK(dist.expectation([](double y) { return y; }) == dist.mean());
  CHECK(dist.expectation([](double y) { return y <= 1.0 ? 1.0 : 0.0; }) == Approx(dist.cdf(1.0)).epsilon(1e-15));
}

TEST_CASE("single pair is a point mass", "[convolution]") {
  const ConvolvedDistribution dist({4.0}, {0.5});
  CHECK(dist.quantile(0.3) == 4.5);
  CHECK(dist.mean() == 4.5);
  CHECK(dist.cdf(4.5) == 1.0);
  CHECK(dist.cdf(4.4999) == 0.0);
}

TEST_CASE("zero residuals give the mean of predictions", "[convolution]") {
  const ConvolvedDistribution dist({1.0, 2.0, 6.0}, {0.0, 0.0});
  CHECK(dist.mean() == 3.0);
}

TEST_CASE("cdf matches brute force exactly at 1000 probes (n = 40, m = 25)", "[convolution]") {
  std::mt19937_64 rng(1);
  const auto preds = draws(rng, 40, 7.5, 2.0), resids = draws(rng, 25, 0.0, 1.0);
  const ConvolvedDistribution dist(preds, resids);
  const auto sums = brute_sums(preds, resids);
  std::uniform_real_distribution<double> probe(sums.front() - 1.0, sums.back() + 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double t = k % 2 == 0 ? probe(rng) : sums[static_cast<std::size_t>(k) % sums.size()];
    const auto count = std::upper_bound(sums.begin(), sums.end(), t) - sums.begin();
    CHECK(dist.count_at_most(t) == static_cast<std::uint64_t>(count));
  }
}

TEST_CASE("quantiles match sort-and-index (n = 30, m = 20)", "[convolution]") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto preds = draws(rng, 30, 0.0, 3.0), resids = draws(rng, 20, 0.0, 1.0);
    const ConvolvedDistribution dist(preds, resids);
    const auto sums = brute_sums(preds, resids);
    for (int j = 1; j <= 9; ++j) {
      const double p = j / 10.0;
      const auto k = static_cast<std::size_t>(std::ceil(p * 600.0 - 1e-9));
      CHECK(dist.quantile(p) == sums[k - 1]);
    }
  }
}

TEST_CASE("quantile handles ties and negative supports", "[convolution]") {
  const ConvolvedDistribution dist({-3.0, -3.0, 0.0}, {-1.0, 0.0, 0.0});
  const auto sums = brute_sums({-3.0, -3.0, 0.0}, {-1.0, 0.0, 0.0});
  for (std::uint64_t k = 1; k <= 9; ++k) CHECK(dist.order_statistic(k) == sums[k - 1]);
}

TEST_CASE("mean and expectation match brute force to 1e-12", "[convolution]") {
  std::mt19937_64 rng(3);
  const auto preds = draws(rng, 50, 7.5, 2.0), resids = draws(rng, 35, 0.0, 1.0);
  const ConvolvedDistribution dist(preds, resids);
  const auto sums = brute_sums(preds, resids);
  long double total = 0.0L, total_h = 0.0L;
  for (double s : sums) {
    total += s;
    total_h += std::tanh(s - 7.0);
  }
  CHECK(std::fabs(dist.mean() - static_cast<double>(total / sums.size())) < 1e-12);
  CHECK(std::fabs(dist.expectation([](double y) { return std::tanh(y - 7.0); }) -
                  static_cast<double>(total_h / sums.size())) < 1e-12);
}

TEST_CASE("build rejects empty inputs", "[convolution]") {
  CHECK_THROWS_AS(ConvolvedDistribution({1.0}, {}), marloc::Error);
  CHECK_THROWS_AS(ConvolvedDistribution({}, {1.0}), marloc::Error);
}

TEST_CASE("support can be written to CSV", "[convolution]") {
  const ConvolvedDistribution dist({0.0, 1.0}, {0.5});
  const std::string path = "convolution_dump_test.csv";
  dist.write_csv(path);
  std::ifstream in(path);
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  CHECK(!header.empty());
  CHECK(a.find("0.5") != std::string::npos);
  CHECK(b.find("1.5") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("weighted sample quantiles and means", "[convolution]") {
  const WeightedSample s({3.0, 1.0, 2.0}, {0.25, 0.25, 0.5});
  CHECK(s.mean() == Approx(2.0));
  CHECK(s.quantile(0.25) == 1.0);
  CHECK(s.quantile(0.5) == 2.0);
  CHECK(s.quantile(0.76) == 3.0);
  CHECK(s.cdf(2.0) == Approx(0.75));
  const WeightedSample u({5.0, 1.0, 3.0});
  CHECK(u.quantile(0.5) == 3.0);
}
