#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "marloc/error.hpp"
#include "marloc/m_scale.hpp"

using Catch::Approx;
using marloc::RhoKernel;

TEST_CASE("constant residuals invert the bisquare in closed form", "[m_scale]") {
  const std::vector<double> r(10, 1.0);
  const auto rho = RhoKernel::tukey(1.57);
  const double x = 1.57 * std::sqrt(1.0 - std::cbrt(0.5));  // rho(x) = 0.5
  const auto sol = marloc::solve_m_scale(r, rho, 0.5);
  CHECK_FALSE(sol.exact_fit);
  CHECK(sol.scale == Approx(1.0 / x).epsilon(1e-10));
  CHECK(sol.scale == Approx(1.4023).margin(1e-4));
}

TEST_CASE("enough zero residuals give an exact fit", "[m_scale]") {
  const std::vector<double> r{0.0, 0.0, 0.0, 1.0};
  const auto sol = marloc::solve_m_scale(r, RhoKernel::tukey(1.57), 0.5);
  CHECK(sol.exact_fit);
  CHECK(sol.scale == 0.0);
}

TEST_CASE("standard normal residuals with the consistency constant give scale near 1", "[m_scale]") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::vector<double> r(2000);
  for (auto& v : r) v = normal(rng);
  const auto sol = marloc::solve_m_scale(r, RhoKernel::tukey(1.5476), 0.5);
  CHECK(std::fabs(sol.scale - 1.0) < 0.08);
}

TEST_CASE("scale solves its equation and is equivariant", "[m_scale]") {
  std::mt19937_64 rng(12);
  std::cauchy_distribution<double> cauchy;
  const auto rho = RhoKernel::tukey(1.57);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> r(50 + rep);
    for (auto& v : r) v = cauchy(rng);
    const auto sol = marloc::solve_m_scale(r, rho, 0.5);
    CHECK(std::fabs(marloc::mean_rho(r, rho, sol.scale) - 0.5) <= 1e-10);
    for (double c : {1e-3, 0.7, 42.0}) {
      std::vector<double> scaled(r);
      for (auto& v : scaled) v *= c;
      CHECK(marloc::solve_m_scale(scaled, rho, 0.5).scale == Approx(c * sol.scale).epsilon(1e-9));
    }
  }
}

TEST_CASE("adding a residual beyond k times the scale never decreases it", "[m_scale]") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  const auto rho = RhoKernel::tukey(1.57);
  std::vector<double> r(30);
  for (auto& v : r) v = normal(rng);
  double s = marloc::solve_m_scale(r, rho, 0.5).scale;
  for (int k = 0; k < 10; ++k) {
    r.push_back(2.0 * rho.k * s);
    const double next = marloc::solve_m_scale(r, rho, 0.5).scale;
    CHECK(next >= s);
    s = next;
  }
}

TEST_CASE("other delta values are honoured", "[m_scale]") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal;
  std::vector<double> r(300);
  for (auto& v : r) v = normal(rng);
  const auto rho = RhoKernel::tukey(1.0);
  for (double delta : {0.2, 0.3, 0.7}) {
    const auto sol = marloc::solve_m_scale(r, rho, delta);
    CHECK(std::fabs(marloc::mean_rho(r, rho, sol.scale) - delta) <= 1e-10);
  }
}

TEST_CASE("non-finite residuals are rejected", "[m_scale]") {
  const std::vector<double> r{1.0, std::numeric_limits<double>::quiet_NaN(), 2.0};
  try {
    (void)marloc::solve_m_scale(r, RhoKernel::tukey(1.57), 0.5);
    FAIL("expected an error");
  } catch (const marloc::Error& e) {
    CHECK(e.code() == marloc::ErrorCode::NonFiniteResidual);
  }
}
