#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "marloc/rho.hpp"

using Catch::Approx;
using marloc::RhoKernel;

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// E h(Z) for Z ~ N(0, 1), by adaptive Gauss-Kronrod on [-12, 12].
template <class F>
double normal_expectation(F h) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate([&](double z) { return h(z) * normal_pdf(z); }, -12.0, 12.0, 12, 1e-13);
}

/// Gaussian efficiency of an M-estimator using psi(z / s): (E psi')^2 / (s^2 E psi^2).
double gaussian_efficiency(const RhoKernel& rho, double s) {
  const double a = normal_expectation([&](double z) { return rho.psi_prime(z / s); });
  const double b = normal_expectation([&](double z) { return rho.psi(z / s) * rho.psi(z / s); });
  return a * a / (b * s * s);
}

}  // namespace

TEST_CASE("rho values at reference points", "[rho]") {
  const auto k1 = RhoKernel::tukey(1.0);
  CHECK(k1.rho(0.0) == 0.0);
  CHECK(k1.rho(1.0) == 1.0);
  CHECK(k1.rho(0.5) == 0.578125);
  CHECK(k1.rho(-0.5) == 0.578125);
  CHECK(k1.rho(7.0) == 1.0);
}

TEST_CASE("psi and psi' at reference points", "[rho]") {
  const auto k1 = RhoKernel::tukey(1.0);
  CHECK(k1.psi(0.0) == 0.0);
  CHECK(k1.psi(1.0) == 0.0);
  CHECK(k1.psi(0.5) == 1.6875);
  CHECK(k1.psi(-0.5) == -1.6875);
  CHECK(k1.psi_prime(0.0) == 6.0);
  CHECK(k1.psi_prime(2.0) == 0.0);
  CHECK(marloc::psi_prime(k1, 0.0) == 6.0);
}

TEST_CASE("psi matches a central difference of rho at k = 1.57, t = 0.3", "[rho]") {
  const auto k = RhoKernel::tukey(1.57);
  const double h = 1e-5;
  CHECK(std::fabs((k.rho(0.3 + h) - k.rho(0.3 - h)) / (2 * h) - k.psi(0.3)) < 1e-6);
  CHECK(std::fabs((k.psi(0.3 + h) - k.psi(0.3 - h)) / (2 * h) - k.psi_prime(0.3)) < 1e-6);
}

TEST_CASE("rho is even, bounded and nondecreasing in |t|", "[rho]") {
  for (double kk : {0.5, 1.57, 3.44, 4.68}) {
    const auto k = RhoKernel::tukey(kk);
    double previous = 0.0;
    for (double t = 0.0; t <= 2.0 * kk; t += kk / 500.0) {
      const double v = k.rho(t);
      CHECK(v == k.rho(-t));
      CHECK(v >= previous);
      CHECK(v <= 1.0);
      CHECK(k.psi(-t) == -k.psi(t));
      previous = v;
    }
  }
}

TEST_CASE("IRWLS weight equals psi(t)/t and psi'(0) at the origin", "[rho]") {
  const auto k = RhoKernel::tukey(3.44);
  CHECK(k.weight(0.0) == Approx(k.psi_prime(0.0)).epsilon(1e-15));
  for (double t : {-3.0, -1.0, 0.2, 2.5, 3.43}) CHECK(k.weight(t) == Approx(k.psi(t) / t).epsilon(1e-13));
  CHECK(k.weight(3.44) == 0.0);
  CHECK(k.weight(10.0) == 0.0);
}

TEST_CASE("Gaussian consistency constant for a 50% scale is about 1.5476", "[rho][oracle]") {
  // Solve E rho_k(Z) = 0.5 for k by quadrature plus bracketing.
  auto f = [](double k) { return normal_expectation([&](double z) { return RhoKernel::tukey(k).rho(z); }) - 0.5; };
  boost::uintmax_t iterations = 100;
  const auto [lo, hi] =
      boost::math::tools::toms748_solve(f, 1.0, 2.0, boost::math::tools::eps_tolerance<double>(40), iterations);
  const double k = 0.5 * (lo + hi);
  CHECK(k == Approx(1.5476).margin(1e-4));
  // The design constant 1.57 is close to it.
  CHECK(std::fabs(marloc::tuning::kScaleBisquare - k) < 0.03);
}

TEST_CASE("Tuning constants give the advertised Gaussian efficiencies", "[rho][oracle]") {
  // Scale that solves E rho_{1.57}(Z / s) = 0.5 under N(0, 1).
  const auto rho0 = RhoKernel::tukey(marloc::tuning::kScaleBisquare);
  auto f = [&](double s) { return normal_expectation([&](double z) { return rho0.rho(z / s); }) - 0.5; };
  boost::uintmax_t iterations = 100;
  const auto [lo, hi] =
      boost::math::tools::toms748_solve(f, 0.5, 2.0, boost::math::tools::eps_tolerance<double>(40), iterations);
  const double s = 0.5 * (lo + hi);
  CHECK(gaussian_efficiency(RhoKernel::tukey(marloc::tuning::kRegressionMM85), s) == Approx(0.85).margin(0.01));
  CHECK(gaussian_efficiency(RhoKernel::tukey(marloc::tuning::kLocationMM90), s) == Approx(0.90).margin(0.01));
  CHECK(gaussian_efficiency(RhoKernel::tukey(marloc::tuning::kLocationMM95), s) == Approx(0.95).margin(0.01));
}
