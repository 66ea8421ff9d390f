#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "marloc/error.hpp"
#include "marloc/rho.hpp"

namespace marloc {

struct ScaleProblem {
  std::span<const double> residuals;
  RhoKernel kernel = RhoKernel::tukey(tuning::kScaleBisquare);
  double delta = tuning::kDelta;
  double tolerance = 1e-10;  // relative, on s
  int max_iterations = 200;
  /// Residuals with |r| <= zero_tolerance count as exact zeros.
  double zero_tolerance = 0.0;
};

struct ScaleSolution {
  double scale = 0.0;
  bool exact_fit = false;
  int iterations = 0;
};

namespace detail {

/// Root of s -> mean_rho(s) - delta on (0, inf). mean_rho must be continuous and
/// nonincreasing in s; [lo, hi] is only a starting bracket and is widened as needed.
template <class MeanRho>
ScaleSolution solve_scale_equation(MeanRho&& mean_rho, double zero_mass, double delta, double lo,
                                   double hi, double tolerance, int max_iterations) {
  if (zero_mass >= 1.0 - delta) return {0.0, true, 0};

  auto f = [&](double s) { return mean_rho(s) - delta; };
  int iterations = 0;
  constexpr double kTiny = std::numeric_limits<double>::min() * 1e4;
  constexpr double kHuge = std::numeric_limits<double>::max() / 1e4;

  if (!(lo > 0.0) || !std::isfinite(lo)) lo = 1.0;
  if (!(hi > lo) || !std::isfinite(hi)) hi = 2.0 * lo;

  double f_lo = f(lo);
  ++iterations;
  while (f_lo < 0.0) {
    hi = lo;
    lo *= 0.25;
    if (lo < kTiny || ++iterations > max_iterations) {
      throw Error(ErrorCode::NoConvergence, "scale bracket lower end collapsed to zero");
    }
    f_lo = f(lo);
  }
  double f_hi = f(hi);
  ++iterations;
  while (f_hi > 0.0) {
    lo = hi;
    f_lo = f_hi;
    hi *= 4.0;
    if (hi > kHuge || ++iterations > max_iterations) {
      throw Error(ErrorCode::NoConvergence, "scale bracket upper end diverged");
    }
    f_hi = f(hi);
  }
  if (f_lo == 0.0) return {lo, false, iterations};
  if (f_hi == 0.0) return {hi, false, iterations};

  // Terminate well inside the requested tolerance so the equation residual is
  // also below it.
  const double rel = std::max(tolerance * 1e-3, 4.0 * std::numeric_limits<double>::epsilon());
  auto narrow = [rel](double a, double b) { return std::fabs(b - a) <= rel * std::min(std::fabs(a), std::fabs(b)); };
  std::uintmax_t budget = static_cast<std::uintmax_t>(std::max(1, max_iterations - iterations));
  const auto bracket = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, narrow, budget);
  iterations += static_cast<int>(budget);

  const double a = bracket.first;
  const double b = bracket.second;
  if (!narrow(a, b) && std::fabs(b - a) > tolerance * std::min(a, b)) {
    throw Error(ErrorCode::NoConvergence,
                "scale root not bracketed to tolerance after " + std::to_string(iterations) + " iterations");
  }
  const double fa = f(a);
  const double fb = f(b);
  return {std::fabs(fa) <= std::fabs(fb) ? a : b, false, iterations};
}

}  // namespace detail

inline double mean_rho(std::span<const double> residuals, const RhoKernel& kernel, double scale) {
  double total = 0.0;
  for (double r : residuals) total += kernel.rho(r / scale);
  return total / static_cast<double>(residuals.size());
}

/// M-scale: the s solving mean rho(r_i / s) = delta. Returns s = 0 with the
/// exact-fit flag when at least a (1 - delta) fraction of residuals is zero.
inline ScaleSolution solve_m_scale(const ScaleProblem& problem) {
  const auto& r = problem.residuals;
  if (r.empty()) throw Error(ErrorCode::InvalidArgument, "empty residual sample");
  if (!(problem.delta > 0.0 && problem.delta < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
  }

  std::vector<double> magnitudes;
  magnitudes.reserve(r.size());
  std::size_t zeros = 0;
  double smallest_nonzero = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r[i])) {
      throw Error(ErrorCode::NonFiniteResidual, "residual " + std::to_string(i) + " is not finite");
    }
    const double m = std::fabs(r[i]);
    if (m <= problem.zero_tolerance) {
      ++zeros;
      magnitudes.push_back(0.0);
    } else {
      magnitudes.push_back(m);
      smallest_nonzero = std::min(smallest_nonzero, m);
    }
  }
  const double n = static_cast<double>(r.size());
  const double zero_mass = static_cast<double>(zeros) / n;
  if (zero_mass >= 1.0 - problem.delta) return {0.0, true, 0};

  const double k = problem.kernel.k;
  const double largest = *std::max_element(magnitudes.begin(), magnitudes.end());
  auto mid = magnitudes.begin() + static_cast<std::ptrdiff_t>(magnitudes.size() / 2);
  std::nth_element(magnitudes.begin(), mid, magnitudes.end());
  double lo = *mid / k;
  if (!(lo > 0.0)) lo = smallest_nonzero / k;
  const double hi = largest * 10.0;

  const double zt = problem.zero_tolerance;
  const auto& kernel = problem.kernel;
  auto objective = [&](double s) {
    double total = 0.0;
    for (double x : r) total += std::fabs(x) <= zt ? 0.0 : kernel.rho(x / s);
    return total / n;
  };
  return detail::solve_scale_equation(objective, zero_mass, problem.delta, lo, hi, problem.tolerance,
                                      problem.max_iterations);
}

/// Convenience overload with the default tolerance and iteration cap.
inline ScaleSolution solve_m_scale(std::span<const double> residuals, const RhoKernel& kernel,
                                   double delta) {
  ScaleProblem problem;
  problem.residuals = residuals;
  problem.kernel = kernel;
  problem.delta = delta;
  return solve_m_scale(problem);
}

}  // namespace marloc
