#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "marloc/convolution.hpp"
#include "marloc/error.hpp"
#include "marloc/m_scale.hpp"
#include "marloc/rho.hpp"

namespace marloc {

enum class LocationKind { Mean, Median, MMLocation };

struct LocationSpec {
  LocationKind kind = LocationKind::Median;
  RhoKernel rho0 = RhoKernel::tukey(tuning::kScaleBisquare);
  RhoKernel rho1 = RhoKernel::tukey(tuning::kLocationMM90);
  double delta = tuning::kDelta;
  std::string name = "median";

  static LocationSpec mean() { return {LocationKind::Mean, {}, {}, tuning::kDelta, "mean"}; }
  static LocationSpec median() { return {LocationKind::Median, {}, {}, tuning::kDelta, "median"}; }
  static LocationSpec mm(double k0, double k1, double delta, std::string name = "mm") {
    if (k1 < k0) throw Error(ErrorCode::InvalidArgument, "MM location needs k1 >= k0 so that rho_1 <= rho_0");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
    return {LocationKind::MMLocation, RhoKernel::tukey(k0), RhoKernel::tukey(k1), delta, std::move(name)};
  }

  /// Named presets: mean, median, mm90, mm95.
  static LocationSpec from_name(std::string_view preset) {
    if (preset == "mean") return mean();
    if (preset == "median") return median();
    if (preset == "mm90") return mm(tuning::kScaleBisquare, tuning::kLocationMM90, tuning::kDelta, "mm90");
    if (preset == "mm95") return mm(tuning::kScaleBisquare, tuning::kLocationMM95, tuning::kDelta, "mm95");
    throw Error(ErrorCode::InvalidArgument, "unknown functional '" + std::string(preset) + "'");
  }
};

/// S-stage of the MM location: the minimiser mu of the profiled M-scale and the
/// attained minimum sigma.
struct SLocation {
  double mu = 0.0;
  double sigma = 0.0;
  bool degenerate = false;
  int evaluations = 0;
};

struct LocationResult {
  LocationKind kind = LocationKind::Median;
  double value = 0.0;
  double mu_s = 0.0;   // S-location start (MM only)
  double sigma = 0.0;  // location scale (MM only)
  bool degenerate_scale = false;
  int iterations = 0;
  std::vector<double> objective_trace;
};

/// Profiled scale S*(F, mu). hint, when positive, seeds the root bracket.
template <class Dist>
ScaleSolution profiled_scale(const Dist& dist, const RhoKernel& rho0, double delta, double mu, double hint = 0.0,
                             double tolerance = 1e-10) {
  const double atom = dist.expectation([mu](double y) { return y == mu ? 1.0 : 0.0; });
  auto mean_rho_at = [&](double s) {
    return dist.expectation([&](double y) { return rho0.rho((y - mu) / s); });
  };
  double lo = hint > 0.0 ? 0.95 * hint : 0.0;
  double hi = hint > 0.0 ? 1.05 * hint : 0.0;
  if (!(hint > 0.0)) {
    const double spread = std::max(std::fabs(dist.max() - mu), std::fabs(mu - dist.min()));
    lo = spread / rho0.k * 1e-3;
    hi = spread * 10.0;
  }
  return detail::solve_scale_equation(mean_rho_at, atom, delta, lo, hi, tolerance, 400);
}

/// Golden-section search for the S-location over [q(0.05), q(0.95)].
template <class Dist>
SLocation s_location(const Dist& dist, const RhoKernel& rho0, double delta) {
  SLocation out;
  const double median = dist.quantile(0.5);
  const double median_atom = dist.expectation([median](double y) { return y == median ? 1.0 : 0.0; });
  if (median_atom >= 1.0 - delta) {
    out.mu = median;
    out.degenerate = true;
    return out;
  }
  double a = dist.quantile(0.05);
  double b = dist.quantile(0.95);
  if (!(b > a)) {
    a = dist.min();
    b = dist.max();
  }
  const double width_stop = 1e-9 * (b - a);
  constexpr double kInvPhi = 0.6180339887498949;

  double hint = 0.0;
  bool hit_zero = false;
  double zero_at = 0.0;
  auto scale_at = [&](double mu) {
    const ScaleSolution s = profiled_scale(dist, rho0, delta, mu, hint);
    ++out.evaluations;
    if (s.exact_fit) {
      hit_zero = true;
      zero_at = mu;
      return 0.0;
    }
    hint = s.scale;
    return s.scale;
  };

  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = scale_at(c);
  double fd = scale_at(d);
  while (b - a > width_stop && !hit_zero) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = scale_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = scale_at(d);
    }
  }
  if (hit_zero) {
    out.mu = zero_at;
    out.degenerate = true;
    return out;
  }
  out.mu = 0.5 * (a + b);
  const ScaleSolution final_scale = profiled_scale(dist, rho0, delta, out.mu, hint);
  ++out.evaluations;
  out.sigma = final_scale.scale;
  out.degenerate = final_scale.exact_fit;
  return out;
}

/// Second stage: minimise E rho_1((y - mu) / sigma) from the S-location by
/// reweighted means, halving any step that would raise the objective.
template <class Dist>
LocationResult mm_location(const Dist& dist, const SLocation& start, const RhoKernel& rho1, int max_iterations = 500,
                           double tolerance = 1e-11) {
  LocationResult out;
  out.kind = LocationKind::MMLocation;
  out.mu_s = start.mu;
  out.sigma = start.sigma;
  out.value = start.mu;
  if (start.degenerate) {
    out.degenerate_scale = true;
    return out;
  }
  const double sigma = start.sigma;
  struct Pass {
    double objective = 0.0;
    double weight = 0.0;
    double weighted = 0.0;
  };
  auto pass_at = [&](double mu) {
    Pass p;
    dist.visit([&](double y, double w) {
      const double t = (y - mu) / sigma;
      p.objective += w * rho1.rho(t);
      const double wt = w * rho1.weight(t);
      p.weight += wt;
      p.weighted += wt * y;
    });
    return p;
  };

  double mu = start.mu;
  Pass current = pass_at(mu);
  out.objective_trace.push_back(current.objective);
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    if (!(current.weight > 0.0)) break;
    const double target = current.weighted / current.weight;
    double step = target - mu;
    // Increases below the rounding level of the sum are accepted, so the
    // iteration can converge past the point where the objective goes flat.
    const double slack = 1e-12 * std::fabs(current.objective);
    Pass next = pass_at(mu + step);
    int halvings = 0;
    while (next.objective > current.objective + slack && halvings < 40) {
      step *= 0.5;
      next = pass_at(mu + step);
      ++halvings;
    }
    if (next.objective > current.objective + slack) break;
    mu += step;
    current = next;
    out.objective_trace.push_back(current.objective);
    if (std::fabs(step) <= tolerance * sigma) break;
  }
  out.value = mu;
  return out;
}

/// Location functional evaluated at a distribution exposing quantile, mean, visit
/// and expectation.
template <class Dist>
LocationResult evaluate(const LocationSpec& spec, const Dist& dist) {
  LocationResult out;
  out.kind = spec.kind;
  switch (spec.kind) {
    case LocationKind::Mean:
      out.value = dist.mean();
      out.mu_s = out.value;
      return out;
    case LocationKind::Median:
      out.value = dist.quantile(0.5);
      out.mu_s = out.value;
      return out;
    case LocationKind::MMLocation: {
      const SLocation start = s_location(dist, spec.rho0, spec.delta);
      return mm_location(dist, start, spec.rho1);
    }
  }
  return out;
}

inline LocationResult mm_location_on_sample(const LocationSpec& spec, const WeightedSample& sample) {
  if (spec.kind != LocationKind::MMLocation) {
    throw Error(ErrorCode::InvalidArgument, "mm_location_on_sample needs an MM location spec");
  }
  return evaluate(spec, sample);
}

}  // namespace marloc
