#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "marloc/convolution.hpp"
#include "marloc/error.hpp"
#include "marloc/kde.hpp"
#include "marloc/location.hpp"
#include "marloc/model.hpp"
#include "marloc/regression.hpp"
#include "marloc/rho.hpp"

namespace marloc {

/// rho_0 / rho_1 / delta used by the regression fit.
struct RegressionKernels {
  RhoKernel rho0 = RhoKernel::tukey(tuning::kScaleBisquare);
  RhoKernel rho1 = RhoKernel::tukey(tuning::kRegressionMM85);
  double delta = tuning::kDelta;
};

/// Plug-in versions of the constants entering the regression and location
/// influence functions, with expectations taken under the fitted empiricals.
struct IFConstants {
  FitMethod method = FitMethod::MM;
  RegressionKernels kernels;
  Vector beta_hat;
  double alpha00 = 0.0;
  double alpha01 = 0.0;
  double sigma0 = 0.0;
  double a00 = 0.0;
  double a01 = 0.0;
  double e00 = 0.0;
  double e01 = 0.0;
  double d0 = 0.0;
  Vector b0;
  Matrix A0;
  Matrix A0_inverse;

  bool has_location = false;
  LocationSpec location;
  double mu00 = 0.0;
  double mu01 = 0.0;
  double sigma0L = 0.0;
  double a00L = 0.0;
  double a01L = 0.0;
  double e00L = 0.0;
  double e01L = 0.0;
  double d0L = 0.0;
};

inline constexpr double kDegenerateConstant = 1e-8;

inline IFConstants estimate_if_constants(const RegressionFit& fit, const CompleteCaseSample& sample,
                                         const RegressionModel& model, const RegressionKernels& kernels) {
  if (fit.exact_fit || !(fit.sigma_hat > 0.0)) {
    throw Error(ErrorCode::DegenerateConstant, "exact fit: residual scale is zero");
  }
  IFConstants c;
  c.method = fit.method;
  c.kernels = kernels;
  c.beta_hat = fit.beta_hat;
  c.alpha00 = fit.alpha_s;
  c.alpha01 = fit.alpha_hat;
  c.sigma0 = fit.sigma_hat;

  const double m = static_cast<double>(fit.residuals_observed.size());
  for (double u : fit.residuals_observed) {
    const double t0 = (u - c.alpha00) / c.sigma0;
    const double t1 = (u - c.alpha01) / c.sigma0;
    c.a00 += kernels.rho0.psi_prime(t0);
    c.e00 += kernels.rho0.psi_prime(t0) * t0;
    c.d0 += kernels.rho0.psi(t0) * t0;
    c.a01 += kernels.rho1.psi_prime(t1);
    c.e01 += kernels.rho1.psi_prime(t1) * t1;
  }
  c.a00 /= m;
  c.e00 /= m;
  c.d0 /= m;
  c.a01 /= m;
  c.e01 /= m;
  if (fit.method == FitMethod::LeastSquares) {
    c.a00 = c.a01 = c.d0 = 1.0;
    c.e00 = c.e01 = 0.0;
  } else if (fit.method == FitMethod::S) {
    c.a01 = c.a00;
    c.e01 = c.e00;
  }
  if (std::fabs(c.a01) < kDegenerateConstant || std::fabs(c.d0) < kDegenerateConstant) {
    throw Error(ErrorCode::DegenerateConstant, "a01 or d0 vanishes");
  }

  const Matrix grad = model.jacobian(sample.observed_x(), fit.beta_hat);
  c.b0 = grad.colwise().mean().transpose();
  const Matrix centered = grad.rowwise() - c.b0.transpose();
  c.A0 = centered.transpose() * centered / m;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c.A0);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > 1e-10 * std::max(max_eig, 0.0)) || !(min_eig > 0.0)) {
    throw Error(ErrorCode::DegenerateConstant, "covariance of g_dot is singular");
  }
  c.A0_inverse = c.A0.inverse();
  return c;
}

/// Adds the location-side constants at the fitted location result.
template <class Dist>
void attach_location_constants(IFConstants& c, const LocationSpec& spec, const Dist& dist,
                               const LocationResult& result) {
  c.has_location = true;
  c.location = spec;
  c.mu00 = result.mu_s;
  c.mu01 = result.value;
  c.sigma0L = result.sigma;
  if (spec.kind != LocationKind::MMLocation) return;
  if (result.degenerate_scale || !(result.sigma > 0.0)) {
    throw Error(ErrorCode::DegenerateConstant, "location scale is zero");
  }
  double a00 = 0.0, a01 = 0.0, e00 = 0.0, e01 = 0.0, d0 = 0.0;
  dist.visit([&](double y, double w) {
    const double t0 = (y - c.mu00) / c.sigma0L;
    const double t1 = (y - c.mu01) / c.sigma0L;
    const double p0 = spec.rho0.psi_prime(t0);
    const double p1 = spec.rho1.psi_prime(t1);
    a00 += w * p0;
    e00 += w * p0 * t0;
    d0 += w * spec.rho0.psi(t0) * t0;
    a01 += w * p1;
    e01 += w * p1 * t1;
  });
  c.a00L = a00;
  c.a01L = a01;
  c.e00L = e00;
  c.e01L = e01;
  c.d0L = d0;
  if (std::fabs(c.a01L) < kDegenerateConstant || std::fabs(c.d0L) < kDegenerateConstant) {
    throw Error(ErrorCode::DegenerateConstant, "a01L or d0L vanishes");
  }
}

/// Influence function of the regression functional at (x, y), for the fit's method.
inline Vector regression_if(const IFConstants& c, const RegressionModel& model, const Vector& x, double y) {
  if (c.A0_inverse.size() == 0 || !c.A0_inverse.allFinite()) {
    throw Error(ErrorCode::SingularA0, "A0 has no inverse");
  }
  const double u = y - model.g(x, c.beta_hat);
  const Vector direction = c.A0_inverse * (model.g_dot(x, c.beta_hat) - c.b0);
  switch (c.method) {
    case FitMethod::LeastSquares:
      return (u - c.alpha01) * direction;
    case FitMethod::S:
      return c.sigma0 / c.a00 * c.kernels.rho0.psi((u - c.alpha00) / c.sigma0) * direction;
    case FitMethod::MM:
      break;
  }
  return c.sigma0 / c.a01 * c.kernels.rho1.psi((u - c.alpha01) / c.sigma0) * direction;
}

/// Influence function of the MM location functional.
inline double location_if(const IFConstants& c, double y) {
  if (!c.has_location || c.location.kind != LocationKind::MMLocation) {
    throw Error(ErrorCode::DegenerateConstant, "location constants not available");
  }
  const double s = c.sigma0L;
  return s / c.a01L * c.location.rho1.psi((y - c.mu01) / s) -
         c.e01L * s / (c.a01L * c.d0L) * (c.location.rho0.rho((y - c.mu00) / s) - c.location.delta);
}

inline double location_if_derivative(const IFConstants& c, double y) {
  const double s = c.sigma0L;
  return c.location.rho1.psi_prime((y - c.mu01) / s) / c.a01L -
         c.e01L / (c.a01L * c.d0L) * c.location.rho0.psi((y - c.mu00) / s);
}

/// Influence function of the median, sign(y - mu0) / (2 f0(mu0)).
inline double median_if(double f0_at_mu, double mu0, double y) {
  if (!(f0_at_mu > 0.0)) throw Error(ErrorCode::ZeroDensity, "density at the median must be positive");
  const double diff = y - mu0;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  return sign / (2.0 * f0_at_mu);
}

struct VarianceOptions {
  std::uint64_t seed = 7;
  std::uint64_t max_pairs = 1'000'000;
  std::uint64_t kde_max_points = 100'000;
  double confidence_z = 1.959963984540054;
};

struct VarianceEstimate {
  double tau_sq = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double eta_hat = 0.0;
  /// Coefficient multiplying a_i I_R(x_i, y_i) inside tau^2.
  Vector c_hat;
  /// Median only: the c* vector in its 1/(eta f0) normalisation (c_hat = eta_hat * c_star).
  Vector c_star;
  double component_e = 0.0;
  double component_f = 0.0;
  double component_regression = 0.0;
  bool subsampled = false;
  double f0_hat = 0.0;
  double bandwidth_f0 = 0.0;
  double bandwidth_k0 = 0.0;
};

namespace detail {

inline std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t keep, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (keep >= total) return idx;
  for (std::size_t k = 0; k < keep; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, total - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Density of the convolution at one point, from at most max_points of its n*m sums.
inline double convolution_density(const ConvolvedDistribution& dist, double at, std::uint64_t max_points,
                                  std::mt19937_64& rng, double& bandwidth) {
  std::vector<double> points;
  if (dist.size() <= max_points) {
    points.reserve(static_cast<std::size_t>(dist.size()));
    dist.visit([&](double y, double) { points.push_back(y); });
  } else {
    const auto& g = dist.predictions_sorted();
    const auto& u = dist.residuals_sorted();
    std::uniform_int_distribution<std::size_t> pick_g(0, g.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_u(0, u.size() - 1);
    points.reserve(static_cast<std::size_t>(max_points));
    for (std::uint64_t k = 0; k < max_points; ++k) points.push_back(g[pick_g(rng)] + u[pick_u(rng)]);
  }
  bandwidth = silverman_bandwidth(points);
  return gaussian_kde(points, bandwidth, at);
}

}  // namespace detail

/// Plug-in asymptotic variance of the location estimate, with standard error and
/// normal confidence interval. Mean and MM functionals use the smooth route; the
/// median uses kernel density estimates of f0 and k0.
inline VarianceEstimate estimate_tau_sq(const LocationSpec& spec, const RegressionFit& fit,
                                        const CompleteCaseSample& sample, const RegressionModel& model,
                                        const ConvolvedDistribution& dist, const LocationResult& location,
                                        const RegressionKernels& kernels, const VarianceOptions& options = {}) {
  IFConstants c = estimate_if_constants(fit, sample, model, kernels);
  attach_location_constants(c, spec, dist, location);

  const auto n = static_cast<std::size_t>(sample.n());
  const auto m = static_cast<std::size_t>(sample.m());
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const auto q = static_cast<Eigen::Index>(model.q());
  const double eta = md / nd;
  const double mu = location.value;

  const Vector pred = model.predict(sample.x(), fit.beta_hat);
  const Matrix grad = model.jacobian(sample.x(), fit.beta_hat);
  const auto& rows = sample.observed_rows();
  const auto& u = fit.residuals_observed;

  VarianceEstimate out;
  out.eta_hat = eta;
  std::mt19937_64 rng(options.seed);

  // Regression influence, I_R = IF / eta, per observed row.
  Matrix ir(static_cast<Eigen::Index>(m), q);
  for (std::size_t k = 0; k < m; ++k) {
    const auto r = rows[k];
    ir.row(static_cast<Eigen::Index>(k)) =
        regression_if(c, model, sample.x().row(r).transpose(), sample.y()[r]).transpose() / eta;
  }

  std::vector<double> e_obs(m, 0.0);
  std::vector<double> f_row(n, 0.0);
  Vector c_hat = Vector::Zero(q);

  if (spec.kind == LocationKind::Median) {
    double bandwidth_f0 = 0.0;
    const double f0 = detail::convolution_density(dist, mu, options.kde_max_points, rng, bandwidth_f0);
    if (!(f0 > 0.0)) throw Error(ErrorCode::ZeroDensity, "estimated density at the median is zero");
    out.f0_hat = f0;
    out.bandwidth_f0 = bandwidth_f0;
    out.bandwidth_k0 = silverman_bandwidth(u);

    // sign(u_k + g_j - mu) averaged by counting against the sorted predictions.
    const auto& sorted_pred = dist.predictions_sorted();
    auto mean_sign = [&](double shift) {
      const auto below = std::lower_bound(sorted_pred.begin(), sorted_pred.end(), mu - shift,
                                          [&](double g, double) { return g + shift < mu; }) - sorted_pred.begin();
      const auto at_or_below = std::upper_bound(sorted_pred.begin(), sorted_pred.end(), mu - shift,
                                                [&](double, double g) { return g + shift > mu; }) - sorted_pred.begin();
      const double above = static_cast<double>(sorted_pred.size()) - static_cast<double>(at_or_below);
      return (above - static_cast<double>(below)) / static_cast<double>(sorted_pred.size());
    };
    for (std::size_t k = 0; k < m; ++k) e_obs[k] = mean_sign(u[k]) / (2.0 * f0);
    const auto& sorted_u = dist.residuals_sorted();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = pred[static_cast<Eigen::Index>(j)];
      const auto below = std::lower_bound(sorted_u.begin(), sorted_u.end(), 0.0,
                                          [&](double r, double) { return g + r < mu; }) - sorted_u.begin();
      const auto at_or_below = std::upper_bound(sorted_u.begin(), sorted_u.end(), 0.0,
                                                [&](double, double r) { return g + r > mu; }) - sorted_u.begin();
      const double above = md - static_cast<double>(at_or_below);
      f_row[j] = eta * (above - static_cast<double>(below)) / md / (2.0 * f0);
    }

    // c = (1/f0) E[a_1 k0(mu - g_2)(g_dot_2 - g_dot_1)].
    Vector weighted_grad = Vector::Zero(q);
    double density_mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double k0 = gaussian_kde(u, out.bandwidth_k0, mu - pred[static_cast<Eigen::Index>(j)]);
      weighted_grad += k0 * grad.row(static_cast<Eigen::Index>(j)).transpose();
      density_mean += k0;
    }
    weighted_grad /= nd;
    density_mean /= nd;
    Vector observed_grad = Vector::Zero(q);
    for (auto r : rows) observed_grad += grad.row(r).transpose();
    observed_grad /= nd;
    c_hat = (eta * weighted_grad - density_mean * observed_grad) / f0;
    out.c_star = c_hat / eta;
  } else {
    auto influence = [&](double y) {
      return spec.kind == LocationKind::Mean ? y - mu : location_if(c, y);
    };
    auto influence_prime = [&](double y) {
      return spec.kind == LocationKind::Mean ? 1.0 : location_if_derivative(c, y);
    };
    const std::uint64_t pairs = static_cast<std::uint64_t>(n) * m;
    out.subsampled = pairs > options.max_pairs;
    const auto keep_rows = static_cast<std::size_t>(std::max<std::uint64_t>(1, options.max_pairs / n));
    const auto keep_cols = static_cast<std::size_t>(std::max<std::uint64_t>(1, options.max_pairs / m));
    const auto obs_subset = detail::subsample_indices(m, out.subsampled ? keep_rows : m, rng);
    const auto pred_subset = detail::subsample_indices(n, out.subsampled ? keep_cols : n, rng);

    // Row side: e_k and the row sums of I_L' over predictions.
    Vector row_term = Vector::Zero(q);
    for (std::size_t k = 0; k < m; ++k) {
      double sum_i = 0.0;
      double sum_d = 0.0;
      for (auto j : pred_subset) {
        const double y = u[k] + pred[static_cast<Eigen::Index>(j)];
        sum_i += influence(y);
        sum_d += influence_prime(y);
      }
      const double scale = 1.0 / static_cast<double>(pred_subset.size());
      e_obs[k] = sum_i * scale;
      row_term += (sum_d * scale * nd) * grad.row(rows[k]).transpose();
    }
    // Column side: f_j and the column sums of I_L' over observed residuals.
    Vector col_term = Vector::Zero(q);
    for (std::size_t j = 0; j < n; ++j) {
      double sum_i = 0.0;
      double sum_d = 0.0;
      for (auto k : obs_subset) {
        const double y = u[k] + pred[static_cast<Eigen::Index>(j)];
        sum_i += influence(y);
        sum_d += influence_prime(y);
      }
      const double scale = md / static_cast<double>(obs_subset.size());
      f_row[j] = sum_i * scale / nd;
      col_term += (sum_d * scale) * grad.row(static_cast<Eigen::Index>(j)).transpose();
    }
    c_hat = (col_term - row_term) / (nd * nd);
  }

  std::vector<double> e_row(n, 0.0);
  std::vector<double> reg_row(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    e_row[static_cast<std::size_t>(rows[k])] = e_obs[k];
    reg_row[static_cast<std::size_t>(rows[k])] = c_hat.dot(ir.row(static_cast<Eigen::Index>(k)).transpose());
  }
  double total = 0.0, se = 0.0, sf = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = e_row[i] + f_row[i] + reg_row[i];
    total += v * v;
    se += e_row[i] * e_row[i];
    sf += f_row[i] * f_row[i];
    sr += reg_row[i] * reg_row[i];
  }
  const double norm = 1.0 / (eta * eta * nd);
  out.tau_sq = total * norm;
  out.component_e = se * norm;
  out.component_f = sf * norm;
  out.component_regression = sr * norm;
  out.c_hat = c_hat;
  out.se = std::sqrt(out.tau_sq / nd);
  out.ci_lower = mu - options.confidence_z * out.se;
  out.ci_upper = mu + options.confidence_z * out.se;
  return out;
}

}  // namespace marloc
