#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "marloc/error.hpp"
#include "marloc/m_scale.hpp"
#include "marloc/model.hpp"
#include "marloc/rho.hpp"

namespace marloc {

/// Subsampling search and iteration controls for S and MM fits.
struct SearchConfig {
  int subsets = 500;
  int keep = 10;
  int refine_steps = 50;
  int max_iterations = 200;
  double tolerance = 1e-8;        // relative change in (beta, alpha)
  double scale_tolerance = 1e-10;
  std::uint64_t seed = 20240101;
};

enum class FitMethod { LeastSquares, S, MM };

struct RegressionFit {
  FitMethod method = FitMethod::MM;
  Vector beta_hat;
  double alpha_hat = 0.0;
  double sigma_hat = 0.0;
  /// y_i - g(x_i, beta_hat) over observed rows, in observed-row order. Not centred by alpha_hat.
  std::vector<double> residuals_observed;
  bool converged = false;
  int iterations = 0;
  bool exact_fit = false;
  /// S-stage coefficients; sigma_hat solves the scale equation at these.
  Vector beta_s;
  double alpha_s = 0.0;
  /// Minimised objective after each accepted iteration (MM: mean rho_1, S: scale).
  std::vector<double> objective_trace;
  bool rank_deficient = false;
};

struct Candidate {
  Vector beta;
  double alpha = 0.0;
};

namespace detail {

struct ObservedDesign {
  Matrix x;
  Vector y;
  double zero_tolerance = 0.0;
};

inline ObservedDesign observed_design(const CompleteCaseSample& sample) {
  ObservedDesign d{sample.observed_x(), sample.observed_y(), 0.0};
  d.zero_tolerance = d.y.size() > 0 ? 1e-10 * d.y.cwiseAbs().maxCoeff() : 0.0;
  return d;
}

inline void require_size(const CompleteCaseSample& sample, const RegressionModel& model) {
  if (sample.m() == 0) throw Error(ErrorCode::EmptyObservedSet, "no observed responses");
  if (sample.m() < model.q() + 1) {
    throw Error(ErrorCode::Underdetermined, "need at least q + 1 = " + std::to_string(model.q() + 1) +
                                                " observed rows, have " + std::to_string(sample.m()));
  }
}

inline Vector residuals(const RegressionModel& model, const ObservedDesign& d, const Candidate& c) {
  return (d.y - model.predict(d.x, c.beta)).array() - c.alpha;
}

/// Design for the (beta, alpha) linearisation: [g_dot(x_i, beta), 1].
inline Matrix augmented_jacobian(const RegressionModel& model, const Matrix& x, const Vector& beta) {
  Matrix j(x.rows(), model.q() + 1);
  j.leftCols(model.q()) = model.jacobian(x, beta);
  j.col(model.q()).setOnes();
  return j;
}

inline bool weighted_step(const Matrix& jac, const Vector& e, const Vector& w, Vector& step) {
  const Matrix jw = jac.array().colwise() * w.array();
  const Matrix normal = jac.transpose() * jw;
  const Vector rhs = jw.transpose() * e;
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  const double diag = normal.diagonal().cwiseAbs().maxCoeff();
  if (!(diag > 0.0) || ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-13 * diag) return false;
  step = ldlt.solve(rhs);
  return step.allFinite();
}

inline Candidate apply(const Candidate& c, const Vector& step, double factor) {
  const auto q = c.beta.size();
  return {c.beta + factor * step.head(q), c.alpha + factor * step[q]};
}

inline double norm(const Candidate& c) { return std::sqrt(c.beta.squaredNorm() + c.alpha * c.alpha); }

inline ScaleSolution candidate_scale(const Vector& e, const RhoKernel& rho0, double delta,
                                     const ObservedDesign& d, const SearchConfig& search) {
  ScaleProblem problem;
  problem.residuals = std::span<const double>(e.data(), static_cast<std::size_t>(e.size()));
  problem.kernel = rho0;
  problem.delta = delta;
  problem.tolerance = search.scale_tolerance;
  problem.zero_tolerance = d.zero_tolerance;
  return solve_m_scale(problem);
}

/// Solve the square system through the chosen rows; Gauss-Newton for the user kind.
inline bool interpolate(const RegressionModel& model, const ObservedDesign& d, const std::vector<Eigen::Index>& rows,
                        Candidate& out) {
  const auto q = model.q();
  Matrix xs(q + 1, d.x.cols());
  Vector ys(q + 1);
  for (Eigen::Index k = 0; k <= q; ++k) {
    xs.row(k) = d.x.row(rows[static_cast<std::size_t>(k)]);
    ys[k] = d.y[rows[static_cast<std::size_t>(k)]];
  }
  if (model.kind == ModelKind::Linear) {
    Matrix z(q + 1, q + 1);
    z.leftCols(q) = xs;
    z.col(q).setOnes();
    Eigen::FullPivLU<Matrix> lu(z);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) return false;
    const Vector xi = lu.solve(ys);
    if (!xi.allFinite()) return false;
    out = {xi.head(q), xi[q]};
    return true;
  }
  Candidate c{model.beta_start, 0.0};
  c.alpha = (ys - model.predict(xs, c.beta)).mean();
  for (int it = 0; it < 50; ++it) {
    const Vector e = (ys - model.predict(xs, c.beta)).array() - c.alpha;
    Eigen::FullPivLU<Matrix> lu(augmented_jacobian(model, xs, c.beta));
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) return false;
    const Vector step = lu.solve(e);
    if (!step.allFinite()) return false;
    c = apply(c, step, 1.0);
    if (step.norm() <= 1e-12 * (1.0 + norm(c))) break;
  }
  if (!c.beta.allFinite() || !std::isfinite(c.alpha)) return false;
  out = c;
  return true;
}

struct Refined {
  Candidate xi;
  double scale = 0.0;
  bool exact_fit = false;
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

/// S iterations: reweighted steps with psi_0(t)/t weights, each accepted only if
/// it does not increase the candidate scale.
inline Refined refine_s(const RegressionModel& model, const ObservedDesign& d, Candidate xi, const RhoKernel& rho0,
                        double delta, const SearchConfig& search, int steps) {
  Vector e = residuals(model, d, xi);
  ScaleSolution sol = candidate_scale(e, rho0, delta, d, search);
  Refined out{xi, sol.scale, sol.exact_fit, false, 0, {sol.scale}};
  for (int it = 0; it < steps && !out.exact_fit; ++it) {
    const double s = out.scale;
    Vector w(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) w[i] = rho0.weight(e[i] / s);
    Vector step;
    if (!weighted_step(augmented_jacobian(model, d.x, out.xi.beta), e, w, step)) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    double factor = 1.0;
    for (int halving = 0; halving < 30; ++halving, factor *= 0.5) {
      const Candidate trial = apply(out.xi, step, factor);
      const Vector trial_e = residuals(model, d, trial);
      const ScaleSolution trial_sol = candidate_scale(trial_e, rho0, delta, d, search);
      if (trial_sol.exact_fit || trial_sol.scale <= s) {
        out.xi = trial;
        e = trial_e;
        out.scale = trial_sol.scale;
        out.exact_fit = trial_sol.exact_fit;
        accepted = true;
        break;
      }
    }
    out.iterations = it + 1;
    if (!accepted) {
      out.converged = true;
      break;
    }
    out.trace.push_back(out.scale);
    if (factor * step.norm() <= search.tolerance * (norm(out.xi) + out.scale)) {
      out.converged = true;
      break;
    }
  }
  if (out.exact_fit) out.converged = true;
  return out;
}

inline RegressionFit make_fit(FitMethod method, const RegressionModel& model, const CompleteCaseSample& sample,
                              const Candidate& xi) {
  RegressionFit fit;
  fit.method = method;
  fit.beta_hat = xi.beta;
  fit.alpha_hat = xi.alpha;
  const Vector pred = model.predict(sample.observed_x(), xi.beta);
  const Vector y = sample.observed_y();
  fit.residuals_observed.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) fit.residuals_observed[static_cast<std::size_t>(i)] = y[i] - pred[i];
  return fit;
}

inline bool design_rank_deficient(const RegressionModel& model, const ObservedDesign& d, const Vector& beta) {
  Eigen::ColPivHouseholderQR<Matrix> qr(augmented_jacobian(model, d.x, beta));
  qr.setThreshold(1e-10);
  return qr.rank() < model.q() + 1;
}

}  // namespace detail

/// Random (q+1)-subsets of the observed rows, each solved for the interpolating
/// (beta, alpha). Singular subsets are skipped. Deterministic in rng_seed.
inline std::vector<Candidate> resampling_candidates(const CompleteCaseSample& sample, const RegressionModel& model,
                                                    int count, std::uint64_t rng_seed) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "candidate count must be at least 1");
  detail::require_size(sample, model);
  const auto d = detail::observed_design(sample);
  const auto m = sample.m();
  const auto subset = static_cast<std::size_t>(model.q() + 1);

  std::mt19937_64 rng(rng_seed);
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  std::vector<Eigen::Index> rows(subset);
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int draw = 0; draw < count; ++draw) {
    // Partial Fisher-Yates over the observed pool.
    for (std::size_t k = 0; k < subset; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      rows[k] = pool[k];
    }
    Candidate c;
    if (detail::interpolate(model, d, rows, c)) out.push_back(std::move(c));
  }
  if (out.empty()) throw Error(ErrorCode::DegenerateDesign, "every candidate subset was singular");
  return out;
}

/// Regression S fit on the complete cases: minimise the M-scale of y - g(x, beta) - alpha.
inline RegressionFit fit_s_regression(const CompleteCaseSample& sample, const RegressionModel& model,
                                      const RhoKernel& rho0, double delta, const SearchConfig& search = {}) {
  detail::require_size(sample, model);
  const auto d = detail::observed_design(sample);
  const auto candidates = resampling_candidates(sample, model, search.subsets, search.seed);

  struct Scored {
    double scale;
    std::size_t index;
  };
  std::vector<Scored> best;
  const auto keep = static_cast<std::size_t>(std::max(1, search.keep));
  for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
    const Vector e = detail::residuals(model, d, candidates[idx]);
    if (best.size() == keep) {
      // The scale is below the current worst kept one iff mean rho at that scale is below delta.
      const double worst = best.back().scale;
      if (worst > 0.0) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < e.size(); ++i) {
          total += std::fabs(e[i]) <= d.zero_tolerance ? 0.0 : rho0.rho(e[i] / worst);
        }
        if (total / static_cast<double>(e.size()) >= delta) continue;
      }
    }
    const ScaleSolution sol = detail::candidate_scale(e, rho0, delta, d, search);
    const Scored scored{sol.exact_fit ? 0.0 : sol.scale, idx};
    auto pos = std::upper_bound(best.begin(), best.end(), scored,
                                [](const Scored& a, const Scored& b) { return a.scale < b.scale; });
    best.insert(pos, scored);
    if (best.size() > keep) best.pop_back();
  }

  detail::Refined winner;
  bool have = false;
  for (const auto& entry : best) {
    auto refined = detail::refine_s(model, d, candidates[entry.index], rho0, delta, search, search.refine_steps);
    if (!have || refined.scale < winner.scale) {
      winner = std::move(refined);
      have = true;
    }
    if (winner.exact_fit) break;
  }
  if (!winner.converged && !winner.exact_fit) {
    auto more = detail::refine_s(model, d, winner.xi, rho0, delta, search, search.max_iterations);
    more.iterations += winner.iterations;
    more.trace.insert(more.trace.begin(), winner.trace.begin(), winner.trace.end());
    winner = std::move(more);
  }

  auto fit = detail::make_fit(FitMethod::S, model, sample, winner.xi);
  fit.sigma_hat = winner.exact_fit ? 0.0 : winner.scale;
  fit.exact_fit = winner.exact_fit;
  fit.converged = winner.converged;
  fit.iterations = winner.iterations;
  fit.beta_s = winner.xi.beta;
  fit.alpha_s = winner.xi.alpha;
  fit.objective_trace = std::move(winner.trace);
  fit.rank_deficient = detail::design_rank_deficient(model, d, winner.xi.beta);
  return fit;
}

/// MM fit: the S fit supplies the scale and starting point; then mean rho_1 of the
/// scaled residuals is decreased by reweighted steps with step halving.
inline RegressionFit fit_mm_regression(const CompleteCaseSample& sample, const RegressionModel& model,
                                       const RhoKernel& rho0, const RhoKernel& rho1, double delta,
                                       const SearchConfig& search = {}) {
  if (rho1.k < rho0.k) {
    throw Error(ErrorCode::InvalidArgument, "rho_1 must be pointwise below rho_0 (k1 >= k0)");
  }
  RegressionFit s_fit = fit_s_regression(sample, model, rho0, delta, search);
  if (s_fit.exact_fit) {
    s_fit.method = FitMethod::MM;
    return s_fit;
  }
  const auto d = detail::observed_design(sample);
  const double sigma = s_fit.sigma_hat;
  auto objective_of = [&](const Vector& e) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) total += rho1.rho(e[i] / sigma);
    return total / static_cast<double>(e.size());
  };

  Candidate xi{s_fit.beta_hat, s_fit.alpha_hat};
  Vector e = detail::residuals(model, d, xi);
  double objective = objective_of(e);
  std::vector<double> trace{objective};
  bool converged = false;
  int iterations = 0;
  for (; iterations < search.max_iterations; ++iterations) {
    Vector w(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) w[i] = rho1.weight(e[i] / sigma);
    Vector step;
    if (!detail::weighted_step(detail::augmented_jacobian(model, d.x, xi.beta), e, w, step)) {
      converged = true;
      break;
    }
    bool accepted = false;
    double factor = 1.0;
    for (int halving = 0; halving < 30; ++halving, factor *= 0.5) {
      const Candidate trial = detail::apply(xi, step, factor);
      const Vector trial_e = detail::residuals(model, d, trial);
      const double trial_objective = objective_of(trial_e);
      if (trial_objective <= objective) {
        xi = trial;
        e = trial_e;
        objective = trial_objective;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      converged = true;
      break;
    }
    trace.push_back(objective);
    if (factor * step.norm() <= search.tolerance * (detail::norm(xi) + sigma)) {
      converged = true;
      ++iterations;
      break;
    }
  }

  auto fit = detail::make_fit(FitMethod::MM, model, sample, xi);
  fit.sigma_hat = sigma;
  fit.converged = converged;
  fit.iterations = iterations;
  fit.exact_fit = false;
  fit.beta_s = s_fit.beta_hat;
  fit.alpha_s = s_fit.alpha_hat;
  fit.objective_trace = std::move(trace);
  fit.rank_deficient = s_fit.rank_deficient;
  return fit;
}

/// Least squares on the complete cases (Gauss-Newton for the user kind). sigma_hat
/// is the residual standard deviation with m - q - 1 degrees of freedom.
inline RegressionFit fit_least_squares(const CompleteCaseSample& sample, const RegressionModel& model,
                                       int max_iterations = 200, double tolerance = 1e-10) {
  detail::require_size(sample, model);
  const auto d = detail::observed_design(sample);
  Candidate xi{model.beta_start, 0.0};
  if (xi.beta.size() != model.q()) xi.beta = Vector::Zero(model.q());
  bool converged = false;
  int iterations = 0;
  for (; iterations < max_iterations; ++iterations) {
    const Vector e = detail::residuals(model, d, xi);
    const Matrix jac = detail::augmented_jacobian(model, d.x, xi.beta);
    Eigen::ColPivHouseholderQR<Matrix> qr(jac);
    qr.setThreshold(1e-10);
    if (qr.rank() < model.q() + 1) throw Error(ErrorCode::DegenerateDesign, "observed design is rank deficient");
    const Vector step = qr.solve(e);
    xi = detail::apply(xi, step, 1.0);
    if (model.kind == ModelKind::Linear || step.norm() <= tolerance * (1.0 + detail::norm(xi))) {
      converged = true;
      ++iterations;
      break;
    }
  }
  auto fit = detail::make_fit(FitMethod::LeastSquares, model, sample, xi);
  const Vector e = detail::residuals(model, d, xi);
  const double dof = std::max<double>(1.0, static_cast<double>(e.size() - model.q() - 1));
  fit.sigma_hat = std::sqrt(e.squaredNorm() / dof);
  fit.exact_fit = fit.sigma_hat <= d.zero_tolerance;
  fit.converged = converged;
  fit.iterations = iterations;
  fit.beta_s = xi.beta;
  fit.alpha_s = xi.alpha;
  return fit;
}

}  // namespace marloc
