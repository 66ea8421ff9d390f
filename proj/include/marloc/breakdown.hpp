#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "marloc/error.hpp"
#include "marloc/location.hpp"
#include "marloc/model.hpp"
#include "marloc/pipeline.hpp"
#include "marloc/simulation.hpp"

namespace marloc {

/// Where replacement outliers go. Unobserved rows can only have x replaced.
///  LeverageX: observed rows get x = M d, y kept.
///  OutlierY:  observed rows get y = M, x kept.
///  Both:      observed rows get x = M d and y = M.
enum class Placement { LeverageX, OutlierY, Both };

/// At most t rows replaced in total, at most s of them observed.
struct ContaminationScheme {
  int t = 0;
  int s = 0;
  std::vector<double> ladder{1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  Placement placement = Placement::Both;
};

inline double kappa(int t, int s, Eigen::Index n, Eigen::Index m) {
  return std::max(static_cast<double>(t) / static_cast<double>(n), static_cast<double>(s) / static_cast<double>(m));
}

/// Replaces s observed rows and t - s unobserved rows. Even trials use an axis
/// direction, odd trials a random positive direction.
inline CompleteCaseSample apply_scheme(const CompleteCaseSample& sample, const ContaminationScheme& scheme,
                                       double magnitude, std::uint64_t trial_seed, int trial) {
  const auto n = sample.n();
  const auto m = sample.m();
  if (scheme.s < 0 || scheme.t < scheme.s || scheme.s > m || scheme.t - scheme.s > n - m) {
    throw Error(ErrorCode::InvalidArgument, "contamination scheme does not fit the sample");
  }
  std::mt19937_64 rng(trial_seed);
  std::vector<Eigen::Index> observed = sample.observed_rows();
  std::vector<Eigen::Index> missing;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!sample.observed(i)) missing.push_back(i);
  }
  auto choose = [&rng](std::vector<Eigen::Index>& pool, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(count);
  };
  choose(observed, static_cast<std::size_t>(scheme.s));
  choose(missing, static_cast<std::size_t>(scheme.t - scheme.s));

  Vector direction = Vector::Zero(sample.p());
  if (trial % 2 == 0) {
    direction[(trial / 2) % sample.p()] = 1.0;
  } else {
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    for (auto& v : direction) v = unif(rng);
    direction.normalize();
  }

  Matrix x = sample.x();
  Vector y = sample.y();
  for (auto row : observed) {
    if (scheme.placement != Placement::OutlierY) x.row(row) = magnitude * direction.transpose();
    if (scheme.placement != Placement::LeverageX) y[row] = magnitude;
  }
  for (auto row : missing) x.row(row) = magnitude * direction.transpose();
  return CompleteCaseSample(std::move(x), std::move(y), sample.indicators());
}

struct FsbpRow {
  double kappa = 0.0;
  int t = 0;
  int s = 0;
  bool escaped = false;
  double worst_abs = 0.0;
};

struct FsbpReport {
  double clean_estimate = 0.0;
  double bound = 0.0;
  std::vector<FsbpRow> rows;
  /// Smallest escaping kappa on the grid; empty when nothing escaped.
  std::optional<double> smallest_escape;
};

using LocationPipeline = std::function<double(const CompleteCaseSample&)>;

/// (t, s) pairs with kappa close to each target fraction: s = floor(f m) observed
/// replacements plus enough unobserved ones to bring t / n up to f.
inline std::vector<std::pair<int, int>> kappa_grid(Eigen::Index n, Eigen::Index m, const std::vector<double>& fractions) {
  std::vector<std::pair<int, int>> out;
  for (double f : fractions) {
    const int s = std::max(1, static_cast<int>(std::floor(f * static_cast<double>(m) + 1e-9)));
    const int extra = std::clamp(static_cast<int>(std::floor(f * static_cast<double>(n) + 1e-9)) - s, 0,
                                 static_cast<int>(n - m));
    out.emplace_back(s + extra, s);
  }
  return out;
}

/// Empirical finite-sample breakdown over a (t, s) grid. A grid point escapes when
/// any trial at any ladder magnitude gives |mu| > 100 |mu_clean| or fails.
inline FsbpReport empirical_fsbp(const LocationPipeline& pipeline, const CompleteCaseSample& base,
                                 const std::vector<std::pair<int, int>>& grid, const std::vector<double>& ladder,
                                 int trials, std::uint64_t seed, Placement placement = Placement::Both,
                                 unsigned threads = 1) {
  FsbpReport report;
  report.clean_estimate = pipeline(base);
  report.bound = 100.0 * std::max(std::fabs(report.clean_estimate), 1.0);
  report.rows = parallel_map(grid.size(), threads, [&](std::size_t g) {
    FsbpRow row;
    row.t = grid[g].first;
    row.s = grid[g].second;
    row.kappa = kappa(row.t, row.s, base.n(), base.m());
    ContaminationScheme scheme{row.t, row.s, ladder, placement};
    for (int trial = 0; trial < trials && !row.escaped; ++trial) {
      const std::uint64_t trial_seed = stream_seed(seed, static_cast<std::uint64_t>(trial), g);
      for (double magnitude : ladder) {
        double estimate = std::numeric_limits<double>::infinity();
        try {
          estimate = pipeline(apply_scheme(base, scheme, magnitude, trial_seed, trial));
        } catch (const Error&) {
        }
        const double a = std::isfinite(estimate) ? std::fabs(estimate) : std::numeric_limits<double>::infinity();
        row.worst_abs = std::max(row.worst_abs, a);
        if (a > report.bound) {
          row.escaped = true;
          break;
        }
      }
    }
    return row;
  });
  for (const auto& row : report.rows) {
    if (row.escaped && (!report.smallest_escape || row.kappa < *report.smallest_escape)) {
      report.smallest_escape = row.kappa;
    }
  }
  return report;
}

/// Lower bound min(eps1, 1 - sqrt(1 - eps2)) on the breakdown point of the
/// location estimate, from the regression breakdown eps1 and the location UABP eps2.
inline double breakdown_lower_bound(double eps1, double eps2) {
  if (eps1 < 0.0 || eps1 > 0.5 || eps2 < 0.0 || eps2 > 0.5) {
    throw Error(ErrorCode::InvalidArgument, "breakdown points must lie in [0, 0.5]");
  }
  return std::min(eps1, 1.0 - std::sqrt(1.0 - eps2));
}

/// Uniform asymptotic breakdown point of a location functional.
inline double uabp(const LocationSpec& spec) {
  switch (spec.kind) {
    case LocationKind::Mean: throw Error(ErrorCode::MeanHasNoUABP, "the mean is not bounded under any contamination");
    case LocationKind::Median: return 0.5;
    case LocationKind::MMLocation: return std::min(spec.delta, 1.0 - spec.delta);
  }
  return 0.0;
}

/// Asymptotic breakdown point of linear S / MM regression, min(delta, 1 - delta - c).
inline double regression_breakdown(double delta, double hyperplane_fraction) {
  return std::max(0.0, std::min(delta, 1.0 - delta - hyperplane_fraction));
}

/// Largest fraction of observed covariate rows found on one affine hyperplane, by
/// fitting hyperplanes through random p-subsets. A lower estimate, not a certificate.
inline double estimate_hyperplane_fraction(const CompleteCaseSample& sample, int probes, std::uint64_t seed) {
  const Matrix x = sample.observed_x();
  const auto m = x.rows();
  const auto p = x.cols();
  if (m <= p) return 1.0;
  Matrix z(m, p + 1);
  z.leftCols(p) = x;
  z.col(p).setOnes();
  const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
  Eigen::Index best = 0;
  for (int probe = 0; probe < probes; ++probe) {
    Matrix sub(p, p + 1);
    for (Eigen::Index k = 0; k < p; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
      sub.row(k) = z.row(pool[static_cast<std::size_t>(k)]);
    }
    Eigen::FullPivLU<Matrix> lu(sub);
    const Matrix kernel = lu.kernel();
    if (kernel.cols() != 1) continue;
    const Vector gamma = kernel.col(0).normalized();
    if (gamma.head(p).norm() < 1e-12) continue;
    const Eigen::Index on_plane = ((z * gamma).array().abs() <= 1e-9 * scale).count();
    best = std::max(best, on_plane);
  }
  return static_cast<double>(best) / static_cast<double>(m);
}

/// Location pipeline for the lab: mean uses least squares, the rest MM regression.
inline LocationPipeline make_location_pipeline(const LocationSpec& spec, const RegressionKernels& kernels = {},
                                               SearchConfig search = {}) {
  return [spec, kernels, search](const CompleteCaseSample& sample) {
    const auto model = RegressionModel::linear(static_cast<int>(sample.p()));
    PipelineOptions options;
    options.kernels = kernels;
    options.search = search;
    options.compute_se = false;
    return run_pipeline(sample, model, spec, options).location.value;
  };
}

inline std::string format_csv(const FsbpReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "kappa,t,s,escaped,worst_abs_mu\n";
  for (const auto& row : report.rows) {
    out << row.kappa << ',' << row.t << ',' << row.s << ',' << (row.escaped ? 1 : 0) << ',' << row.worst_abs << '\n';
  }
  return out.str();
}

}  // namespace marloc
