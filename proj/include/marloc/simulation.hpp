#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "marloc/convolution.hpp"
#include "marloc/location.hpp"
#include "marloc/model.hpp"
#include "marloc/pipeline.hpp"
#include "marloc/regression.hpp"

namespace marloc {

// ---------------------------------------------------------------------------
// Seeding and parallel map
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for one (replicate, purpose) stream, independent of evaluation order.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index, std::uint64_t purpose = 0) noexcept {
  return splitmix64(splitmix64(master ^ splitmix64(index)) + purpose);
}

inline unsigned default_threads() {
  if (const char* env = std::getenv("MARLOC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// f(i) for i in [0, count), results stored by index so the output does not depend
/// on the number of workers.
template <class F>
auto parallel_map(std::size_t count, unsigned threads, F&& f) -> std::vector<decltype(f(std::size_t{0}))> {
  using Result = decltype(f(std::size_t{0}));
  std::vector<Result> out(count);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) out[i] = f(i);
    });
  }
  workers.clear();
  return out;
}

// ---------------------------------------------------------------------------
// Scenario and data generation
// ---------------------------------------------------------------------------

struct Contamination {
  double fraction = 0.10;
  double x_star = 1.0;
  std::vector<double> y_star_grid;  // default: 8, 8.2, ..., 50

  static std::vector<double> default_grid() { return grid(8.0, 50.0, 0.2); }
  static std::vector<double> grid(double from, double to, double step) {
    std::vector<double> out;
    const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(from + static_cast<double>(k) * step);
    return out;
  }
};

/// y = beta'x + u with uniform(0,1) covariates, standard normal errors and
/// logistic missingness with linear predictor slope * sum(x).
struct SimScenario {
  int n = 100;
  int p = 5;
  double beta_value = 3.0;
  double missingness_slope = 0.57;
  double error_sd = 1.0;
  int replications = 1000;
  std::uint64_t seed = 12345;
  std::optional<Contamination> contamination;

  Vector beta() const { return Vector::Constant(p, beta_value); }
  /// Centre of symmetry of the response distribution.
  double mu0() const { return beta_value * 0.5 * static_cast<double>(p); }
};

/// One replicate before masking: covariates, every response, and the indicators.
struct FullReplicate {
  Matrix x;
  Vector y;
  std::vector<std::uint8_t> observed;
};

inline FullReplicate generate_full(const SimScenario& scenario, std::uint64_t index) {
  std::mt19937_64 rng(stream_seed(scenario.seed, index));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, scenario.error_sd);
  FullReplicate out{Matrix(scenario.n, scenario.p), Vector(scenario.n),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(scenario.n))};
  for (int i = 0; i < scenario.n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < scenario.p; ++j) {
      out.x(i, j) = unif(rng);
      sum += out.x(i, j);
    }
    out.y[i] = scenario.beta_value * sum + normal(rng);
    const double prob = 1.0 / (1.0 + std::exp(-scenario.missingness_slope * sum));
    out.observed[static_cast<std::size_t>(i)] = unif(rng) < prob ? 1 : 0;
  }
  return out;
}

inline CompleteCaseSample generate_replicate(const SimScenario& scenario, std::uint64_t index) {
  FullReplicate full = generate_full(scenario, index);
  for (Eigen::Index i = 0; i < full.y.size(); ++i) {
    if (!full.observed[static_cast<std::size_t>(i)]) full.y[i] = std::numeric_limits<double>::quiet_NaN();
  }
  return CompleteCaseSample(std::move(full.x), std::move(full.y), std::move(full.observed));
}

/// Replaces round(fraction * m) observed rows by (x_star * 1, y_star). Rows are
/// chosen from the replicate's own stream so every y_star sees the same rows.
inline CompleteCaseSample contaminate(const CompleteCaseSample& sample, const SimScenario& scenario,
                                      std::uint64_t index, double fraction, double x_star, double y_star) {
  std::mt19937_64 rng(stream_seed(scenario.seed, index, 1));
  std::vector<Eigen::Index> rows = sample.observed_rows();
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(rows.size())));
  for (std::size_t k = 0; k < count && k < rows.size(); ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, rows.size() - 1);
    std::swap(rows[k], rows[pick(rng)]);
  }
  Matrix x = sample.x();
  Vector y = sample.y();
  for (std::size_t k = 0; k < count && k < rows.size(); ++k) {
    x.row(rows[k]).setConstant(x_star);
    y[rows[k]] = y_star;
  }
  return CompleteCaseSample(std::move(x), std::move(y), sample.indicators());
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

enum class Estimator { Mean, Median, MM90, MM95 };

inline std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::Mean: return "MEAN";
    case Estimator::Median: return "MEDIAN";
    case Estimator::MM90: return "MM90";
    case Estimator::MM95: return "MM95";
  }
  return "?";
}

inline Estimator estimator_from_name(const std::string& name) {
  std::string upper;
  for (char ch : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (upper == "MEAN") return Estimator::Mean;
  if (upper == "MEDIAN") return Estimator::Median;
  if (upper == "MM90") return Estimator::MM90;
  if (upper == "MM95") return Estimator::MM95;
  throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + name + "'");
}

inline std::vector<Estimator> all_estimators() {
  return {Estimator::Mean, Estimator::Median, Estimator::MM90, Estimator::MM95};
}

inline LocationSpec estimator_spec(Estimator e) {
  switch (e) {
    case Estimator::Mean: return LocationSpec::from_name("mean");
    case Estimator::Median: return LocationSpec::from_name("median");
    case Estimator::MM90: return LocationSpec::from_name("mm90");
    case Estimator::MM95: return LocationSpec::from_name("mm95");
  }
  return LocationSpec::median();
}

struct EstimatorSettings {
  RegressionKernels kernels;  // k0 = 1.57, k1 = 3.44, delta = 0.5
  SearchConfig search;
};

/// Location estimates for several estimators on one sample. MEAN uses least
/// squares; the robust estimators share one MM fit and one S-location stage.
/// Failures come back as NaN.
inline std::vector<double> estimate_suite(const CompleteCaseSample& sample, const std::vector<Estimator>& estimators,
                                          const EstimatorSettings& settings) {
  const auto model = RegressionModel::linear(static_cast<int>(sample.p()));
  std::vector<double> out(estimators.size(), std::numeric_limits<double>::quiet_NaN());
  std::optional<ConvolvedDistribution> robust;
  std::optional<SLocation> s_stage;
  bool robust_failed = false;
  for (std::size_t k = 0; k < estimators.size(); ++k) {
    try {
      if (estimators[k] == Estimator::Mean) {
        const auto fit = fit_least_squares(sample, model);
        out[k] = ConvolvedDistribution::build(fit, sample, model).mean();
        continue;
      }
      if (robust_failed) continue;
      if (!robust) {
        const auto fit = fit_mm_regression(sample, model, settings.kernels.rho0, settings.kernels.rho1,
                                           settings.kernels.delta, settings.search);
        robust = ConvolvedDistribution::build(fit, sample, model);
      }
      const LocationSpec spec = estimator_spec(estimators[k]);
      if (spec.kind == LocationKind::Median) {
        out[k] = robust->quantile(0.5);
      } else {
        if (!s_stage) s_stage = s_location(*robust, spec.rho0, spec.delta);
        out[k] = mm_location(*robust, *s_stage, spec.rho1).value;
      }
    } catch (const Error&) {
      if (estimators[k] != Estimator::Mean) robust_failed = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

struct EstimatorSummary {
  std::string name;
  double mse = 0.0;
  double bias = 0.0;
  double efficiency = std::numeric_limits<double>::quiet_NaN();  // MSE(MEAN) / MSE
  int failures = 0;
};

struct SimReport {
  std::vector<EstimatorSummary> estimators;
  int replications = 0;
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;
  double mu0 = 0.0;
};

struct SweepReport {
  double x_star = 0.0;
  double fraction = 0.0;
  std::vector<double> y_star;
  std::vector<std::string> names;
  std::vector<std::vector<double>> mse;  // [estimator][grid point]
  int replications = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<EstimatorSummary> summarise(const std::vector<std::vector<double>>& estimates,
                                               const std::vector<Estimator>& estimators, double mu0) {
  std::vector<EstimatorSummary> out;
  for (std::size_t k = 0; k < estimators.size(); ++k) {
    EstimatorSummary s;
    s.name = estimator_name(estimators[k]);
    double sq = 0.0, bias = 0.0;
    int ok = 0;
    for (const auto& rep : estimates) {
      const double v = rep[k];
      if (!std::isfinite(v)) {
        ++s.failures;
        continue;
      }
      sq += (v - mu0) * (v - mu0);
      bias += v - mu0;
      ++ok;
    }
    s.mse = ok > 0 ? sq / ok : std::numeric_limits<double>::quiet_NaN();
    s.bias = ok > 0 ? bias / ok : std::numeric_limits<double>::quiet_NaN();
    out.push_back(s);
  }
  const auto mean_it = std::find_if(out.begin(), out.end(), [](const auto& s) { return s.name == "MEAN"; });
  if (mean_it != out.end()) {
    for (auto& s : out) s.efficiency = mean_it->mse / s.mse;
  }
  return out;
}

}  // namespace detail

/// Clean-data study: MSE of each estimator against mu0 and efficiency relative to MEAN.
inline SimReport run_study(const SimScenario& scenario, const std::vector<Estimator>& estimators,
                           const EstimatorSettings& settings = {}, unsigned threads = 1) {
  const auto start = std::chrono::steady_clock::now();
  auto estimates = parallel_map(static_cast<std::size_t>(scenario.replications), threads, [&](std::size_t i) {
    const auto sample = generate_replicate(scenario, i);
    EstimatorSettings local = settings;
    local.search.seed = stream_seed(scenario.seed, i, 2);
    return estimate_suite(sample, estimators, local);
  });
  SimReport report;
  report.estimators = detail::summarise(estimates, estimators, scenario.mu0());
  report.replications = scenario.replications;
  report.seed = scenario.seed;
  report.mu0 = scenario.mu0();
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// MSE curves over the y* grid with a fixed fraction of observed rows replaced by
/// (x*, y*). Replicates and replaced rows are shared across grid points.
inline SweepReport run_contamination_sweep(const SimScenario& scenario, const Contamination& contamination,
                                           const std::vector<Estimator>& estimators,
                                           const EstimatorSettings& settings = {}, unsigned threads = 1) {
  const auto& grid = contamination.y_star_grid.empty() ? Contamination::default_grid() : contamination.y_star_grid;
  const std::size_t reps = static_cast<std::size_t>(scenario.replications);
  const std::size_t jobs = reps * grid.size();
  auto estimates = parallel_map(jobs, threads, [&](std::size_t job) {
    const std::size_t g = job / reps;
    const std::size_t i = job % reps;
    const auto clean = generate_replicate(scenario, i);
    const auto dirty = contaminate(clean, scenario, i, contamination.fraction, contamination.x_star, grid[g]);
    EstimatorSettings local = settings;
    local.search.seed = stream_seed(scenario.seed, i, 2);
    return estimate_suite(dirty, estimators, local);
  });
  SweepReport out;
  out.x_star = contamination.x_star;
  out.fraction = contamination.fraction;
  out.y_star = grid;
  out.replications = scenario.replications;
  out.seed = scenario.seed;
  for (auto e : estimators) out.names.push_back(estimator_name(e));
  out.mse.assign(estimators.size(), std::vector<double>(grid.size(), 0.0));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<std::vector<double>> block(estimates.begin() + static_cast<std::ptrdiff_t>(g * reps),
                                           estimates.begin() + static_cast<std::ptrdiff_t>((g + 1) * reps));
    const auto summary = detail::summarise(block, estimators, scenario.mu0());
    for (std::size_t k = 0; k < estimators.size(); ++k) out.mse[k][g] = summary[k].mse;
  }
  return out;
}

inline std::string format_table(const SimReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "Estimates ";
  for (const auto& s : report.estimators) out << '\t' << s.name;
  out << "\nMSE       ";
  for (const auto& s : report.estimators) out << '\t' << s.mse;
  out << "\nEfficiency";
  out.precision(1);
  for (const auto& s : report.estimators) out << '\t' << 100.0 * s.efficiency << '%';
  out << "\nreplications=" << report.replications << " seed=" << report.seed << '\n';
  return out.str();
}

inline std::string format_csv(const SimReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "estimator,mse,bias,efficiency,failures,replications,seed\n";
  for (const auto& s : report.estimators) {
    out << s.name << ',' << s.mse << ',' << s.bias << ',' << s.efficiency << ',' << s.failures << ','
        << report.replications << ',' << report.seed << '\n';
  }
  return out.str();
}

inline std::string format_csv(const SweepReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "x_star,y_star";
  for (const auto& name : report.names) out << ",mse_" << name;
  out << '\n';
  for (std::size_t g = 0; g < report.y_star.size(); ++g) {
    out << report.x_star << ',' << report.y_star[g];
    for (const auto& curve : report.mse) out << ',' << curve[g];
    out << '\n';
  }
  return out.str();
}

}  // namespace marloc
