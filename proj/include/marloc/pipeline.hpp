#pragma once

#include <optional>
#include <string>
#include <vector>

#include "marloc/convolution.hpp"
#include "marloc/inference.hpp"
#include "marloc/location.hpp"
#include "marloc/model.hpp"
#include "marloc/regression.hpp"

namespace marloc {

struct PipelineOptions {
  RegressionKernels kernels;
  SearchConfig search;
  /// Regression used for the residuals; defaults to least squares for the mean
  /// functional and MM otherwise.
  std::optional<FitMethod> regression;
  bool compute_se = true;
  VarianceOptions variance;
};

struct PipelineResult {
  RegressionFit fit;
  ConvolvedDistribution distribution;
  LocationResult location;
  std::optional<VarianceEstimate> variance;
  std::vector<std::string> warnings;
};

inline FitMethod default_regression(const LocationSpec& spec) {
  return spec.kind == LocationKind::Mean ? FitMethod::LeastSquares : FitMethod::MM;
}

inline RegressionFit fit_regression(FitMethod method, const CompleteCaseSample& sample, const RegressionModel& model,
                                    const RegressionKernels& kernels, const SearchConfig& search) {
  switch (method) {
    case FitMethod::LeastSquares: return fit_least_squares(sample, model);
    case FitMethod::S: return fit_s_regression(sample, model, kernels.rho0, kernels.delta, search);
    case FitMethod::MM: break;
  }
  return fit_mm_regression(sample, model, kernels.rho0, kernels.rho1, kernels.delta, search);
}

/// Complete-case regression, convolution of predictions and residuals, location
/// functional, and optionally its plug-in standard error.
inline PipelineResult run_pipeline(const CompleteCaseSample& sample, const RegressionModel& model,
                                   const LocationSpec& spec, const PipelineOptions& options = {}) {
  if (sample.m() == 0) throw Error(ErrorCode::EmptyObservedSet, "no observed responses");
  PipelineResult out;
  const FitMethod method = options.regression.value_or(default_regression(spec));
  out.fit = fit_regression(method, sample, model, options.kernels, options.search);
  if (out.fit.exact_fit) out.warnings.emplace_back("exact_fit: residual scale is zero");
  if (out.fit.rank_deficient) out.warnings.emplace_back("rank_deficient: observed design is not of full rank");
  if (!out.fit.converged) out.warnings.emplace_back("regression_not_converged");
  out.distribution = ConvolvedDistribution::build(out.fit, sample, model);
  out.location = evaluate(spec, out.distribution);
  if (out.location.degenerate_scale) out.warnings.emplace_back("degenerate_location_scale");
  if (options.compute_se) {
    try {
      out.variance = estimate_tau_sq(spec, out.fit, sample, model, out.distribution, out.location, options.kernels,
                                     options.variance);
      if (out.variance->subsampled) out.warnings.emplace_back("subsampled_pair_sums");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConstant && e.code() != ErrorCode::ZeroDensity &&
          e.code() != ErrorCode::SingularA0) {
        throw;
      }
      out.warnings.emplace_back(std::string("standard_error_unavailable: ") + e.what());
    }
  }
  return out;
}

}  // namespace marloc
