#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "marloc/error.hpp"

namespace marloc {

/// Linear-interpolation quantile of an already sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Silverman's rule of thumb, 0.9 min(sd, IQR / 1.34) N^(-1/5). Falls back to
/// whichever spread is nonzero.
inline double silverman_bandwidth(std::span<const double> sample) {
  if (sample.size() < 2) throw Error(ErrorCode::ZeroDensity, "bandwidth needs at least two points");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(sorted.size() - 1));
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw Error(ErrorCode::ZeroDensity, "sample has no spread");
  return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

/// Gaussian kernel density estimate at one point.
inline double gaussian_kde(std::span<const double> sample, double bandwidth, double at) {
  const double norm = 1.0 / (static_cast<double>(sample.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  double total = 0.0;
  for (double v : sample) {
    const double z = (at - v) / bandwidth;
    total += std::exp(-0.5 * z * z);
  }
  return total * norm;
}

}  // namespace marloc
