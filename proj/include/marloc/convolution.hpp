#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "marloc/error.hpp"
#include "marloc/model.hpp"
#include "marloc/regression.hpp"

namespace marloc {

namespace detail {

/// Order-preserving map from doubles to signed integers (for bisection over
/// representable values).
inline std::int64_t ordered_bits(double x) {
  const auto bits = std::bit_cast<std::int64_t>(x);
  return bits >= 0 ? bits : std::numeric_limits<std::int64_t>::min() - bits;
}

inline double from_ordered_bits(std::int64_t v) {
  const std::int64_t bits = v >= 0 ? v : std::numeric_limits<std::int64_t>::min() - v;
  return std::bit_cast<double>(bits);
}

/// Smallest k with k / total >= p.
inline std::uint64_t lower_quantile_rank(double p, std::uint64_t total) {
  const double n = static_cast<double>(total);
  auto k = static_cast<std::uint64_t>(std::ceil(p * n));
  k = std::clamp<std::uint64_t>(k, 1, total);
  while (k > 1 && static_cast<double>(k - 1) / n >= p) --k;
  while (k < total && static_cast<double>(k) / n < p) ++k;
  return k;
}

}  // namespace detail

/// Uniform empirical distribution over the n*m sums prediction_j + residual_i,
/// held as its two sorted component samples.
class ConvolvedDistribution {
 public:
  ConvolvedDistribution() = default;

  ConvolvedDistribution(std::vector<double> predictions, std::vector<double> residuals)
      : predictions_(std::move(predictions)), residuals_(std::move(residuals)) {
    if (residuals_.empty()) throw Error(ErrorCode::EmptyObservedSet, "no residuals to convolve");
    if (predictions_.empty()) throw Error(ErrorCode::EmptyDistribution, "no predictions to convolve");
    std::sort(predictions_.begin(), predictions_.end());
    std::sort(residuals_.begin(), residuals_.end());
  }

  /// Predictions over all n rows, residuals over the observed rows of the fit.
  static ConvolvedDistribution build(const RegressionFit& fit, const CompleteCaseSample& sample,
                                     const RegressionModel& model) {
    if (sample.m() == 0 || fit.residuals_observed.empty()) {
      throw Error(ErrorCode::EmptyObservedSet, "no observed responses");
    }
    const Vector pred = model.predict(sample.x(), fit.beta_hat);
    return ConvolvedDistribution(std::vector<double>(pred.data(), pred.data() + pred.size()),
                                 fit.residuals_observed);
  }

  std::size_t n() const noexcept { return predictions_.size(); }
  std::size_t m() const noexcept { return residuals_.size(); }
  std::uint64_t size() const noexcept { return static_cast<std::uint64_t>(n()) * m(); }
  const std::vector<double>& predictions_sorted() const noexcept { return predictions_; }
  const std::vector<double>& residuals_sorted() const noexcept { return residuals_; }

  double min() const noexcept { return predictions_.front() + residuals_.front(); }
  double max() const noexcept { return predictions_.back() + residuals_.back(); }

  /// Number of sums <= t. Two-pointer sweep; floating-point addition is monotone in
  /// each argument, so this matches a brute-force count of the rounded sums.
  std::uint64_t count_at_most(double t) const noexcept {
    std::uint64_t count = 0;
    std::size_t j = predictions_.size();
    for (double r : residuals_) {
      while (j > 0 && predictions_[j - 1] + r > t) --j;
      if (j == 0) break;
      count += j;
    }
    return count;
  }

  double cdf(double t) const noexcept {
    return static_cast<double>(count_at_most(t)) / static_cast<double>(size());
  }

  /// Lower quantile inf{t : cdf(t) >= p}; always one of the n*m sums.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    return order_statistic(detail::lower_quantile_rank(p, size()));
  }

  /// k-th smallest sum, 1-based.
  double order_statistic(std::uint64_t k) const {
    std::int64_t lo = detail::ordered_bits(min());
    std::int64_t hi = detail::ordered_bits(max());
    if (count_at_most(detail::from_ordered_bits(lo)) >= k) return detail::from_ordered_bits(lo);
    // Invariant: count(lo) < k <= count(hi).
    while (static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) > 1) {
      const std::int64_t mid = std::midpoint(lo, hi);
      if (count_at_most(detail::from_ordered_bits(mid)) >= k) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return detail::from_ordered_bits(hi);
  }

  double mean() const noexcept {
    return std::accumulate(predictions_.begin(), predictions_.end(), 0.0) / static_cast<double>(n()) +
           std::accumulate(residuals_.begin(), residuals_.end(), 0.0) / static_cast<double>(m());
  }

  /// Calls f(value, weight) for every one of the n*m points.
  template <class F>
  void visit(F&& f) const {
    const double w = 1.0 / static_cast<double>(size());
    for (double r : residuals_) {
      for (double g : predictions_) f(g + r, w);
    }
  }

  /// Mean of h over all n*m points, accumulated per residual.
  template <class H>
  double expectation(H&& h) const {
    double total = 0.0;
    for (double r : residuals_) {
      double row = 0.0;
      for (double g : predictions_) row += h(g + r);
      total += row;
    }
    return total / static_cast<double>(size());
  }

  /// Every sum, materialised and sorted; the brute-force path.
  std::vector<double> materialize() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (double r : residuals_) {
      for (double g : predictions_) out.push_back(g + r);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// CSV dump of all points (testing aid), refused above max_points.
  void write_csv(const std::string& path, std::uint64_t max_points = 1'000'000) const {
    if (size() > max_points) throw Error(ErrorCode::InvalidArgument, "convolution too large to dump");
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path);
    out.precision(17);
    out << "prediction,residual,value\n";
    for (double r : residuals_) {
      for (double g : predictions_) out << g << ',' << r << ',' << (g + r) << '\n';
    }
  }

 private:
  std::vector<double> predictions_;
  std::vector<double> residuals_;
};

/// Finite weighted sample with the same query surface as ConvolvedDistribution.
class WeightedSample {
 public:
  WeightedSample() = default;

  explicit WeightedSample(std::vector<double> values)
      : WeightedSample(values, std::vector<double>(values.size(), 1.0 / static_cast<double>(values.size()))) {}

  WeightedSample(std::vector<double> values, std::vector<double> weights) {
    if (values.empty()) throw Error(ErrorCode::EmptyDistribution, "empty sample");
    if (values.size() != weights.size()) throw Error(ErrorCode::InvalidArgument, "value/weight length mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be nonnegative");
      total += w;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "weights must sum to 1");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    values_.reserve(values.size());
    weights_.reserve(values.size());
    for (auto i : order) {
      values_.push_back(values[i]);
      weights_.push_back(weights[i]);
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double min() const noexcept { return values_.front(); }
  double max() const noexcept { return values_.back(); }

  double cdf(double t) const noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size() && values_[i] <= t; ++i) total += weights_[i];
    return std::min(total, 1.0);
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      total += weights_[i];
      if (total >= p * (1.0 - 1e-12)) return values_[i];
    }
    return values_.back();
  }

  double mean() const noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) total += weights_[i] * values_[i];
    return total;
  }

  template <class F>
  void visit(F&& f) const {
    for (std::size_t i = 0; i < values_.size(); ++i) f(values_[i], weights_[i]);
  }

  template <class H>
  double expectation(H&& h) const {
    double total = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) total += weights_[i] * h(values_[i]);
    return total;
  }

 private:
  std::vector<double> values_;
  std::vector<double> weights_;
};

}  // namespace marloc
