#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "marloc/error.hpp"

namespace marloc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ModelKind { Linear, UserDifferentiable };

/// Regression function g(x, beta) with its gradient in beta. The linear kind is
/// g = beta'x with no intercept column; the error centre is estimated separately.
struct RegressionModel {
  using Function = std::function<double(const Vector& x, const Vector& beta)>;
  using Gradient = std::function<Vector(const Vector& x, const Vector& beta)>;

  ModelKind kind = ModelKind::Linear;
  int parameter_count = 0;
  Function g;
  Gradient g_dot;
  Vector beta_start;  // Gauss-Newton starting point for the user kind

  static RegressionModel linear(int p) {
    RegressionModel model;
    model.kind = ModelKind::Linear;
    model.parameter_count = p;
    model.g = [](const Vector& x, const Vector& beta) { return beta.dot(x); };
    model.g_dot = [](const Vector& x, const Vector&) { return Vector(x); };
    model.beta_start = Vector::Zero(p);
    return model;
  }

  static RegressionModel differentiable(int q, Function g, Gradient g_dot, Vector beta_start) {
    if (beta_start.size() != q) {
      throw Error(ErrorCode::InvalidArgument, "starting value must have q entries");
    }
    RegressionModel model;
    model.kind = ModelKind::UserDifferentiable;
    model.parameter_count = q;
    model.g = std::move(g);
    model.g_dot = std::move(g_dot);
    model.beta_start = std::move(beta_start);
    return model;
  }

  int q() const noexcept { return parameter_count; }

  double value(const Matrix& x, Eigen::Index row, const Vector& beta) const {
    if (kind == ModelKind::Linear) return x.row(row).dot(beta);
    return g(x.row(row).transpose(), beta);
  }

  /// g(x_i, beta) for every row of x.
  Vector predict(const Matrix& x, const Vector& beta) const {
    if (kind == ModelKind::Linear) return x * beta;
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = g(x.row(i).transpose(), beta);
    return out;
  }

  /// Rows are g_dot(x_i, beta).
  Matrix jacobian(const Matrix& x, const Vector& beta) const {
    if (kind == ModelKind::Linear) return x;
    Matrix out(x.rows(), parameter_count);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = g_dot(x.row(i).transpose(), beta).transpose();
    return out;
  }
};

/// Largest absolute gap between g_dot and central differences of g over random
/// probes around beta_start.
inline double gradient_check(const RegressionModel& model, int p, int probes, std::uint64_t seed,
                             double h = 1e-6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int probe = 0; probe < probes; ++probe) {
    Vector x(p);
    Vector beta(model.q());
    for (auto& v : x) v = normal(rng);
    for (int j = 0; j < model.q(); ++j) beta[j] = model.beta_start[j] + 0.5 * normal(rng);
    const Vector analytic = model.g_dot(x, beta);
    for (int j = 0; j < model.q(); ++j) {
      Vector up = beta;
      Vector down = beta;
      up[j] += h;
      down[j] -= h;
      const double numeric = (model.g(x, up) - model.g(x, down)) / (2.0 * h);
      worst = std::max(worst, std::fabs(numeric - analytic[j]));
    }
  }
  return worst;
}

/// Covariates for all n units, responses only where the missingness indicator is 1.
class CompleteCaseSample {
 public:
  CompleteCaseSample() = default;

  /// y holds NaN in missing slots; observed[i] must be 1 exactly when y[i] is finite.
  CompleteCaseSample(Matrix x, Vector y, std::vector<std::uint8_t> observed)
      : x_(std::move(x)), y_(std::move(y)), observed_(std::move(observed)) {
    if (y_.size() != x_.rows() || static_cast<Eigen::Index>(observed_.size()) != x_.rows()) {
      throw Error(ErrorCode::InvalidArgument, "x, y and indicator lengths differ");
    }
    if (!x_.allFinite()) throw Error(ErrorCode::MissingCovariate, "covariates must be finite for every row");
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      const bool present = std::isfinite(y_[i]);
      if (present != (observed_[static_cast<std::size_t>(i)] != 0)) {
        throw Error(ErrorCode::IndicatorConflict, "row " + std::to_string(i) + ": indicator disagrees with response");
      }
      if (present) observed_rows_.push_back(i);
    }
  }

  static CompleteCaseSample from_responses(Matrix x, Vector y) {
    std::vector<std::uint8_t> observed(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) observed[static_cast<std::size_t>(i)] = std::isfinite(y[i]) ? 1 : 0;
    return CompleteCaseSample(std::move(x), std::move(y), std::move(observed));
  }

  Eigen::Index n() const noexcept { return x_.rows(); }
  Eigen::Index m() const noexcept { return static_cast<Eigen::Index>(observed_rows_.size()); }
  Eigen::Index p() const noexcept { return x_.cols(); }

  const Matrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  bool observed(Eigen::Index i) const { return observed_[static_cast<std::size_t>(i)] != 0; }
  const std::vector<std::uint8_t>& indicators() const noexcept { return observed_; }
  const std::vector<Eigen::Index>& observed_rows() const noexcept { return observed_rows_; }

  Matrix observed_x() const {
    Matrix out(m(), p());
    for (Eigen::Index k = 0; k < m(); ++k) out.row(k) = x_.row(observed_rows_[static_cast<std::size_t>(k)]);
    return out;
  }

  Vector observed_y() const {
    Vector out(m());
    for (Eigen::Index k = 0; k < m(); ++k) out[k] = y_[observed_rows_[static_cast<std::size_t>(k)]];
    return out;
  }

 private:
  Matrix x_;
  Vector y_;
  std::vector<std::uint8_t> observed_;
  std::vector<Eigen::Index> observed_rows_;
};

}  // namespace marloc
