#pragma once

#include <cmath>

namespace marloc {

enum class RhoFamily { TukeyBisquare };

/// Bounded rho-function with its first two derivatives. The bisquare
/// satisfies rho(t) = 1 exactly when |t| >= k and is C2 everywhere.
struct RhoKernel {
  RhoFamily family = RhoFamily::TukeyBisquare;
  double k = 1.0;

  static constexpr RhoKernel tukey(double k) noexcept { return {RhoFamily::TukeyBisquare, k}; }

  double rho(double t) const noexcept {
    const double u = t / k;
    const double u2 = u * u;
    if (u2 >= 1.0) return 1.0;
    const double v = 1.0 - u2;
    return 1.0 - v * v * v;
  }

  double psi(double t) const noexcept {
    const double u = t / k;
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    const double v = 1.0 - u2;
    return 6.0 * t / (k * k) * v * v;
  }

  double psi_prime(double t) const noexcept {
    const double u = t / k;
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    return 6.0 / (k * k) * (1.0 - u2) * (1.0 - 5.0 * u2);
  }

  /// IRWLS weight psi(t)/t, with the removable singularity at 0 filled by psi'(0).
  double weight(double t) const noexcept {
    const double u = t / k;
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    const double v = 1.0 - u2;
    return 6.0 / (k * k) * v * v;
  }
};

inline double rho(const RhoKernel& kernel, double t) noexcept { return kernel.rho(t); }
inline double psi(const RhoKernel& kernel, double t) noexcept { return kernel.psi(t); }
inline double psi_prime(const RhoKernel& kernel, double t) noexcept { return kernel.psi_prime(t); }

/// Tuning constants used by the reference Monte Carlo design.
namespace tuning {
inline constexpr double kScaleBisquare = 1.57;        // rho_0, 50% breakdown with delta = 0.5
inline constexpr double kRegressionMM85 = 3.44;       // rho_1 for the regression MM fit
inline constexpr double kLocationMM90 = 3.88;
inline constexpr double kLocationMM95 = 4.68;
inline constexpr double kDelta = 0.5;
}  // namespace tuning

}  // namespace marloc
