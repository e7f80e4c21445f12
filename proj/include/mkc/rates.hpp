#pragma once

#include <string>

namespace mkc {

/// r(h) = log2(1/h)^{-beta} (LogRate) or r(h) = h^gamma (PowerRate).
enum class RateVariant { LogRate, PowerRate };

std::string to_string(RateVariant v);
RateVariant rate_variant_from_string(const std::string& name);

/// Increment-size function r and tail-probability function q on [0, rho), with
/// q(h) = K log2(1/h)^{-alpha} h^m in both variants and r(0) = q(0) = 0.
struct RateFunctions {
  RateVariant variant = RateVariant::LogRate;
  double rho = 1.0;
  double beta = 2.0;
  double gamma = 0.5;
  double K = 1.0;
  double alpha = 2.0;
  int m = 1;
  double K_gamma = 1.0;  // constant of the bound r(h) <= K_gamma h^gamma

  /// Throws InvalidInput unless rho in (0,1], alpha > 1, K >= 0, m >= 1, and
  /// beta > 1 (LogRate) or gamma in (0,1) with K_gamma > 0 (PowerRate).
  void validate() const;

  double r(double h) const;
  double q(double h) const;
};

struct RateValues {
  double r;
  double q;
};

/// Evaluates (r(h), q(h)). Throws DomainError for h < 0 or h >= rho.
RateValues rate_eval(const RateFunctions& rates, double h);

/// Checks strict increase of r and q on `points` equally spaced abscissae in (0, rho).
bool rates_strictly_increasing(const RateFunctions& rates, int points = 1000);

/// Checks r(h) <= K_gamma h^gamma on the same kind of grid.
bool power_bound_holds(const RateFunctions& rates, int points = 1000);

}  // namespace mkc
