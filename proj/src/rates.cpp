#include "mkc/rates.hpp"

#include <cmath>

#include "mkc/errors.hpp"

namespace mkc {

std::string to_string(RateVariant v) { return v == RateVariant::LogRate ? "log" : "power"; }

RateVariant rate_variant_from_string(const std::string& name) {
  if (name == "log") return RateVariant::LogRate;
  if (name == "power") return RateVariant::PowerRate;
  throw InvalidInput("unknown rate variant '" + name + "' (expected 'log' or 'power')");
}

void RateFunctions::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidInput("rho must lie in (0, 1]");
  if (!(alpha > 1.0)) throw InvalidInput("alpha must exceed 1");
  if (!(K >= 0.0) || !std::isfinite(K)) throw InvalidInput("K must be nonnegative");
  if (m < 1) throw InvalidInput("dimension m must be >= 1");
  if (variant == RateVariant::LogRate && !(beta > 1.0)) throw InvalidInput("beta must exceed 1");
  if (variant == RateVariant::PowerRate) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
    if (!(K_gamma > 0.0)) throw InvalidInput("K_gamma must be positive");
  }
}

double RateFunctions::r(double h) const {
  if (h == 0.0) return 0.0;
  if (variant == RateVariant::PowerRate) return std::pow(h, gamma);
  return std::pow(std::log2(1.0 / h), -beta);
}

double RateFunctions::q(double h) const {
  if (h == 0.0 || K == 0.0) return 0.0;
  return K * std::pow(std::log2(1.0 / h), -alpha) * std::pow(h, m);
}

RateValues rate_eval(const RateFunctions& rates, double h) {
  rates.validate();
  if (!(h >= 0.0) || !(h < rates.rho)) throw DomainError("rate functions are defined on [0, rho) only");
  return {rates.r(h), rates.q(h)};
}

bool rates_strictly_increasing(const RateFunctions& rates, int points) {
  rates.validate();
  double prev_r = 0.0, prev_q = 0.0;  // values at h = 0
  for (int i = 1; i <= points; ++i) {
    const double h = rates.rho * i / (points + 1.0);
    const RateValues v = rate_eval(rates, h);
    if (!(v.r > prev_r) || !(v.q > prev_q)) return false;
    prev_r = v.r;
    prev_q = v.q;
  }
  return true;
}

bool power_bound_holds(const RateFunctions& rates, int points) {
  rates.validate();
  for (int i = 1; i <= points; ++i) {
    const double h = rates.rho * i / (points + 1.0);
    if (rates.r(h) > rates.K_gamma * std::pow(h, rates.gamma)) return false;
  }
  return true;
}

}  // namespace mkc
