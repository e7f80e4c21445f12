#include "mkc/kc_verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mkc/errors.hpp"

namespace mkc {

void HolderConstants::validate() const {
  if (!(eta_n > 0.0 && eta_n < 1.0)) throw InvalidInput("eta_n must lie in (0, 1)");
  if (!(C_n > 0.0)) throw InvalidInput("C_n must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (!(K_gamma > 0.0)) throw InvalidInput("K_gamma must be positive");
}

double holder_constant(const HolderConstants& hc) {
  hc.validate();
  const double eg = std::pow(hc.eta_n, hc.gamma);
  if (eg >= 1.0) throw DomainError("eta_n^gamma rounds to 1");
  return 2.0 * hc.K_gamma * std::pow(hc.C_n, 2.0 * hc.gamma) / (eg * (1.0 - eg));
}

HolderConstants chart_holder_constants(const Chart& c, double gamma, double K_gamma) {
  HolderConstants hc{0.5, 1.0 / (2.0 * c.radius), gamma, K_gamma};
  hc.validate();
  return hc;
}

bool grid_contraction_holds(const HolderConstants& hc, double chart_radius, int k_lo, int k_hi) {
  hc.validate();
  for (int k = k_lo; k <= k_hi; ++k) {
    const double delta = std::ldexp(chart_radius, 1 - k);
    const double ek = std::pow(hc.eta_n, k);
    if (!(ek / hc.C_n <= delta && delta <= hc.C_n * ek)) return false;
  }
  return true;
}

WilsonInterval wilson_interval(double successes, double trials, double z) {
  if (!(trials > 0.0)) return {0.0, 1.0};
  const double p = successes / trials;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / trials;
  const double center = (p + z2 / (2.0 * trials)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

bool TailReport::passed() const {
  return !bins.empty() && std::all_of(bins.begin(), bins.end(), [](const TailBin& b) { return b.pass; });
}

TailReport tail_check(const FieldSample& sample, const Manifold& M, const RateFunctions& rates, int bins,
                      double confidence) {
  rates.validate();
  if (bins < 1) throw InvalidInput("bins must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidInput("confidence must lie in (0, 1)");
  const std::size_t n = sample.size();
  const auto R = static_cast<Eigen::Index>(sample.replicates());
  if (R < 1) throw InsufficientData("tail_check: sample has no replicates");

  struct PairInfo {
    Eigen::Index i, j;
    double d, r;
  };
  std::vector<PairInfo> pairs;
  double h_min = std::numeric_limits<double>::infinity(), h_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = geodesic_distance(M, sample.points[i], sample.points[j]);
      if (!(d > 0.0 && d < rates.rho)) continue;
      pairs.push_back({static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), d, rates.r(d)});
      h_min = std::min(h_min, d);
      h_max = std::max(h_max, d);
    }
  }
  if (pairs.empty()) throw InsufficientData("tail_check: no pair at distance below rho");

  const auto edges = log_bin_edges(h_min, h_max, bins);
  const double lo = std::log(h_min);
  const double width = (std::log(h_max) - lo) / bins;
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int b = width > 0.0 ? static_cast<int>((std::log(pairs[p].d) - lo) / width) : 0;
    members[std::clamp(b, 0, bins - 1)].push_back(p);
  }

  const double z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * confidence);
  TailReport rep;
  rep.confidence = confidence;
  for (int b = 0; b < bins; ++b) {
    if (members[b].empty()) continue;
    TailBin bin;
    bin.h_lo = edges[b];
    bin.h_hi = edges[b + 1];
    bin.pairs = members[b].size();
    double bin_max = 0.0;
    double count = 0.0;
    for (std::size_t p : members[b]) {
      const auto& pi = pairs[p];
      bin_max = std::max(bin_max, pi.d);
      for (Eigen::Index r = 0; r < R; ++r) {
        if (std::abs(sample.values(r, pi.i) - sample.values(r, pi.j)) > pi.r) count += 1.0;
      }
    }
    bin.trials = static_cast<double>(members[b].size()) * static_cast<double>(R);
    bin.exceedances = count;
    bin.freq = count / bin.trials;
    const auto ci = wilson_interval(count, bin.trials, z);
    bin.ci_lo = ci.lo;
    bin.ci_hi = ci.hi;
    bin.bound = rates.q(bin_max);
    if (count == 0.0) {
      bin.p_value = 1.0;
    } else if (bin.bound >= 1.0) {
      bin.p_value = 1.0;
    } else if (bin.bound <= 0.0) {
      bin.p_value = 0.0;
    } else {
      const boost::math::binomial binom(bin.trials, bin.bound);
      bin.p_value = boost::math::cdf(boost::math::complement(binom, count - 1.0));
    }
    bin.pass = bin.ci_hi <= bin.bound;
    rep.bins.push_back(bin);
  }
  return rep;
}

double log_erfc(double x) {
  if (x < 20.0) return std::log(std::erfc(x));
  // Asymptotic series erfc(x) ~ exp(-x^2) / (x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4)).
  const double x2 = x * x;
  return -x2 - std::log(x * std::sqrt(std::numbers::pi)) + std::log1p(-0.5 / x2 + 0.75 / (x2 * x2));
}

std::vector<TailPredicateRow> gaussian_tail_predicate(const CovarianceModel& model, const RateFunctions& rates,
                                                      const std::vector<double>& h_grid) {
  model.validate();
  rates.validate();
  std::vector<TailPredicateRow> out;
  out.reserve(h_grid.size());
  for (double h : h_grid) {
    if (!(h > 0.0)) throw DomainError("gaussian_tail_predicate: h must be positive");
    const RateValues v = rate_eval(rates, h);
    TailPredicateRow row;
    row.h = h;
    row.sigma = std::sqrt(model.variogram(h));
    row.r = v.r;
    row.q = v.q;
    row.log_tail = log_erfc(v.r / (row.sigma * std::numbers::sqrt2));
    row.log_margin = std::log(v.q) - row.log_tail;
    row.holds = row.log_margin >= 0.0;
    out.push_back(row);
  }
  return out;
}

double minimal_tail_constant(const CovarianceModel& model, const RateFunctions& rates,
                             const std::vector<double>& h_grid) {
  RateFunctions unit = rates;
  unit.K = 1.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& row : gaussian_tail_predicate(model, unit, h_grid)) worst = std::max(worst, -row.log_margin);
  return std::exp(worst);
}

void validate_levels(const std::vector<LevelSample>& levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& ls = levels[i];
    if (ls.sample.size() != ls.grid.size()) throw InvalidInput("level sample size differs from its grid");
    if (i > 0) {
      if (ls.grid.level() != levels[i - 1].grid.level() + 1) throw InvalidInput("levels must be consecutive");
      if (ls.sample.replicates() != levels[i - 1].sample.replicates()) {
        throw InvalidInput("levels differ in replicate count");
      }
    }
  }
}

HolderEstimate holder_estimate(const std::vector<LevelSample>& levels) {
  if (levels.size() < 3) throw InsufficientData("holder_estimate: need at least three levels");
  validate_levels(levels);
  HolderEstimate est;
  const std::size_t R = levels.front().sample.replicates();
  if (R < 1) throw InsufficientData("holder_estimate: no replicates");

  bool all_zero = true;
  for (const auto& ls : levels) {
    const PairSet ps = pair_set(ls.grid);
    std::vector<double> maxima(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const auto row = ls.sample.values.row(static_cast<Eigen::Index>(r));
      double mx = 0.0;
      for (const auto& [i, j] : ps.pairs) mx = std::max(mx, std::abs(row(i) - row(j)));
      maxima[r] = mx;
    }
    std::sort(maxima.begin(), maxima.end());
    const double median = R % 2 == 1 ? maxima[R / 2] : 0.5 * (maxima[R / 2 - 1] + maxima[R / 2]);
    if (median > 0.0) all_zero = false;
    est.levels.push_back({ls.grid.level(), ls.grid.spacing(), median, 0.0, static_cast<double>(ps.count())});
  }
  if (all_zero) {
    est.degenerate = true;
    return est;
  }
  if (std::any_of(est.levels.begin(), est.levels.end(), [](const HolderLevel& l) { return l.median_max_increment <= 0.0; })) {
    throw InsufficientData("holder_estimate: some level has a vanishing median increment");
  }

  const auto n = static_cast<double>(est.levels.size());
  double sx = 0, sy = 0;
  for (const auto& l : est.levels) {
    sx += std::log(l.delta);
    sy += std::log(l.median_max_increment);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& l : est.levels) {
    const double dx = std::log(l.delta) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(l.median_max_increment) - my);
  }
  est.gamma_hat = sxy / sxx;
  est.intercept = my - est.gamma_hat * mx;
  double rss = 0.0;
  for (auto& l : est.levels) {
    l.residual = std::log(l.median_max_increment) - (est.intercept + est.gamma_hat * std::log(l.delta));
    rss += l.residual * l.residual;
  }
  est.std_error = n > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : std::numeric_limits<double>::infinity();
  est.in_unit_interval = est.gamma_hat > 0.0 && est.gamma_hat < 1.0;

  // Same regression after dividing out sqrt(2 ln |pi_k|), the growth of the maximum of
  // |pi_k| Gaussian increments of equal variance.
  double sxy_c = 0.0;
  bool corrected = true;
  for (const auto& l : est.levels) {
    if (!(l.pairs > 1.0)) corrected = false;
    if (!corrected) break;
    const double y = std::log(l.median_max_increment) - 0.5 * std::log(2.0 * std::log(l.pairs));
    sxy_c += (std::log(l.delta) - mx) * y;
  }
  est.gamma_hat_log_corrected = corrected ? sxy_c / sxx : std::numeric_limits<double>::quiet_NaN();
  return est;
}

ChainingResult chaining_reconstruct(const std::vector<LevelSample>& levels, const Point& x,
                                    const std::optional<RateFunctions>& rates) {
  if (levels.empty()) throw InsufficientData("chaining_reconstruct: no levels");
  validate_levels(levels);
  const Chart& chart = levels.front().grid.chart();
  if (!in_chart_domain(chart, x)) throw DomainError("chaining_reconstruct: point outside the chart domain");
  const Eigen::VectorXd a = chart_coords(chart, x);

  ChainingResult out;
  const auto R = static_cast<Eigen::Index>(levels.front().sample.replicates());
  for (const auto& ls : levels) {
    ChainLevel cl;
    cl.k = ls.grid.level();
    cl.delta = ls.grid.spacing();
    cl.nearest = ls.grid.nearest(a);
    cl.values = ls.sample.values.col(static_cast<Eigen::Index>(cl.nearest));
    out.levels.push_back(std::move(cl));
  }
  const auto steps = static_cast<Eigen::Index>(out.levels.size()) - 1;
  out.diffs = Eigen::MatrixXd::Zero(R, std::max<Eigen::Index>(steps, 0));
  for (Eigen::Index s = 0; s < steps; ++s) {
    out.diffs.col(s) = (out.levels[s + 1].values - out.levels[s].values).cwiseAbs();
    if (rates) {
      const double threshold = rates->r(out.levels[s + 1].delta);
      const double hits = (out.diffs.col(s).array() > threshold).cast<double>().sum();
      out.exceed_fraction.push_back(R > 0 ? hits / static_cast<double>(R) : 0.0);
    }
  }
  out.limit = out.levels.back().values;

  std::vector<double> ks, logs;
  for (Eigen::Index s = 0; s < steps; ++s) {
    const double mean = R > 0 ? out.diffs.col(s).mean() : 0.0;
    if (mean > 0.0) {
      ks.push_back(out.levels[s].k);
      logs.push_back(std::log(mean));
    }
  }
  if (ks.size() < 2) {
    out.decay_ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double n = static_cast<double>(ks.size());
    double mk = 0, ml = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      mk += ks[i];
      ml += logs[i];
    }
    mk /= n;
    ml /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      sxx += (ks[i] - mk) * (ks[i] - mk);
      sxy += (ks[i] - mk) * (logs[i] - ml);
    }
    out.decay_ratio = std::exp(sxy / sxx);
  }
  return out;
}

FieldSample deterministic_field(const DyadicGrid& grid, const std::function<double(const Eigen::VectorXd&)>& f) {
  FieldSample s;
  s.points = grid.points();
  s.values.resize(1, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s.values(0, static_cast<Eigen::Index>(i)) = f(grid.coords().col(static_cast<Eigen::Index>(i)));
  }
  return s;
}

}  // namespace mkc
