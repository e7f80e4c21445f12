#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_dec_float.hpp>

#include "mkc/errors.hpp"
#include "mkc/kc_verify.hpp"

using namespace mkc;
using Eigen::VectorXd;
using big = boost::multiprecision::cpp_dec_float_50;

namespace {

Chart circle_chart() {
  const Manifold S1 = Manifold::sphere(1);
  return build_chart(S1, S1.point((VectorXd(2) << 1.0, 0.0).finished()), 0);
}

Chart sphere_chart() {
  const Manifold S2 = Manifold::sphere(2);
  return build_chart(S2, S2.point((VectorXd(3) << 0.3, 0.1, 0.9).finished()), 0);
}

std::vector<LevelSample> deterministic_levels(const Chart& c, int k0, int k1,
                                              const std::function<double(const VectorXd&)>& f) {
  std::vector<LevelSample> out;
  for (int k = k0; k <= k1; ++k) {
    DyadicGrid g = dyadic_grid(c, k);
    FieldSample s = deterministic_field(g, f);
    out.push_back({std::move(g), std::move(s)});
  }
  return out;
}

std::vector<LevelSample> gaussian_levels(const Chart& c, const CovarianceModel& model, int k0, int k1,
                                         std::size_t reps, std::uint64_t seed) {
  std::vector<LevelSample> out;
  for (int k = k0; k <= k1; ++k) {
    DyadicGrid g = dyadic_grid(c, k);
    FieldSample s = out.empty() ? sample_gaussian(model, g.points(), c.manifold, reps, seed + k)
                                : conditional_refine(out.back().sample, g.points(), c.manifold, seed + k);
    out.push_back({std::move(g), std::move(s)});
  }
  return out;
}

big holder_big(big K, big C, big eta, big gamma) {
  const big eg = pow(eta, gamma);
  return 2 * K * pow(C, 2 * gamma) / (eg * (1 - eg));
}

}  // namespace

TEST_CASE("rate functions") {
  RateFunctions lr;
  CHECK(rate_eval(lr, 0.0).r == 0.0);
  CHECK(rate_eval(lr, 0.0).q == 0.0);
  CHECK(rate_eval(lr, 0.25).r == 0.25);

  RateFunctions q2;
  q2.m = 2;
  CHECK(rate_eval(q2, 0.25).q == 0.015625);

  RateFunctions pr;
  pr.variant = RateVariant::PowerRate;
  pr.gamma = 0.5;
  CHECK(rate_eval(pr, 0.09).r == doctest::Approx(0.3).epsilon(1e-15));

  CHECK_THROWS_AS(rate_eval(lr, 1.0), DomainError);
  CHECK_THROWS_AS(rate_eval(lr, -0.1), DomainError);

  for (const RateFunctions& r : {lr, q2, pr}) {
    CHECK(rates_strictly_increasing(r, 1000));
    const double step = r.rho / 1001.0;
    for (int i = 1; i < 1000; ++i) {
      CHECK(r.r(i * step) < r.r((i + 1) * step));
      CHECK(r.q(i * step) < r.q((i + 1) * step));
    }
  }
  CHECK(power_bound_holds(pr));

  RateFunctions bad;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("Hoelder constant against extended precision") {
  HolderConstants hc{0.5, 1.0, 0.5, 1.0};
  CHECK(holder_constant(hc) == doctest::Approx(9.6569).epsilon(1e-5));
  const double exact = holder_big(1, 1, big("0.5"), big("0.5")).convert_to<double>();
  CHECK(std::abs(holder_constant(hc) - exact) / exact < 1e-12);

  HolderConstants doubled = hc;
  doubled.C_n = 2.0;
  CHECK(holder_constant(doubled) == doctest::Approx(2.0 * holder_constant(hc)).epsilon(1e-14));

  HolderConstants scaled = hc;
  scaled.K_gamma = 3.0;
  CHECK(holder_constant(scaled) == doctest::Approx(3.0 * holder_constant(hc)).epsilon(1e-15));

  HolderConstants zero = hc;
  zero.gamma = 0.0;
  CHECK_THROWS_AS(holder_constant(zero), DomainError);

  const Chart c = sphere_chart();
  const HolderConstants ch = chart_holder_constants(c, 0.3, 1.0);
  CHECK(ch.eta_n == 0.5);
  CHECK(ch.C_n == 1.0 / (2.0 * c.radius));
  CHECK(grid_contraction_holds(ch, c.radius, 1, 40));
  HolderConstants tight = ch;
  tight.C_n = 0.9 / (2.0 * c.radius);
  CHECK_FALSE(grid_contraction_holds(tight, c.radius, 1, 5));
}

TEST_CASE("Wilson interval") {
  const WilsonInterval w = wilson_interval(10, 100, 1.96);
  const double p = 0.1, n = 100, z = 1.96;
  const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  CHECK(w.lo == doctest::Approx(centre - half).epsilon(1e-14));
  CHECK(w.hi == doctest::Approx(centre + half).epsilon(1e-14));
  CHECK(wilson_interval(0, 100, z).lo == 0.0);
  CHECK(wilson_interval(0, 100, z).hi == doctest::Approx(z * z / (n + z * z)).epsilon(1e-14));
}

TEST_CASE("log erfc against extended precision") {
  for (double x : {0.0, 0.5, 3.0, 10.0, 19.5, 20.0, 25.0, 40.0, 200.0, 1e4}) {
    const big e = boost::math::erfc(big(x));
    const double expected = log(e).convert_to<double>();
    CHECK(log_erfc(x) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("Gaussian tail predicate") {
  CovarianceModel model;  // C = 1, eta = 1
  RateFunctions rates;
  rates.variant = RateVariant::PowerRate;
  rates.gamma = 0.3;
  rates.m = 2;
  std::vector<double> grid;
  for (int e = 1; e <= 20; ++e) grid.push_back(std::ldexp(1.0, -e));
  grid.push_back(0.999);

  const double Kmin = minimal_tail_constant(model, rates, grid);
  CHECK(std::isfinite(Kmin));
  rates.K = 4.0 * Kmin;
  for (const auto& row : gaussian_tail_predicate(model, rates, grid)) {
    CHECK(row.holds);
    CHECK(row.log_margin >= std::log(4.0) - 1e-9);
    CHECK(std::isfinite(row.log_tail));
    CHECK(row.sigma == doctest::Approx(std::sqrt(row.h)));
    // Independent tail value: P(|N(0, h)| > h^0.3) = erfc(h^-0.2 / sqrt 2).
    const double arg = std::pow(row.h, -0.2) / std::sqrt(2.0);
    const double expected = log(boost::math::erfc(big(arg))).convert_to<double>();
    CHECK(row.log_tail == doctest::Approx(expected).epsilon(1e-9));
  }
  rates.K = 0.5 * Kmin;
  bool any_fail = false;
  for (const auto& row : gaussian_tail_predicate(model, rates, grid)) any_fail = any_fail || !row.holds;
  CHECK(any_fail);

  // gamma = eta / 2: r / sigma is constant, the tail stays fixed while q -> 0.
  rates.gamma = 0.5;
  rates.K = 1.0;
  const auto flat = gaussian_tail_predicate(model, rates, grid);
  CHECK_FALSE(flat[19].holds);
  CHECK(flat[19].log_tail == doctest::Approx(flat[10].log_tail).epsilon(1e-12));
}

TEST_CASE("empirical tail check") {
  const Chart c = sphere_chart();
  CovarianceModel model;
  const DyadicGrid g = dyadic_grid(c, 2);
  const FieldSample s = sample_gaussian(model, g.points(), c.manifold, 2000, 4);

  // r = d^0.01 dwarfs increments of a field scaled down by 100: no exceedances.
  RateFunctions wide;
  wide.m = 2;
  wide.variant = RateVariant::PowerRate;
  wide.gamma = 0.01;
  wide.K = 1e6;
  FieldSample tiny = s;
  tiny.values /= 100.0;
  const TailReport quiet = tail_check(tiny, c.manifold, wide, 6);
  for (const auto& b : quiet.bins) {
    CHECK(b.freq == 0.0);
    CHECK(b.p_value == 1.0);
  }
  CHECK(quiet.passed());

  // sigma^2 = d^0.2 against r = d^0.3: the ratio r / sigma -> 0, exceedances near 1.
  CovarianceModel rough;
  rough.eta = 0.2;
  const FieldSample rs = sample_gaussian(rough, g.points(), c.manifold, 2000, 5);
  RateFunctions strict;
  strict.m = 2;
  strict.variant = RateVariant::PowerRate;
  strict.gamma = 0.3;
  const TailReport bad = tail_check(rs, c.manifold, strict, 6);
  CHECK_FALSE(bad.passed());
  CHECK_FALSE(bad.bins.front().pass);
  CHECK(bad.bins.front().p_value < 1e-6);
  std::vector<double> hs;
  for (const auto& b : bad.bins) hs.push_back(b.h_hi);
  for (const auto& row : gaussian_tail_predicate(rough, strict, hs)) CHECK_FALSE(row.holds);

  RateFunctions small_rho = strict;
  small_rho.rho = 1e-6;
  CHECK_THROWS_AS(tail_check(rs, c.manifold, small_rho), InsufficientData);
}

TEST_CASE("Hoelder estimate") {
  const Chart c = circle_chart();
  CHECK_THROWS_AS(holder_estimate(deterministic_levels(c, 2, 3, [](const VectorXd&) { return 0.0; })),
                  InsufficientData);

  const HolderEstimate flat = holder_estimate(deterministic_levels(c, 2, 6, [](const VectorXd&) { return 1.0; }));
  CHECK(flat.degenerate);

  const HolderEstimate lin = holder_estimate(deterministic_levels(c, 2, 8, [](const VectorXd& a) { return 3 * a[0]; }));
  CHECK_FALSE(lin.degenerate);
  CHECK(lin.gamma_hat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lin.levels.size() == 7);

  const Chart s = sphere_chart();
  const HolderEstimate lin2 =
      holder_estimate(deterministic_levels(s, 1, 5, [](const VectorXd& a) { return a[0] - 2 * a[1]; }));
  CHECK(lin2.gamma_hat == doctest::Approx(1.0).epsilon(1e-9));

  // Rough fields sit below smooth ones, ordered by eta.
  CovarianceModel m1, m05;
  m05.eta = 0.5;
  const HolderEstimate g1 = holder_estimate(gaussian_levels(c, m1, 2, 7, 100, 3));
  const HolderEstimate g05 = holder_estimate(gaussian_levels(c, m05, 2, 7, 100, 3));
  CHECK(g1.in_unit_interval);
  CHECK(g05.gamma_hat < g1.gamma_hat);
  CHECK(g1.gamma_hat < 0.5);
  CHECK(g05.gamma_hat > 0.0);

  auto levels = gaussian_levels(c, m1, 2, 4, 10, 3);
  levels.erase(levels.begin() + 1);
  CHECK_THROWS_AS(validate_levels(levels), InvalidInput);
}

TEST_CASE("Hoelder estimate matches the exact median law for Brownian increments") {
  // Inside an S^1 chart the eta = 1 field has independent increments over disjoint arcs, so
  // M_k = sqrt(d_k) max of N_k = 2^{k+1} - 2 iid |Z| and its median is sqrt(d_k) q_k with
  // P(|Z| <= q_k)^{N_k} = 1/2. The regression of log(sqrt(d_k) q_k) on log delta_k is the
  // value the estimator converges to.
  const Chart c = circle_chart();
  const boost::math::normal normal;
  std::vector<double> xs, ys;
  for (int k = 2; k <= 8; ++k) {
    const double d = c.radius / std::ldexp(1.0, k);
    const double N = std::ldexp(1.0, k + 1) - 2;
    const double q = boost::math::quantile(normal, 0.5 * (1.0 + std::pow(0.5, 1.0 / N)));
    xs.push_back(std::log(std::ldexp(c.radius, 1 - k)));
    ys.push_back(std::log(std::sqrt(d) * q));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / xs.size();
    my += ys[i] / ys.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double expected = sxy / sxx;
  CHECK(expected == doctest::Approx(0.3397).epsilon(1e-3));

  CovarianceModel model;
  const HolderEstimate est = holder_estimate(gaussian_levels(c, model, 2, 8, 400, 17));
  CHECK(std::abs(est.gamma_hat - expected) < 0.03);
  for (std::size_t i = 0; i < est.levels.size(); ++i) {
    CHECK(est.levels[i].pairs == std::ldexp(1.0, est.levels[i].k + 1) - 2);
  }
}

TEST_CASE("chaining reconstruction") {
  const Chart c = sphere_chart();
  auto f = [](const VectorXd& a) { return 2 * a[0] + a[1]; };
  const auto levels = deterministic_levels(c, 1, 9, f);

  // Grid point of the coarsest level: the value never changes.
  const Point x0 = levels.front().grid.point(2);
  const ChainingResult on = chaining_reconstruct(levels, x0);
  for (const auto& l : on.levels) CHECK(l.values[0] == levels.front().sample.values(0, 2));
  CHECK(on.diffs.isZero(0.0));

  const VectorXd a = (VectorXd(2) << 0.0371, -0.1113).finished();
  const ChainingResult off = chaining_reconstruct(levels, chart_point(c, a));
  CHECK(off.decay_ratio <= 0.6);
  CHECK(std::abs(off.limit[0] - f(a)) <= 3 * levels.back().grid.spacing());

  // Gaussian field at a grid point of the coarsest level.
  CovarianceModel model;
  const auto gl = gaussian_levels(c, model, 1, 4, 20, 9);
  RateFunctions rates;
  rates.m = 2;
  const ChainingResult g = chaining_reconstruct(gl, gl.front().grid.point(4), rates);
  CHECK(g.diffs.isZero(0.0));
  CHECK(g.exceed_fraction.size() == static_cast<std::size_t>(g.diffs.cols()));

  const Point far = c.manifold.point((VectorXd(3) << -0.3, -0.1, -0.9).finished());
  CHECK_THROWS_AS(chaining_reconstruct(levels, far), DomainError);
}
