#include "mkc/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "mkc/errors.hpp"

namespace mkc {

namespace {

constexpr double kCertificateTol = 1e-12;

// Iterates over all offsets in {-1,0,1}^m whose first nonzero entry is +1.
std::vector<std::vector<int>> forward_offsets(int m) {
  std::vector<std::vector<int>> out;
  std::vector<int> o(m, -1);
  while (true) {
    const auto first = std::find_if(o.begin(), o.end(), [](int v) { return v != 0; });
    if (first != o.end() && *first == 1) out.push_back(o);
    int i = m - 1;
    while (i >= 0 && o[i] == 1) o[i--] = -1;
    if (i < 0) break;
    ++o[i];
  }
  return out;
}

double frac(double v) { return v - std::floor(v); }

// Positive root of x^{d+1} = x + 1 (generalized golden ratio).
double generalized_golden(int d) {
  double x = 2.0;
  for (int i = 0; i < 200; ++i) x = std::pow(1.0 + x, 1.0 / (d + 1));
  return x;
}

// Kronecker point i in [0,1)^d.
Eigen::VectorXd kronecker(int d, int i) {
  const double g = generalized_golden(d);
  Eigen::VectorXd u(d);
  for (int j = 0; j < d; ++j) u[j] = frac(0.5 + (i + 1) * std::pow(1.0 / g, j + 1));
  return u;
}

// Smallest C with (k / (k + shift))^p <= C for all k >= k_start.
double log_shift_factor(double shift, double p, int k_start) {
  if (shift >= 0.0) return 1.0;
  if (k_start + shift <= 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(k_start / (k_start + shift), p);
}

bool ratios_certify(const std::vector<double>& ratios) {
  if (ratios.size() < 3) return false;
  const std::size_t start = ratios.size() / 2;
  for (std::size_t i = start + 1; i < ratios.size(); ++i) {
    if (!(ratios[i] <= ratios[i - 1] * (1.0 + kCertificateTol))) return false;
  }
  return ratios.back() < 1.0;
}

}  // namespace

double Chart::half_side() const { return radius / std::sqrt(static_cast<double>(dim())); }

double initial_chart_radius(const Manifold& M) {
  return std::min(1.0 / (2.0 * std::sqrt(static_cast<double>(M.dim()))), 0.9 * M.injectivity_radius());
}

Chart make_chart(const Manifold& M, const Point& center, int index, double radius) {
  M.validate(center);
  const double m = M.dim();
  if (!(radius > 0.0) || radius > 1.0 / (2.0 * std::sqrt(m))) {
    throw InvalidInput("chart radius must lie in (0, 1/(2 sqrt m)]");
  }
  if (radius >= M.injectivity_radius()) throw DomainError("chart radius reaches the injectivity radius");
  return Chart{index, M, center, radius, orthonormal_frame(M, center), 1.0 / (4.0 * std::sqrt(m))};
}

Chart build_chart(const Manifold& M, const Point& center, int index, const ChartOptions& opts) {
  M.validate(center);
  for (double R = initial_chart_radius(M); R >= opts.min_radius; R *= 0.5) {
    if (distortion_check(M, center, R, opts.distortion_pairs, opts.seed).passed) {
      return make_chart(M, center, index, R);
    }
  }
  throw ConstructionError("build_chart: no radius above the minimum passes the distortion check");
}

Eigen::VectorXd chart_coords(const Chart& c, const Point& x) {
  if (geodesic_distance(c.manifold, c.center, x) >= c.radius) {
    throw DomainError("chart_coords: point outside the chart ball");
  }
  return c.frame.to_coordinates(log_map(c.manifold, c.center, x));
}

Point chart_point(const Chart& c, const Eigen::VectorXd& a) {
  if (a.size() != c.dim()) throw InvalidInput("chart_point: coordinate dimension mismatch");
  if (!(a.norm() < c.radius)) throw DomainError("chart_point: coordinates outside the chart ball");
  return exp_map(c.manifold, c.center, c.frame.from_coordinates(a));
}

bool in_chart_domain(const Chart& c, const Point& x) {
  if (geodesic_distance(c.manifold, c.center, x) >= c.radius) return false;
  return chart_coords(c, x).cwiseAbs().maxCoeff() < c.half_side();
}

double chart_metric(const Chart& c, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != c.dim() || b.size() != c.dim()) throw InvalidInput("chart_metric: dimension mismatch");
  return 2.0 * std::sqrt(static_cast<double>(c.dim())) * (a - b).cwiseAbs().maxCoeff();
}

double chart_metric(const Chart& c, const Point& x, const Point& y) {
  return chart_metric(c, chart_coords(c, x), chart_coords(c, y));
}

SandwichReport sandwich_check(const Chart& c, std::size_t n_pairs, std::uint64_t seed, double slack) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = c.half_side();
  auto draw = [&] {
    Eigen::VectorXd a(c.dim());
    for (auto& v : a) {
      do v = u(rng) * h;
      while (std::abs(v) >= h);
    }
    return a;
  };

  SandwichReport rep;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Eigen::VectorXd a = draw();
    const Eigen::VectorXd b = draw();
    const double d = geodesic_distance(c.manifold, chart_point(c, a), chart_point(c, b));
    const double dn = chart_metric(c, a, b);
    ++rep.pairs;
    const bool ok = c.alpha * dn <= d + slack && d <= dn + slack;
    if (!ok) ++rep.failures;
    if (dn > 0.0) rep.max_upper_ratio = std::max(rep.max_upper_ratio, d / dn);
    if (d > 0.0) rep.max_lower_ratio = std::max(rep.max_lower_ratio, c.alpha * dn / d);
  }
  rep.passed = rep.failures == 0;
  return rep;
}

int max_grid_level(int m) { return 20 / std::max(m, 1); }

DyadicGrid::DyadicGrid(Chart chart, int level) : chart_(std::move(chart)), level_(level) {
  const int m = chart_.dim();
  if (level < 0) throw InvalidInput("grid level must be nonnegative");
  if (level > max_grid_level(m)) throw ResourceError("grid level exceeds the memory cap k m <= 20");
  side_ = (std::int64_t{1} << (level + 1)) - 1;
  spacing_ = std::ldexp(chart_.radius, 1 - level);

  std::int64_t n = 1;
  for (int i = 0; i < m; ++i) n *= side_;
  coords_.resize(m, n);
  ambient_.resize(chart_.manifold.ambient_dim(), n);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rest = i;
    for (int j = m - 1; j >= 0; --j) {
      coords_(j, i) = coordinate(rest % side_ + 1);
      rest /= side_;
    }
    ambient_.col(i) = chart_point(chart_, coords_.col(i)).coords;
  }
}

double DyadicGrid::coordinate(std::int64_t l) const {
  const std::int64_t mid = std::int64_t{1} << level_;
  return std::ldexp(static_cast<double>(l - mid) * chart_.radius, -level_) /
         std::sqrt(static_cast<double>(chart_.dim()));
}

std::vector<Point> DyadicGrid::points() const {
  std::vector<Point> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(point(i));
  return out;
}

std::vector<std::int64_t> DyadicGrid::lattice(std::size_t i) const {
  std::vector<std::int64_t> l(dim());
  auto rest = static_cast<std::int64_t>(i);
  for (int j = dim() - 1; j >= 0; --j) {
    l[j] = rest % side_ + 1;
    rest /= side_;
  }
  return l;
}

std::size_t DyadicGrid::index_of(const std::vector<std::int64_t>& l) const {
  if (static_cast<int>(l.size()) != dim()) throw InvalidInput("lattice index dimension mismatch");
  std::int64_t i = 0;
  for (std::int64_t v : l) {
    if (v < 1 || v > side_) throw DomainError("lattice index outside the grid");
    i = i * side_ + (v - 1);
  }
  return static_cast<std::size_t>(i);
}

std::size_t DyadicGrid::nearest(const Eigen::VectorXd& a) const {
  if (a.size() != dim()) throw InvalidInput("nearest: dimension mismatch");
  const double mid = std::ldexp(1.0, level_);
  const double unit = chart_.radius / std::sqrt(static_cast<double>(dim()));
  std::vector<std::int64_t> l(dim());
  for (int j = 0; j < dim(); ++j) {
    const double t = std::ldexp(a[j] / unit, level_) + mid;
    const auto r = static_cast<std::int64_t>(std::ceil(t - 0.5));
    l[j] = std::clamp<std::int64_t>(r, 1, side_);
  }
  return index_of(l);
}

DyadicGrid dyadic_grid(const Chart& c, int k) { return DyadicGrid(c, k); }

PairSet pair_set(const DyadicGrid& g) {
  PairSet ps;
  ps.level = g.level();
  const int m = g.dim();
  const auto offsets = forward_offsets(m);
  const std::int64_t side = g.side();
  std::vector<std::int64_t> stride(m, 1);
  for (int j = m - 2; j >= 0; --j) stride[j] = stride[j + 1] * side;

  ps.pairs.reserve(g.size() * offsets.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto l = g.lattice(i);
    for (const auto& o : offsets) {
      std::int64_t j = static_cast<std::int64_t>(i);
      bool inside = true;
      for (int d = 0; d < m && inside; ++d) {
        const std::int64_t v = l[d] + o[d];
        inside = v >= 1 && v <= side;
        j += o[d] * stride[d];
      }
      if (inside) ps.pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  ps.pair_constant = static_cast<double>(ps.pairs.size()) / std::ldexp(1.0, m * g.level());
  return ps;
}

long double lattice_pair_count(int m, int k) {
  const long double s = std::ldexp(1.0L, k + 1) - 1.0L;
  return (std::pow(3.0L * s - 2.0L, m) - std::pow(s, m)) / 2.0L;
}

double pair_constant_bound(int m) { return std::ldexp(1.0, m) * (std::pow(3.0, m) - 1.0) / 2.0; }

SeparabilityReport separability_check(const Chart& c, int k_max) {
  const int m = c.dim();
  if (k_max > max_grid_level(m)) throw ResourceError("separability_check: level exceeds the memory cap");
  SeparabilityReport rep;
  rep.k_max = k_max;
  for (int k = 1; k < k_max; ++k) {
    // Work on the fine lattice of level k+1, where D_k sits at even indices and
    // d_n <= delta_{k+1} means Chebyshev distance <= 1.
    const std::int64_t fine_side = (std::int64_t{1} << (k + 2)) - 1;
    const std::int64_t coarse_side = (std::int64_t{1} << (k + 1)) - 1;
    std::vector<std::vector<std::int64_t>> candidates(fine_side + 1);
    for (std::int64_t L = 1; L <= fine_side; ++L) {
      for (std::int64_t l = std::max<std::int64_t>(1, (L - 1) / 2); l <= std::min(coarse_side, (L + 1) / 2); ++l) {
        if (std::abs(2 * l - L) <= 1) candidates[L].push_back(2 * l);
      }
      if (candidates[L].empty()) {
        rep.passed = false;
        rep.counterexample = SeparabilityCounterexample{k + 1, 0, 0};
        return rep;
      }
    }
    // best[a][b]: smallest |x' - y'| along one axis over admissible coarse neighbours.
    std::vector<std::int64_t> best((fine_side + 1) * (fine_side + 1), 0);
    for (std::int64_t a = 1; a <= fine_side; ++a) {
      for (std::int64_t b = 1; b <= fine_side; ++b) {
        std::int64_t v = std::numeric_limits<std::int64_t>::max();
        for (auto xa : candidates[a])
          for (auto yb : candidates[b]) v = std::min(v, std::abs(xa - yb));
        best[a * (fine_side + 1) + b] = v;
      }
    }

    std::int64_t n = 1;
    for (int i = 0; i < m; ++i) n *= fine_side;
    std::vector<std::int64_t> lx(m), ly(m);
    auto decode = [&](std::int64_t i, std::vector<std::int64_t>& l) {
      for (int j = m - 1; j >= 0; --j) {
        l[j] = i % fine_side + 1;
        i /= fine_side;
      }
    };
    for (std::int64_t i = 0; i < n; ++i) {
      decode(i, lx);
      for (std::int64_t j = i; j < n; ++j) {
        decode(j, ly);
        std::int64_t dxy = 0, dprime = 0;
        for (int d = 0; d < m; ++d) {
          dxy = std::max(dxy, std::abs(lx[d] - ly[d]));
          dprime = std::max(dprime, best[lx[d] * (fine_side + 1) + ly[d]]);
        }
        ++rep.pairs_checked;
        if (dprime > dxy) {
          rep.passed = false;
          rep.counterexample = SeparabilityCounterexample{k + 1, static_cast<std::size_t>(i),
                                                          static_cast<std::size_t>(j)};
          return rep;
        }
      }
    }
  }
  return rep;
}

SummabilityReport summability_report(const Chart& c, const RateFunctions& rates, int k_max, int k_start) {
  rates.validate();
  const int m = c.dim();
  if (rates.m != m) throw InvalidInput("summability_report: rate dimension differs from chart dimension");
  if (k_max < 1) throw InvalidInput("summability_report: k_max must be >= 1");

  SummabilityReport rep;
  rep.k_start = k_start;
  rep.pair_constant_analytic = pair_constant_bound(m);

  const double R = c.radius;
  // log2(1/delta_k) = k + shift.
  const double shift = -1.0 - std::log2(R);

  std::vector<double> ratios_q, ratios_r;
  double sum_q = 0.0, sum_r = 0.0;
  const SummabilityRow* prev = nullptr;
  for (int k = 1; k <= k_max; ++k) {
    SummabilityRow row;
    row.k = k;
    row.delta = std::ldexp(R, 1 - k);
    if (row.delta >= rates.rho) {
      rep.warnings.push_back("level " + std::to_string(k) + ": delta >= rho, term skipped");
      continue;
    }
    row.pairs = lattice_pair_count(m, k);
    const RateValues v = rate_eval(rates, row.delta);
    row.q_term = static_cast<double>(row.pairs * static_cast<long double>(v.q));
    row.r_term = v.r;
    const double new_q = sum_q + row.q_term;
    const double new_r = sum_r + row.r_term;
    if (!(new_q >= sum_q) || !(new_r >= sum_r) || !std::isfinite(new_q) || !std::isfinite(new_r)) {
      rep.partial_sums_monotone = false;
    }
    sum_q = new_q;
    sum_r = new_r;
    row.partial_q = sum_q;
    row.partial_r = sum_r;
    row.ratio_q = prev && prev->q_term > 0.0 ? row.q_term / prev->q_term : std::numeric_limits<double>::quiet_NaN();
    row.ratio_r = prev && prev->r_term > 0.0 ? row.r_term / prev->r_term : std::numeric_limits<double>::quiet_NaN();
    if (k > k_start && std::isfinite(row.ratio_q)) ratios_q.push_back(row.ratio_q);
    if (k > k_start && std::isfinite(row.ratio_r)) ratios_r.push_back(row.ratio_r);
    rep.pair_constant_empirical =
        std::max(rep.pair_constant_empirical, static_cast<double>(row.pairs / std::ldexp(1.0L, m * k)));
    rep.rows.push_back(row);
    prev = &rep.rows.back();
  }

  // |pi_k| q(delta_k) <= K K_m (2R)^m (k + shift)^{-alpha}.
  rep.q_series.exponent = rates.alpha;
  rep.q_series.constant = rates.K * rep.pair_constant_analytic * std::pow(2.0 * R, m) *
                          log_shift_factor(shift, rates.alpha, k_start);
  if (rates.variant == RateVariant::LogRate) {
    rep.r_series.exponent = rates.beta;
    rep.r_series.constant = log_shift_factor(shift, rates.beta, k_start);
  } else {
    // (2R)^gamma 2^{-gamma k} <= C k^{-2}, with sup_k k^2 2^{-gamma k} taken over real k >= k_start.
    const double lam = rates.gamma * std::numbers::ln2;
    const double kstar = std::max(2.0 / lam, static_cast<double>(k_start));
    rep.r_series.exponent = 2.0;
    rep.r_series.constant = std::pow(2.0 * R, rates.gamma) * kstar * kstar * std::exp(-lam * kstar);
  }

  auto dominated = [&](const SeriesCertificate& cert, auto term) {
    if (!(cert.exponent > 1.0) || !std::isfinite(cert.constant)) return false;
    bool any = false;
    for (const auto& row : rep.rows) {
      if (row.k < k_start) continue;
      any = true;
      if (term(row) > cert.constant * std::pow(row.k, -cert.exponent) * (1.0 + kCertificateTol)) return false;
    }
    return any;
  };
  rep.q_series.comparison = dominated(rep.q_series, [](const SummabilityRow& r) { return r.q_term; });
  rep.r_series.comparison = dominated(rep.r_series, [](const SummabilityRow& r) { return r.r_term; });
  rep.q_series.ratio = ratios_certify(ratios_q);
  rep.r_series.ratio = ratios_certify(ratios_r);
  if (rates.K == 0.0) {
    rep.q_series.comparison = true;  // identically zero series
  }
  return rep;
}

std::vector<Point> low_discrepancy_centers(const Manifold& M, int n) {
  if (n < 1) throw InvalidInput("number of centers must be >= 1");
  std::vector<Point> out;
  out.reserve(n);
  const int m = M.dim();
  switch (M.kind()) {
    case ManifoldKind::Sphere:
      if (m == 1) {
        for (int i = 0; i < n; ++i) {
          const double t = 2.0 * std::numbers::pi * i / n;
          out.push_back(M.point(Eigen::Vector2d(std::cos(t), std::sin(t))));
        }
      } else if (m == 2) {
        const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < n; ++i) {
          const double z = 1.0 - (2.0 * i + 1.0) / n;
          const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
          const double t = golden_angle * i;
          out.push_back(M.point(Eigen::Vector3d(rr * std::cos(t), rr * std::sin(t), z)));
        }
      } else {
        const boost::math::normal normal;
        for (int i = 0; i < n; ++i) {
          Eigen::VectorXd u = kronecker(m + 1, i);
          for (auto& v : u) v = boost::math::quantile(normal, std::clamp(v, 1e-12, 1.0 - 1e-12));
          out.push_back(M.point(std::move(u)));
        }
      }
      break;
    case ManifoldKind::FlatTorus:
      for (int i = 0; i < n; ++i) out.push_back(M.point(kronecker(m, i).cwiseProduct(M.periods())));
      break;
    case ManifoldKind::Box:
      for (int i = 0; i < n; ++i) {
        out.push_back(M.point(M.lower() + kronecker(m, i).cwiseProduct(M.upper() - M.lower())));
      }
      break;
  }
  return out;
}

Atlas cover_build(const Manifold& M, int n_charts, std::uint64_t seed) {
  Atlas atlas{M, {}};
  const auto centers = low_discrepancy_centers(M, n_charts);
  atlas.charts.reserve(centers.size());
  for (int i = 0; i < n_charts; ++i) {
    ChartOptions opts;
    opts.seed = mix64(seed ^ static_cast<std::uint64_t>(i));
    atlas.charts.push_back(build_chart(M, centers[i], i, opts));
  }
  return atlas;
}

CoverReport cover_check(const Atlas& atlas, std::size_t n_test, std::uint64_t seed) {
  Rng rng(seed);
  CoverReport rep;
  for (std::size_t i = 0; i < n_test; ++i) {
    const Point p = atlas.manifold.random_point(rng);
    ++rep.tested;
    const bool covered = std::any_of(atlas.charts.begin(), atlas.charts.end(),
                                     [&](const Chart& c) { return in_chart_domain(c, p); });
    if (!covered) rep.uncovered.push_back(p);
  }
  return rep;
}

}  // namespace mkc
