#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "mkc/atlas.hpp"
#include "mkc/errors.hpp"

using namespace mkc;
using Eigen::VectorXd;

namespace {

VectorXd v2(double a, double b) { return (VectorXd(2) << a, b).finished(); }
VectorXd v1(double a) { return (VectorXd(1) << a).finished(); }

Chart box_chart(int m, VectorXd center) {
  const Manifold B = Manifold::box(VectorXd::Constant(m, -1.0), VectorXd::Constant(m, 1.0));
  return build_chart(B, B.point(std::move(center)), 0);
}

Chart sphere_chart(int m, int index = 3) {
  const Manifold S = Manifold::sphere(m);
  return build_chart(S, low_discrepancy_centers(S, 10)[index], index);
}

double chebyshev(const VectorXd& a, const VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("chart radius search") {
  const Chart b = box_chart(2, v2(0, 0));
  CHECK(b.radius == 1.0 / (2.0 * std::sqrt(2.0)));
  CHECK(b.alpha == 1.0 / (4.0 * std::sqrt(2.0)));

  const Chart s = sphere_chart(2);
  CHECK(s.radius > 0.0);
  CHECK(s.radius <= 1.0 / (2.0 * std::sqrt(2.0)));
  CHECK(distortion_check(s.manifold, s.center, s.radius, 5000, 77).passed);

  CHECK(sphere_chart(1).radius <= 0.5);

  const Chart t = build_chart(Manifold::flat_torus(v1(1.0)), Point{v1(0.3)}, 0);
  CHECK(t.radius <= 0.5);
  CHECK(distortion_check(t.manifold, t.center, t.radius, 5000, 5).passed);
}

TEST_CASE("chart coordinates and metric") {
  const Chart b = box_chart(2, v2(0, 0));
  CHECK(chart_coords(b, b.center).norm() == 0.0);
  const VectorXd a = chart_coords(b, Point{v2(0.1, 0.2)});
  CHECK(std::abs(a[0] - 0.1) < 1e-15);
  CHECK(std::abs(a[1] - 0.2) < 1e-15);
  CHECK_THROWS_AS(chart_coords(b, Point{v2(0.5, 0.5)}), DomainError);

  CHECK(chart_metric(b, Point{v2(0.1, 0.1)}, Point{v2(0.1, 0.1)}) == 0.0);
  CHECK(chart_metric(b, v2(0.1, 0.0), v2(0.0, 0.05)) == doctest::Approx(2.0 * std::sqrt(2.0) * 0.1).epsilon(1e-15));

  const Chart s = sphere_chart(2);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const VectorXd c = random_in_ball(2, 0.9 * s.radius, rng);
    CHECK((chart_coords(s, chart_point(s, c)) - c).norm() < 1e-12);
  }
}

TEST_CASE("metric sandwich, including an independent recomputation") {
  for (const Chart& c : {sphere_chart(2), sphere_chart(1), box_chart(2, v2(0.1, 0.0)),
                         build_chart(Manifold::flat_torus(v2(1.0, 1.0)), Point{v2(0.2, 0.9)}, 0)}) {
    const SandwichReport rep = sandwich_check(c, 2000, 1);
    CHECK(rep.passed);
    CHECK(rep.failures == 0);

    Rng rng(31);
    const double h = c.half_side();
    for (int i = 0; i < 1000; ++i) {
      VectorXd a(c.dim()), b(c.dim());
      for (int j = 0; j < c.dim(); ++j) {
        a[j] = std::uniform_real_distribution<double>(-h, h)(rng);
        b[j] = std::uniform_real_distribution<double>(-h, h)(rng);
      }
      const double dn = 2.0 * std::sqrt(double(c.dim())) * chebyshev(a, b);
      const double d = geodesic_distance(c.manifold, chart_point(c, a), chart_point(c, b));
      CHECK(c.alpha * dn <= d + 1e-10);
      CHECK(d <= dn + 1e-10);
    }
  }
}

TEST_CASE("dyadic grid examples and invariants") {
  const Chart c1 = box_chart(1, v1(0.0));
  REQUIRE(c1.radius == 0.5);
  const DyadicGrid g = dyadic_grid(c1, 1);
  REQUIRE(g.size() == 3);
  CHECK(g.coords()(0, 0) == -0.25);
  CHECK(g.coords()(0, 1) == 0.0);
  CHECK(g.coords()(0, 2) == 0.25);
  CHECK(g.spacing() == 0.5);

  const Chart c2 = sphere_chart(2);
  CHECK(dyadic_grid(c2, 2).size() == 49);

  for (const Chart& c : {c1, c2, sphere_chart(1)}) {
    const int m = c.dim();
    for (int k = 0; k <= 6; ++k) {
      const DyadicGrid gk = dyadic_grid(c, k);
      CHECK(gk.size() == static_cast<std::size_t>(std::pow((1 << (k + 1)) - 1, m)));
      CHECK(gk.spacing() == std::ldexp(c.radius, 1 - k));
      if (k < 6) {
        const DyadicGrid next = dyadic_grid(c, k + 1);
        CHECK(next.spacing() / gk.spacing() == 0.5);
        std::set<std::vector<double>> fine;
        for (std::size_t i = 0; i < next.size(); ++i) {
          fine.insert(std::vector<double>(next.coords().col(i).data(), next.coords().col(i).data() + m));
        }
        for (std::size_t i = 0; i < gk.size(); ++i) {
          CHECK(fine.count(std::vector<double>(gk.coords().col(i).data(), gk.coords().col(i).data() + m)) == 1);
        }
      }
      for (std::size_t i = 0; i < gk.size(); ++i) CHECK(gk.index_of(gk.lattice(i)) == i);
    }
  }
  CHECK_THROWS_AS(dyadic_grid(c2, max_grid_level(2) + 1), ResourceError);
}

TEST_CASE("nearest grid point") {
  const Chart c = sphere_chart(2);
  const DyadicGrid g = dyadic_grid(c, 3);
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const VectorXd a = random_in_ball(2, c.half_side(), rng);
    const std::size_t n = g.nearest(a);
    double best = INFINITY;
    for (std::size_t j = 0; j < g.size(); ++j) best = std::min(best, chebyshev(a, g.coords().col(j)));
    CHECK(chebyshev(a, g.coords().col(n)) <= best + 1e-15);
  }
  // Exact half-way tie between lattice indices 8 and 9 along the first axis.
  const VectorXd tie = v2(0.5 * (g.coordinate(8) + g.coordinate(9)), g.coordinate(5));
  CHECK(g.lattice(g.nearest(tie))[0] == 8);
}

TEST_CASE("pair sets equal brute-force enumeration") {
  for (const Chart& c : {sphere_chart(1), sphere_chart(2), box_chart(3, VectorXd::Zero(3))}) {
    const int m = c.dim();
    for (int k = 0; k <= 4 && k * m <= 12; ++k) {
      const DyadicGrid g = dyadic_grid(c, k);
      const PairSet ps = pair_set(g);
      std::set<std::pair<std::uint32_t, std::uint32_t>> got(ps.pairs.begin(), ps.pairs.end());
      CHECK(got.size() == ps.count());
      std::set<std::pair<std::uint32_t, std::uint32_t>> want;
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j)
          if (chart_metric(c, g.coords().col(i), g.coords().col(j)) <= g.spacing() * (1 + 1e-9)) want.insert({i, j});
      CHECK(got == want);
      CHECK(static_cast<long double>(ps.count()) == lattice_pair_count(m, k));
      CHECK(ps.pair_constant <= pair_constant_bound(m));
    }
  }
  CHECK(pair_set(dyadic_grid(sphere_chart(2), 0)).count() == 0);
}

TEST_CASE("separability") {
  CHECK(separability_check(sphere_chart(1), 2).passed);
  CHECK(separability_check(sphere_chart(2), 4).passed);
  for (const Chart& c : {sphere_chart(1), box_chart(1, v1(0)), sphere_chart(2)}) {
    const SeparabilityReport r = separability_check(c, 6);
    CHECK(r.passed);
    CHECK_FALSE(r.counterexample.has_value());
  }
}

TEST_CASE("separability agrees with a direct search over coarse neighbours") {
  // Level k = 1 -> 2 in m = 1 and m = 2, searching every admissible coarse pair in floating point.
  for (const Chart& c : {sphere_chart(1), sphere_chart(2)}) {
    const DyadicGrid coarse = dyadic_grid(c, 1), fine = dyadic_grid(c, 2);
    const double tol = 1e-12;
    for (std::size_t x = 0; x < fine.size(); ++x) {
      for (std::size_t y = 0; y < fine.size(); ++y) {
        const double dxy = chart_metric(c, fine.coords().col(x), fine.coords().col(y));
        bool found = false;
        for (std::size_t xp = 0; xp < coarse.size() && !found; ++xp) {
          if (chart_metric(c, fine.coords().col(x), coarse.coords().col(xp)) > fine.spacing() + tol) continue;
          for (std::size_t yp = 0; yp < coarse.size() && !found; ++yp) {
            if (chart_metric(c, fine.coords().col(y), coarse.coords().col(yp)) > fine.spacing() + tol) continue;
            found = chart_metric(c, coarse.coords().col(xp), coarse.coords().col(yp)) <= dxy + tol;
          }
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("summability rows follow the closed forms") {
  const Chart c = sphere_chart(2);
  RateFunctions rates;
  rates.m = 2;
  const SummabilityReport rep = summability_report(c, rates, 30);
  REQUIRE(rep.rows.size() == 30);
  CHECK(rep.passed());
  CHECK(rep.partial_sums_monotone);
  CHECK(rep.pair_constant_analytic == 2.0 * 2.0 * (9.0 - 1.0) / 2.0);
  double pq = 0.0, pr = 0.0;
  for (const auto& row : rep.rows) {
    const double delta = std::ldexp(c.radius, 1 - row.k);
    const double L = row.k - 1 - std::log2(c.radius);
    CHECK(row.delta == delta);
    CHECK(row.r_term == doctest::Approx(1.0 / (L * L)).epsilon(1e-12));
    const long double s = (1LL << (row.k + 1)) - 1;
    const long double pairs = (std::pow(3 * s - 2, 2.0L) - s * s) / 2;
    CHECK(row.pairs == pairs);
    CHECK(row.q_term == doctest::Approx(double(pairs) / (L * L) * delta * delta).epsilon(1e-12));
    pq += row.q_term;
    pr += row.r_term;
    CHECK(row.partial_q == doctest::Approx(pq).epsilon(1e-12));
    CHECK(row.partial_r == doctest::Approx(pr).epsilon(1e-12));
    if (row.k >= 3) {
      CHECK(row.r_term <= 1.0 / (double(row.k) * row.k));
      CHECK(row.q_term <= rep.q_series.constant / (double(row.k) * row.k));
    }
  }

  rates.K = 0.0;
  const SummabilityReport zero = summability_report(c, rates, 30);
  CHECK(zero.rows.back().partial_q == 0.0);
  CHECK(zero.passed());

  RateFunctions wrong;
  wrong.m = 1;
  CHECK_THROWS_AS(summability_report(c, wrong, 10), InvalidInput);
}

TEST_CASE("coverage") {
  const Manifold S2 = Manifold::sphere(2);
  const CoverReport two = cover_check(cover_build(S2, 2, 1), 2000, 2);
  CHECK_FALSE(two.passed());
  CHECK(two.uncovered.size() > 1000);

  const CoverReport many = cover_check(cover_build(S2, 120, 1), 10000, 2);
  CHECK(many.passed());

  const Manifold small = Manifold::box(v2(0, 0), v2(0.2, 0.2));
  CHECK(cover_check(cover_build(small, 1, 1), 2000, 3).passed());

  const Manifold unit = Manifold::box(v2(0, 0), v2(1, 1));
  const Atlas atlas = cover_build(unit, 40, 1);
  CHECK(cover_check(atlas, 10000, 3).passed());
}
