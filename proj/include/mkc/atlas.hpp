#pragma once

// Exponential-map charts, the dyadic grid hierarchy inside each chart, the nearest
// neighbour pair sets, and the checks that make a chart cover usable for chaining:
// metric sandwich, well-separability, summability and coverage.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mkc/manifold.hpp"
#include "mkc/rates.hpp"

namespace mkc {

/// Normal-coordinate chart around `center`. Coordinates are phi(x) = L^{-1} Exp^{-1}(x),
/// the chart domain U is the preimage of the open cube max_i |a_i| < R / sqrt(m), and the
/// chart metric is d_n(x, y) = 2 sqrt(m) max_i |phi_i(x) - phi_i(y)|.
struct Chart {
  int index = 0;
  Manifold manifold;
  Point center;
  double radius = 0.0;  // R_n in (0, 1/(2 sqrt m)]
  Frame frame;
  double alpha = 0.0;   // 1/(4 sqrt m)

  int dim() const { return manifold.dim(); }
  double half_side() const;  // R_n / sqrt(m)
};

struct ChartOptions {
  std::size_t distortion_pairs = 2000;
  std::uint64_t seed = 0;
  double min_radius = 1e-6;
};

/// Largest admissible radius for charts on M: min(1/(2 sqrt m), 0.9 inj(M)).
double initial_chart_radius(const Manifold& M);

/// Finds R_n by halving from initial_chart_radius until distortion_check passes.
Chart build_chart(const Manifold& M, const Point& center, int index, const ChartOptions& opts = {});

/// Assembles a chart with a given radius (e.g. read back from a file). Validates the
/// radius range but does not re-run the distortion certification.
Chart make_chart(const Manifold& M, const Point& center, int index, double radius);

/// phi_n(x). Throws DomainError if d(center, x) >= R_n.
Eigen::VectorXd chart_coords(const Chart& c, const Point& x);

/// phi_n^{-1}(a). Throws DomainError if |a| >= R_n.
Point chart_point(const Chart& c, const Eigen::VectorXd& a);

/// Membership in U_n.
bool in_chart_domain(const Chart& c, const Point& x);

double chart_metric(const Chart& c, const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double chart_metric(const Chart& c, const Point& x, const Point& y);

struct SandwichReport {
  std::size_t pairs = 0;
  std::size_t failures = 0;
  double max_upper_ratio = 0.0;  // max d / d_n, must be <= 1
  double max_lower_ratio = 0.0;  // max alpha d_n / d, must be <= 1
  bool passed = true;
};

/// Samples pairs uniformly in the chart cube and checks alpha d_n <= d <= d_n with
/// additive slack.
SandwichReport sandwich_check(const Chart& c, std::size_t n_pairs, std::uint64_t seed,
                              double slack = 1e-10);

/// Level-k grid D_{n,k}: lattice indices l in {1..2^{k+1}-1}^m mapped to chart coordinates
/// a = (l - 2^k) R / (2^k sqrt m). Points are ordered lexicographically in l, with the
/// first coordinate most significant.
class DyadicGrid {
 public:
  DyadicGrid(Chart chart, int level);

  const Chart& chart() const { return chart_; }
  int level() const { return level_; }
  int dim() const { return chart_.dim(); }
  /// Number of lattice positions per axis, 2^{k+1} - 1.
  std::int64_t side() const { return side_; }
  std::size_t size() const { return static_cast<std::size_t>(coords_.cols()); }
  /// delta_{n,k} = 2^{-k+1} R_n.
  double spacing() const { return spacing_; }

  const Eigen::MatrixXd& coords() const { return coords_; }     // m x N
  const Eigen::MatrixXd& ambient() const { return ambient_; }   // ambient_dim x N
  Point point(std::size_t i) const { return Point{ambient_.col(static_cast<Eigen::Index>(i))}; }
  std::vector<Point> points() const;

  std::vector<std::int64_t> lattice(std::size_t i) const;
  std::size_t index_of(const std::vector<std::int64_t>& l) const;
  /// Chart coordinate of lattice index l along one axis.
  double coordinate(std::int64_t l) const;

  /// Nearest grid point to chart coordinates `a` in d_n; per-axis rounding with exact
  /// half-way ties resolved towards the smaller lattice index.
  std::size_t nearest(const Eigen::VectorXd& a) const;

 private:
  Chart chart_;
  int level_;
  std::int64_t side_;
  double spacing_;
  Eigen::MatrixXd coords_;
  Eigen::MatrixXd ambient_;
};

/// Maximum supported level for an m-dimensional chart (k m <= 20).
int max_grid_level(int m);

DyadicGrid dyadic_grid(const Chart& c, int k);

struct PairSet {
  int level = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // i < j
  std::size_t count() const { return pairs.size(); }
  /// count / 2^{m k}: the smallest K_m with |pi_{n,k}| <= K_m 2^{mk} at this level.
  double pair_constant = 0.0;
};

/// Unordered pairs with d_n <= delta_{n,k}, enumerated through lattice neighbours
/// (Chebyshev offset 1).
PairSet pair_set(const DyadicGrid& g);

/// Closed form for |pi_{n,k}|: ((3s - 2)^m - s^m) / 2 with s = 2^{k+1} - 1.
long double lattice_pair_count(int m, int k);

/// Analytic constant with |pi_{n,k}| <= K_m 2^{mk} for every k: 2^m (3^m - 1) / 2.
double pair_constant_bound(int m);

struct SeparabilityCounterexample {
  int level = 0;  // fine level k+1
  std::size_t x = 0;
  std::size_t y = 0;
};

struct SeparabilityReport {
  bool passed = true;
  int k_max = 0;
  std::size_t pairs_checked = 0;
  std::optional<SeparabilityCounterexample> counterexample;
};

/// Exhaustive check of the nested-grid condition with V = U_n: for every k < k_max and
/// every pair x, y in D_{k+1} there are x', y' in D_k within delta_{k+1} of x and y
/// respectively with d_n(x', y') <= d_n(x, y). Computed in exact lattice arithmetic.
SeparabilityReport separability_check(const Chart& c, int k_max);

struct SummabilityRow {
  int k = 0;
  double delta = 0.0;
  long double pairs = 0.0;
  double q_term = 0.0;
  double r_term = 0.0;
  double partial_q = 0.0;
  double partial_r = 0.0;
  double ratio_q = 0.0;  // q_term(k) / q_term(k-1), NaN for the first row
  double ratio_r = 0.0;
};

struct SeriesCertificate {
  double exponent = 0.0;    // p of the comparison series sum C k^{-p}
  double constant = 0.0;    // C
  bool comparison = false;  // term_k <= C k^{-p} for all k >= k_start, and p > 1
  bool ratio = false;       // tail ratios non-increasing and < 1
  bool summable() const { return comparison || ratio; }
};

struct SummabilityReport {
  std::vector<SummabilityRow> rows;
  std::vector<std::string> warnings;
  int k_start = 3;
  double pair_constant_empirical = 0.0;  // max_k |pi_k| / 2^{mk} over the rows
  double pair_constant_analytic = 0.0;
  bool partial_sums_monotone = true;
  SeriesCertificate q_series;  // sum |pi_k| q(delta_k)
  SeriesCertificate r_series;  // sum r(delta_k)
  bool passed() const { return partial_sums_monotone && q_series.summable() && r_series.summable(); }
};

/// Partial sums of sum_k |pi_k| q(delta_k) and sum_k r(delta_k) for k = 1..k_max, with
/// comparison-series and ratio certificates. Levels with delta_k >= rho are skipped
/// with a warning. `rates.m` must equal the chart dimension.
SummabilityReport summability_report(const Chart& c, const RateFunctions& rates, int k_max,
                                     int k_start = 3);

struct Atlas {
  Manifold manifold;
  std::vector<Chart> charts;
};

/// Deterministic low-discrepancy centers: Fibonacci lattice on S^2, equally spaced on
/// S^1, Kronecker sequences (mapped through the normal quantile on S^m, m >= 3) otherwise.
std::vector<Point> low_discrepancy_centers(const Manifold& M, int n);

Atlas cover_build(const Manifold& M, int n_charts, std::uint64_t seed);

struct CoverReport {
  std::size_t tested = 0;
  std::vector<Point> uncovered;
  bool passed() const { return uncovered.empty(); }
};

/// Draws `n_test` points from the sampling region and lists those outside every U_n.
CoverReport cover_check(const Atlas& atlas, std::size_t n_test, std::uint64_t seed);

}  // namespace mkc
