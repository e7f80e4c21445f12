#pragma once

// Verification of the continuity hypotheses and conclusions on sampled fields:
// Hoelder constants, empirical and analytic tail bounds, Hoelder exponent
// estimation across dyadic levels, and chaining reconstruction at a point.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mkc/atlas.hpp"
#include "mkc/fields.hpp"
#include "mkc/rates.hpp"

namespace mkc {

struct HolderConstants {
  double eta_n = 0.5;  // grid contraction, delta_{n,k} ~ eta_n^k
  double C_n = 1.0;
  double gamma = 0.5;
  double K_gamma = 1.0;

  void validate() const;
};

/// alpha_{gamma,n} = 2 K_gamma C_n^{2 gamma} / (eta_n^gamma (1 - eta_n^gamma)).
double holder_constant(const HolderConstants& hc);

/// Constants for a chart: eta_n = 1/2 and C_n = 1/(2 R_n).
HolderConstants chart_holder_constants(const Chart& c, double gamma, double K_gamma);

/// (1/C_n) eta_n^k <= delta_{n,k} <= C_n eta_n^k for k in [k_lo, k_hi], with
/// delta_{n,k} = 2^{1-k} R_n.
bool grid_contraction_holds(const HolderConstants& hc, double chart_radius, int k_lo, int k_hi);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

WilsonInterval wilson_interval(double successes, double trials, double z);

struct TailBin {
  double h_lo = 0.0;
  double h_hi = 0.0;
  std::size_t pairs = 0;
  double trials = 0.0;       // pairs x replicates
  double exceedances = 0.0;  // count of |delta phi| > r(d)
  double freq = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double bound = 0.0;        // q at the bin's largest distance
  double p_value = 1.0;      // P(Binomial(trials, bound) >= exceedances)
  bool pass = false;         // ci_hi <= bound
};

struct TailReport {
  std::vector<TailBin> bins;
  double confidence = 0.95;
  bool passed() const;
};

/// Empirical exceedance frequencies P(|phi(x) - phi(y)| > r(d(x,y))) per distance bin over
/// pairs with 0 < d < rho, compared with q at each bin's largest distance. Throws
/// InsufficientData if no pair lies under rho.
TailReport tail_check(const FieldSample& sample, const Manifold& M, const RateFunctions& rates, int bins = 12,
                      double confidence = 0.95);

struct TailPredicateRow {
  double h = 0.0;
  double sigma = 0.0;
  double r = 0.0;
  double q = 0.0;
  double log_tail = 0.0;    // log P(|N(0, sigma^2)| > r)
  double log_margin = 0.0;  // log q - log tail
  bool holds = false;
};

/// erfc(r(h) / (sigma(h) sqrt 2)) <= q(h) with sigma(h)^2 the model variogram, on each h.
std::vector<TailPredicateRow> gaussian_tail_predicate(const CovarianceModel& model, const RateFunctions& rates,
                                                      const std::vector<double>& h_grid);

/// Smallest K for which gaussian_tail_predicate holds on h_grid (the rates' K is ignored).
double minimal_tail_constant(const CovarianceModel& model, const RateFunctions& rates,
                             const std::vector<double>& h_grid);

/// log erfc(x), accurate far into the tail.
double log_erfc(double x);

/// A field sample on the points of a dyadic grid, in grid order.
struct LevelSample {
  DyadicGrid grid;
  FieldSample sample;
};

/// Checks that each sample lives on its grid and that levels are consecutive.
void validate_levels(const std::vector<LevelSample>& levels);

struct HolderLevel {
  int k = 0;
  double delta = 0.0;
  double median_max_increment = 0.0;  // median over replicates of max over pi_{n,k} |delta phi|
  double residual = 0.0;
  double pairs = 0.0;  // |pi_{n,k}|
};

struct HolderEstimate {
  double gamma_hat = 0.0;
  double std_error = 0.0;
  /// Diagnostic for Gaussian fields: slope after dividing each level's statistic by
  /// sqrt(2 ln |pi_{n,k}|). Not meaningful for smooth fields. NaN if some |pi_k| <= 1.
  double gamma_hat_log_corrected = 0.0;
  double intercept = 0.0;
  std::vector<HolderLevel> levels;
  bool degenerate = false;  // all maximal increments vanish
  bool in_unit_interval = false;
};

/// Regresses log(median_r max_{pi_{n,k}} |delta phi|) on log delta_{n,k}. Needs >= 3 levels.
HolderEstimate holder_estimate(const std::vector<LevelSample>& levels);

struct ChainLevel {
  int k = 0;
  double delta = 0.0;
  std::size_t nearest = 0;     // index into the level grid
  Eigen::VectorXd values;      // field value at the nearest point, per replicate
};

struct ChainingResult {
  std::vector<ChainLevel> levels;
  /// diffs(r, i) = |v_{k_i+1} - v_{k_i}| for replicate r.
  Eigen::MatrixXd diffs;
  /// Fraction of replicates with |v_{k+1} - v_k| > r(delta_{k+1}); empty without rates.
  std::vector<double> exceed_fraction;
  Eigen::VectorXd limit;  // values at the finest level
  /// exp of the least-squares slope of log(mean_r diff) against level, over levels with
  /// a positive mean difference; NaN with fewer than two such levels.
  double decay_ratio = 0.0;
};

/// Follows the nearest grid point to x (in d_n, via DyadicGrid::nearest) through the
/// levels. Throws DomainError when x lies outside the chart domain.
ChainingResult chaining_reconstruct(const std::vector<LevelSample>& levels, const Point& x,
                                    const std::optional<RateFunctions>& rates = std::nullopt);

/// Sample whose single replicate is the given function of chart coordinates, evaluated on
/// the grid points. Used for deterministic control fields.
FieldSample deterministic_field(const DyadicGrid& grid, const std::function<double(const Eigen::VectorXd&)>& f);

}  // namespace mkc
