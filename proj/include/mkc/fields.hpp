#pragma once

// Centered Gaussian random fields on finite point sets of a manifold, with covariance
// derived from an isotropic geodesic variogram, conditional refinement along nested
// point sets, and empirical variogram / moment estimators.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkc/manifold.hpp"

namespace mkc {

enum class CovarianceFamily {
  /// Pinned field with variogram C h^eta (+ nugget for h > 0) and phi(reference) = 0.
  PoweredExponentialVariogram,
  /// Stationary covariance C exp(-h^eta) (+ nugget on the diagonal).
  ExponentialCovariance,
};

std::string to_string(CovarianceFamily f);
CovarianceFamily covariance_family_from_string(const std::string& name);

struct CovarianceModel {
  CovarianceFamily family = CovarianceFamily::PoweredExponentialVariogram;
  double C = 1.0;
  double eta = 1.0;
  double nugget = 0.0;

  /// Throws InvalidInput for negative scales (or C = 0 without a nugget) and
  /// ModelRejection for eta outside (0, 1], where the geodesic construction is not
  /// positive definite on the sphere.
  void validate() const;

  /// sigma(h)^2 = E (phi(x) - phi(y))^2 at geodesic distance h.
  double variogram(double h) const;
};

/// Pinned covariance 1/2 (v(d(x_i, r)) + v(d(x_j, r)) - v(d(x_i, x_j))) for the variogram
/// family (reference r defaults to the first point), k(d(x_i, x_j)) otherwise.
Eigen::MatrixXd covariance_matrix(const CovarianceModel& model, const std::vector<Point>& points,
                                  const Manifold& M, const std::optional<Point>& reference = std::nullopt);

using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Field values on `points`, one row per replicate.
struct FieldSample {
  std::vector<Point> points;
  SampleMatrix values;  // replicates x points
  std::uint64_t seed = 0;
  CovarianceModel model;
  std::optional<Point> reference;  // pinning point of the variogram family

  std::size_t replicates() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t size() const { return points.size(); }
};

/// Lower factor of a covariance matrix with the exact zero-variance rows (the pinned
/// reference) kept deterministic. `jitter` is the diagonal shift that was needed.
struct CovarianceFactor {
  Eigen::MatrixXd lower;          // n x n_active
  std::vector<Eigen::Index> active;
  double jitter = 0.0;
};

/// Cholesky with the jitter ladder 0, 1e-12, 1e-11, ..., 1e-6. Throws ModelRejection
/// carrying the smallest eigenvalue when every rung fails.
CovarianceFactor factor_covariance(const Eigen::MatrixXd& K);

FieldSample sample_gaussian(const CovarianceModel& model, const std::vector<Point>& points, const Manifold& M,
                            std::size_t replicates, std::uint64_t seed,
                            const std::optional<Point>& reference = std::nullopt);

/// Extends `coarse` to `fine_points` (a superset) by drawing the new values from the
/// conditional Gaussian law given the coarse values. Coarse values are copied verbatim.
FieldSample conditional_refine(const FieldSample& coarse, const std::vector<Point>& fine_points,
                               const Manifold& M, std::uint64_t seed);

struct BinnedStatistic {
  double h_lo = 0.0;
  double h_hi = 0.0;
  double h_mid = 0.0;    // geometric midpoint
  double value = 0.0;    // estimate
  std::size_t pairs = 0; // point pairs in the bin
  double std_error = 0.0;  // across-replicate standard error; infinite with one replicate
};

/// Equal-width bins in log h over the observed positive pair distances.
std::vector<double> log_bin_edges(double h_min, double h_max, int bins);

/// Mean of (phi(x) - phi(y))^2 per distance bin. Empty bins are omitted.
std::vector<BinnedStatistic> variogram_empirical(const FieldSample& sample, const Manifold& M, int bins = 12);

/// Mean of |phi(x) - phi(y)|^l per distance bin. Requires l >= 1.
std::vector<BinnedStatistic> moment_estimate(const FieldSample& sample, const Manifold& M, double l,
                                             int bins = 12);

/// Parameters of the moment conditions E|phi(x) - phi(y)|^l <= K log2(1/d)^{-nu} d^kappa
/// (continuity) and <= K log2(1/d)^{-alpha} d^{m + l gamma} (Hoelder of order gamma).
struct MomentCondition {
  double l = 2.0;
  double kappa = 1.0;
  double nu = 4.0;
  double K = 1.0;
  double gamma = 0.5;
  double alpha = 2.0;
};

enum class MomentPart { Continuity, Holder };

void validate(const MomentCondition& mc, int m, MomentPart part);
double moment_bound(const MomentCondition& mc, int m, MomentPart part, double h);

struct MomentCheck {
  double h = 0.0;
  double moment = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// Compares each bin's estimate with the bound at the bin midpoint (h < 1 only).
std::vector<MomentCheck> moment_predicate(const std::vector<BinnedStatistic>& table, const MomentCondition& mc,
                                          int m, MomentPart part);

/// E|Z|^l for Z ~ N(0, sigma^2).
double gaussian_abs_moment(double l, double sigma);

}  // namespace mkc
