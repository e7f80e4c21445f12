#pragma once

// Closed-form Riemannian primitives for the unit sphere S^m, the flat torus T^m and
// Euclidean boxes: geodesic distance, exponential and logarithm maps, orthonormal
// frames, and a Monte-Carlo check of the exponential-map distortion bound.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkc/rng.hpp"

namespace mkc {

enum class ManifoldKind { Sphere, FlatTorus, Box };

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string& name);

/// A point in ambient coordinates: unit vector in R^{m+1} for the sphere, the
/// representative in [0, period) for the torus, plain coordinates for the box.
struct Point {
  Eigen::VectorXd coords;
};

/// Tangent vector at `base`, in the same ambient coordinates as the base point.
struct TangentVector {
  Point base;
  Eigen::VectorXd components;
};

class Manifold {
 public:
  static Manifold sphere(int dim);
  static Manifold flat_torus(Eigen::VectorXd periods);
  static Manifold box(Eigen::VectorXd lower, Eigen::VectorXd upper);

  ManifoldKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  int ambient_dim() const noexcept { return kind_ == ManifoldKind::Sphere ? dim_ + 1 : dim_; }
  const Eigen::VectorXd& periods() const noexcept { return periods_; }
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }

  /// Largest radius on which exp_map is a diffeomorphism (infinity for boxes).
  double injectivity_radius() const noexcept;

  /// Validates and canonicalizes raw coordinates: sphere points are renormalized,
  /// torus coordinates are wrapped into [0, period). Box coordinates are taken
  /// as-is; the extents only delimit the sampling region (see `in_region`).
  Point point(Eigen::VectorXd coords) const;

  /// Throws InvalidInput unless `p` is a canonical point of this manifold.
  void validate(const Point& p) const;
  void validate(const TangentVector& v) const;

  /// True if `p` lies in the region used for random sampling and coverage tests.
  bool in_region(const Point& p) const;

  /// Uniform sample from the sampling region (whole sphere/torus, box extents).
  Point random_point(Rng& rng) const;

  double norm(const TangentVector& v) const { return v.components.norm(); }

  std::string describe() const;

  friend bool operator==(const Manifold& a, const Manifold& b);

 private:
  Manifold(ManifoldKind kind, int dim) : kind_(kind), dim_(dim) {}

  ManifoldKind kind_;
  int dim_;
  Eigen::VectorXd periods_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

double geodesic_distance(const Manifold& M, const Point& x, const Point& y);

/// Exp_x(X). Throws DomainError when |X| reaches the injectivity radius.
Point exp_map(const Manifold& M, const Point& x, const TangentVector& X);

/// Exp_x^{-1}(y). Throws DomainError at the cut locus (sphere antipode, torus
/// half-period tie).
TangentVector log_map(const Manifold& M, const Point& x, const Point& y);

/// Orthonormal basis of T_x M. Column i of `vectors` is the i-th basis vector in
/// ambient coordinates; the frame realizes the isometry R^m -> T_x M.
struct Frame {
  Point base;
  Eigen::MatrixXd vectors;

  int dim() const { return static_cast<int>(vectors.cols()); }
  TangentVector operator[](int i) const { return {base, vectors.col(i)}; }

  Eigen::VectorXd to_coordinates(const TangentVector& X) const;
  TangentVector from_coordinates(const Eigen::VectorXd& a) const;
};

/// Deterministic frame: standard basis for flat manifolds; on the sphere, Gram-Schmidt
/// of the ambient standard basis projected to T_x, skipping projections with norm < 1e-6.
Frame orthonormal_frame(const Manifold& M, const Point& x);

struct DistortionReport {
  bool passed = true;
  double min_ratio = 1.0;  // smallest observed d(y,z) / |Y - Z|
  double max_ratio = 1.0;  // largest observed d(y,z) / |Y - Z|
  std::size_t pairs = 0;
};

/// Samples `n_pairs` tangent pairs (Y, Z) uniformly in B_R(0) at x and checks
/// 1/2 <= d(Exp Y, Exp Z) / |Y - Z| <= 2 for all of them.
DistortionReport distortion_check(const Manifold& M, const Point& x, double R,
                                  std::size_t n_pairs, std::uint64_t seed);

/// Uniform sample from the open Euclidean ball of radius R in R^m.
Eigen::VectorXd random_in_ball(int m, double R, Rng& rng);

}  // namespace mkc
