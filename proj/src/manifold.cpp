#include "mkc/manifold.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "mkc/errors.hpp"

namespace mkc {

namespace {

constexpr double kSphereNormTol = 1e-12;
constexpr double kTangentTol = 1e-12;
constexpr double kFrameSkip = 1e-6;

void require_dim(const Manifold& M, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != M.ambient_dim()) {
    std::ostringstream os;
    os << what << ": expected " << M.ambient_dim() << " ambient coordinates, got " << v.size();
    throw InvalidInput(os.str());
  }
}

double wrap_into(double value, double period) {
  double w = std::fmod(value, period);
  if (w < 0.0) w += period;
  if (w >= period) w = 0.0;
  return w;
}

// Representative of a - b in [-P/2, P/2].
double wrapped_delta(double a, double b, double period) {
  double d = std::remainder(a - b, period);
  return d;
}

}  // namespace

std::string to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Sphere: return "sphere";
    case ManifoldKind::FlatTorus: return "torus";
    case ManifoldKind::Box: return "box";
  }
  return "unknown";
}

ManifoldKind manifold_kind_from_string(const std::string& name) {
  if (name == "sphere") return ManifoldKind::Sphere;
  if (name == "torus") return ManifoldKind::FlatTorus;
  if (name == "box") return ManifoldKind::Box;
  throw InvalidInput("unknown manifold kind '" + name + "'");
}

Manifold Manifold::sphere(int dim) {
  if (dim < 1) throw InvalidInput("sphere dimension must be >= 1");
  return Manifold(ManifoldKind::Sphere, dim);
}

Manifold Manifold::flat_torus(Eigen::VectorXd periods) {
  if (periods.size() < 1) throw InvalidInput("torus dimension must be >= 1");
  for (double p : periods) {
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidInput("torus periods must be positive");
  }
  Manifold M(ManifoldKind::FlatTorus, static_cast<int>(periods.size()));
  M.periods_ = std::move(periods);
  return M;
}

Manifold Manifold::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() < 1) throw InvalidInput("box dimension must be >= 1");
  if (lower.size() != upper.size()) throw InvalidInput("box bounds differ in dimension");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(upper[i] > lower[i])) {
      throw InvalidInput("box extents must be strictly positive");
    }
  }
  Manifold M(ManifoldKind::Box, static_cast<int>(lower.size()));
  M.lower_ = std::move(lower);
  M.upper_ = std::move(upper);
  return M;
}

double Manifold::injectivity_radius() const noexcept {
  switch (kind_) {
    case ManifoldKind::Sphere: return std::numbers::pi;
    case ManifoldKind::FlatTorus: return 0.5 * periods_.minCoeff();
    case ManifoldKind::Box: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

Point Manifold::point(Eigen::VectorXd coords) const {
  require_dim(*this, coords, "point");
  if (!coords.allFinite()) throw InvalidInput("point coordinates must be finite");
  switch (kind_) {
    case ManifoldKind::Sphere: {
      const double n = coords.norm();
      if (n == 0.0) throw InvalidInput("sphere point must be nonzero");
      coords /= n;
      break;
    }
    case ManifoldKind::FlatTorus:
      for (Eigen::Index i = 0; i < coords.size(); ++i) coords[i] = wrap_into(coords[i], periods_[i]);
      break;
    case ManifoldKind::Box:
      break;
  }
  return Point{std::move(coords)};
}

void Manifold::validate(const Point& p) const {
  require_dim(*this, p.coords, "point");
  if (!p.coords.allFinite()) throw InvalidInput("point coordinates must be finite");
  if (kind_ == ManifoldKind::Sphere && std::abs(p.coords.norm() - 1.0) > kSphereNormTol) {
    throw InvalidInput("sphere point is not a unit vector");
  }
  if (kind_ == ManifoldKind::FlatTorus) {
    for (Eigen::Index i = 0; i < p.coords.size(); ++i) {
      if (p.coords[i] < 0.0 || p.coords[i] >= periods_[i]) {
        throw InvalidInput("torus point outside the fundamental domain");
      }
    }
  }
}

void Manifold::validate(const TangentVector& v) const {
  validate(v.base);
  require_dim(*this, v.components, "tangent vector");
  if (!v.components.allFinite()) throw InvalidInput("tangent components must be finite");
  if (kind_ == ManifoldKind::Sphere) {
    const double scale = std::max(1.0, v.components.norm());
    if (std::abs(v.base.coords.dot(v.components)) > kTangentTol * scale) {
      throw InvalidInput("sphere tangent vector is not orthogonal to its base point");
    }
  }
}

bool Manifold::in_region(const Point& p) const {
  if (kind_ != ManifoldKind::Box) return true;
  return ((p.coords - lower_).array() >= 0.0).all() && ((upper_ - p.coords).array() >= 0.0).all();
}

Point Manifold::random_point(Rng& rng) const {
  Eigen::VectorXd c(ambient_dim());
  switch (kind_) {
    case ManifoldKind::Sphere: {
      std::normal_distribution<double> normal;
      do {
        for (auto& v : c) v = normal(rng);
      } while (c.norm() < 1e-8);
      break;
    }
    case ManifoldKind::FlatTorus: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = u(rng) * periods_[i];
      break;
    }
    case ManifoldKind::Box: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = lower_[i] + u(rng) * (upper_[i] - lower_[i]);
      break;
    }
  }
  return point(std::move(c));
}

std::string Manifold::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ManifoldKind::Sphere: os << "S^" << dim_; break;
    case ManifoldKind::FlatTorus: os << "T^" << dim_ << " periods " << periods_.transpose(); break;
    case ManifoldKind::Box: os << "box [" << lower_.transpose() << "] x [" << upper_.transpose() << "]"; break;
  }
  return os.str();
}

bool operator==(const Manifold& a, const Manifold& b) {
  return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.periods_ == b.periods_ && a.lower_ == b.lower_ &&
         a.upper_ == b.upper_;
}

double geodesic_distance(const Manifold& M, const Point& x, const Point& y) {
  M.validate(x);
  M.validate(y);
  switch (M.kind()) {
    case ManifoldKind::Sphere:
      // 2 atan2(|x - y|, |x + y|) is accurate for both nearby and nearly antipodal points.
      return 2.0 * std::atan2((x.coords - y.coords).norm(), (x.coords + y.coords).norm());
    case ManifoldKind::FlatTorus: {
      double s = 0.0;
      for (int i = 0; i < M.dim(); ++i) {
        const double d = wrapped_delta(x.coords[i], y.coords[i], M.periods()[i]);
        s += d * d;
      }
      return std::sqrt(s);
    }
    case ManifoldKind::Box:
      return (x.coords - y.coords).norm();
  }
  return 0.0;
}

Point exp_map(const Manifold& M, const Point& x, const TangentVector& X) {
  M.validate(x);
  M.validate(X);
  if (X.base.coords != x.coords) throw InvalidInput("tangent vector is not based at x");
  const double len = X.components.norm();
  if (len >= M.injectivity_radius()) throw DomainError("tangent vector reaches the injectivity radius");
  switch (M.kind()) {
    case ManifoldKind::Sphere: {
      if (len == 0.0) return x;
      Eigen::VectorXd p = std::cos(len) * x.coords + (std::sin(len) / len) * X.components;
      return M.point(std::move(p));
    }
    case ManifoldKind::FlatTorus:
      return M.point(x.coords + X.components);
    case ManifoldKind::Box:
      return Point{x.coords + X.components};
  }
  return x;
}

TangentVector log_map(const Manifold& M, const Point& x, const Point& y) {
  M.validate(x);
  M.validate(y);
  switch (M.kind()) {
    case ManifoldKind::Sphere: {
      const Eigen::VectorXd diff = y.coords - x.coords;
      if (diff.isZero(0.0)) return {x, Eigen::VectorXd::Zero(M.ambient_dim())};
      Eigen::VectorXd v = diff - diff.dot(x.coords) * x.coords;
      const double vn = v.norm();
      const double theta = geodesic_distance(M, x, y);
      if (vn <= 1e-15 || theta >= std::numbers::pi) {
        throw DomainError("log_map: y lies on the cut locus (antipode) of x");
      }
      return {x, (theta / vn) * v};
    }
    case ManifoldKind::FlatTorus: {
      Eigen::VectorXd v(M.dim());
      for (int i = 0; i < M.dim(); ++i) {
        const double P = M.periods()[i];
        const double d = wrapped_delta(y.coords[i], x.coords[i], P);
        if (std::abs(d) == 0.5 * P) throw DomainError("log_map: torus half-period tie (cut locus)");
        v[i] = d;
      }
      return {x, std::move(v)};
    }
    case ManifoldKind::Box:
      return {x, y.coords - x.coords};
  }
  return {x, Eigen::VectorXd::Zero(M.ambient_dim())};
}

Eigen::VectorXd Frame::to_coordinates(const TangentVector& X) const {
  if (X.components.size() != vectors.rows()) throw InvalidInput("tangent vector dimension mismatch");
  return vectors.transpose() * X.components;
}

TangentVector Frame::from_coordinates(const Eigen::VectorXd& a) const {
  if (a.size() != vectors.cols()) throw InvalidInput("frame coordinate dimension mismatch");
  return {base, vectors * a};
}

Frame orthonormal_frame(const Manifold& M, const Point& x) {
  M.validate(x);
  const int m = M.dim();
  if (M.kind() != ManifoldKind::Sphere) return {x, Eigen::MatrixXd::Identity(m, m)};

  const int n = M.ambient_dim();
  Eigen::MatrixXd F(n, m);
  int found = 0;
  for (int j = 0; j < n && found < m; ++j) {
    Eigen::VectorXd u = Eigen::VectorXd::Unit(n, j);
    // Two Gram-Schmidt passes against {x, F_0..F_{found-1}}.
    for (int pass = 0; pass < 2; ++pass) {
      u -= u.dot(x.coords) * x.coords;
      for (int i = 0; i < found; ++i) u -= u.dot(F.col(i)) * F.col(i);
    }
    const double un = u.norm();
    if (un < kFrameSkip) continue;
    F.col(found++) = u / un;
  }
  if (found != m) throw ConstructionError("orthonormal_frame: could not complete the basis");
  return {x, std::move(F)};
}

Eigen::VectorXd random_in_ball(int m, double R, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::VectorXd dir(m);
  do {
    for (auto& v : dir) v = normal(rng);
  } while (dir.norm() < 1e-12);
  const double radius = R * std::pow(uniform(rng), 1.0 / m);
  return dir.normalized() * radius;
}

DistortionReport distortion_check(const Manifold& M, const Point& x, double R, std::size_t n_pairs,
                                  std::uint64_t seed) {
  M.validate(x);
  if (!(R > 0.0)) throw InvalidInput("distortion_check: radius must be positive");
  if (R >= M.injectivity_radius()) throw DomainError("distortion_check: radius reaches the injectivity radius");

  const Frame frame = orthonormal_frame(M, x);
  Rng rng(seed);
  DistortionReport report;
  report.min_ratio = std::numeric_limits<double>::infinity();
  report.max_ratio = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Eigen::VectorXd a = random_in_ball(M.dim(), R, rng);
    const Eigen::VectorXd b = random_in_ball(M.dim(), R, rng);
    const double tangent = (a - b).norm();
    if (tangent == 0.0) continue;
    const Point y = exp_map(M, x, frame.from_coordinates(a));
    const Point z = exp_map(M, x, frame.from_coordinates(b));
    const double ratio = geodesic_distance(M, y, z) / tangent;
    report.min_ratio = std::min(report.min_ratio, ratio);
    report.max_ratio = std::max(report.max_ratio, ratio);
    ++report.pairs;
  }
  if (report.pairs == 0) {
    report.min_ratio = report.max_ratio = 1.0;
  }
  report.passed = report.min_ratio >= 0.5 && report.max_ratio <= 2.0;
  return report;
}

}  // namespace mkc
