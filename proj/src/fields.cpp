#include "mkc/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mkc/errors.hpp"
#include "mkc/parallel.hpp"
#include "mkc/rng.hpp"

namespace mkc {

namespace {

constexpr double kJitterMax = 1e-6;

using PointKey = std::vector<double>;

PointKey key_of(const Point& p) { return PointKey(p.coords.data(), p.coords.data() + p.coords.size()); }

Eigen::MatrixXd distance_matrix(const std::vector<Point>& points, const Manifold& M) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) D(i, j) = D(j, i) = geodesic_distance(M, points[i], points[j]);
  return D;
}

// LLT with the jitter ladder; returns the factor and the jitter used.
std::pair<Eigen::MatrixXd, double> jittered_cholesky(const Eigen::MatrixXd& K) {
  const auto n = K.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};
  for (double jitter : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, kJitterMax}) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
  const double smallest = eig.eigenvalues().minCoeff();
  throw ModelRejection("covariance matrix is not positive semidefinite (smallest eigenvalue " +
                           std::to_string(smallest) + ")",
                       smallest);
}

template <class Fn>
std::vector<BinnedStatistic> binned_increments(const FieldSample& sample, const Manifold& M, int bins, Fn f) {
  const std::size_t n = sample.size();
  const std::size_t R = sample.replicates();
  if (n < 2) throw InsufficientData("need at least two points");
  if (R < 1) throw InsufficientData("need at least one replicate");
  if (bins < 1) throw InvalidInput("bins must be >= 1");

  struct PairInfo {
    std::size_t i, j;
    double d;
  };
  std::vector<PairInfo> pairs;
  double h_min = std::numeric_limits<double>::infinity(), h_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = geodesic_distance(M, sample.points[i], sample.points[j]);
      if (d <= 0.0) continue;
      pairs.push_back({i, j, d});
      h_min = std::min(h_min, d);
      h_max = std::max(h_max, d);
    }
  }
  if (pairs.empty()) throw InsufficientData("no pairs at positive distance");

  const auto edges = log_bin_edges(h_min, h_max, bins);
  const double lo = std::log(h_min);
  const double width = (std::log(h_max) - lo) / bins;
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    int b = width > 0.0 ? static_cast<int>((std::log(pairs[p].d) - lo) / width) : 0;
    members[std::clamp(b, 0, bins - 1)].push_back(p);
  }

  std::vector<BinnedStatistic> out;
  for (int b = 0; b < bins; ++b) {
    if (members[b].empty()) continue;
    // Per-replicate bin means, then mean and standard error across replicates.
    std::vector<double> rep_means(R);
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t p : members[b]) s += f(sample.values(r, pairs[p].i) - sample.values(r, pairs[p].j));
      rep_means[r] = s / static_cast<double>(members[b].size());
    }
    double mean = 0.0;
    for (double v : rep_means) mean += v;
    mean /= static_cast<double>(R);
    double var = 0.0;
    for (double v : rep_means) var += (v - mean) * (v - mean);

    BinnedStatistic row;
    row.h_lo = edges[b];
    row.h_hi = edges[b + 1];
    row.h_mid = std::sqrt(row.h_lo * row.h_hi);
    row.value = mean;
    row.pairs = members[b].size();
    row.std_error = R > 1 ? std::sqrt(var / static_cast<double>(R - 1) / static_cast<double>(R))
                          : std::numeric_limits<double>::infinity();
    out.push_back(row);
  }
  return out;
}

}  // namespace

std::string to_string(CovarianceFamily f) {
  return f == CovarianceFamily::PoweredExponentialVariogram ? "pinned-variogram" : "exponential-covariance";
}

CovarianceFamily covariance_family_from_string(const std::string& name) {
  if (name == "pinned-variogram") return CovarianceFamily::PoweredExponentialVariogram;
  if (name == "exponential-covariance") return CovarianceFamily::ExponentialCovariance;
  throw InvalidInput("unknown covariance family '" + name + "'");
}

namespace {

// Smallest eigenvalue of the model's covariance on four equally spaced points of a great
// circle (pinned at the first one for the variogram family). For C h^eta with eta > 1 the
// contrast (1, -1, 1, -1) has variance -2 C pi^eta (1 - 2^{1 - eta}) < 0.
double great_circle_witness_eigenvalue(const CovarianceModel& model) {
  auto dist = [&](int i, int j) {
    const int steps = std::abs(i - j) % 4;
    return (steps == 3 ? 1 : steps) * std::numbers::pi / 2.0;
  };
  auto v = [&](double h) { return h > 0.0 ? model.C * std::pow(h, model.eta) + model.nugget : 0.0; };
  Eigen::MatrixXd K;
  if (model.family == CovarianceFamily::PoweredExponentialVariogram) {
    K.resize(3, 3);
    for (int i = 1; i < 4; ++i)
      for (int j = 1; j < 4; ++j) K(i - 1, j - 1) = 0.5 * (v(dist(i, 0)) + v(dist(j, 0)) - v(dist(i, j)));
  } else {
    K.resize(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        K(i, j) = model.C * std::exp(-std::pow(dist(i, j), model.eta)) + (i == j ? model.nugget : 0.0);
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

}  // namespace

void CovarianceModel::validate() const {
  if (!(C >= 0.0) || !std::isfinite(C)) throw InvalidInput("model scale C must be nonnegative");
  if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw InvalidInput("nugget must be nonnegative");
  if (C == 0.0 && nugget == 0.0) throw InvalidInput("model is identically zero (C = 0 and no nugget)");
  if (!(eta > 0.0 && eta <= 1.0)) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("exponent eta must be positive");
    throw ModelRejection("exponent eta = " + std::to_string(eta) +
                             " outside (0, 1]: geodesic model is not positive definite on the sphere",
                         great_circle_witness_eigenvalue(*this));
  }
}

double CovarianceModel::variogram(double h) const {
  if (h <= 0.0) return 0.0;
  if (family == CovarianceFamily::PoweredExponentialVariogram) return C * std::pow(h, eta) + nugget;
  return 2.0 * (C + nugget - C * std::exp(-std::pow(h, eta)));
}

Eigen::MatrixXd covariance_matrix(const CovarianceModel& model, const std::vector<Point>& points,
                                  const Manifold& M, const std::optional<Point>& reference) {
  model.validate();
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::MatrixXd D = distance_matrix(points, M);
  Eigen::MatrixXd K(n, n);
  if (model.family == CovarianceFamily::ExponentialCovariance) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        K(i, j) = model.C * std::exp(-std::pow(D(i, j), model.eta)) + (i == j ? model.nugget : 0.0);
    return K;
  }
  if (n == 0) return K;
  const Point& r = reference ? *reference : points.front();
  Eigen::VectorXd to_ref(n);
  for (Eigen::Index i = 0; i < n; ++i) to_ref[i] = model.variogram(geodesic_distance(M, points[i], r));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = i == j ? to_ref[i] : 0.5 * (to_ref[i] + to_ref[j] - model.variogram(D(i, j)));
      K(i, j) = K(j, i) = v;
    }
  }
  return K;
}

CovarianceFactor factor_covariance(const Eigen::MatrixXd& K) {
  CovarianceFactor f;
  const auto n = K.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(K(i, i) == 0.0 && K.row(i).isZero(0.0))) f.active.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(f.active.size());
  Eigen::MatrixXd sub(na, na);
  for (Eigen::Index a = 0; a < na; ++a)
    for (Eigen::Index b = 0; b < na; ++b) sub(a, b) = K(f.active[a], f.active[b]);
  auto [L, jitter] = jittered_cholesky(sub);
  f.jitter = jitter;
  f.lower = Eigen::MatrixXd::Zero(n, na);
  for (Eigen::Index a = 0; a < na; ++a) f.lower.row(f.active[a]) = L.row(a);
  return f;
}

FieldSample sample_gaussian(const CovarianceModel& model, const std::vector<Point>& points, const Manifold& M,
                            std::size_t replicates, std::uint64_t seed, const std::optional<Point>& reference) {
  FieldSample s;
  s.points = points;
  s.seed = seed;
  s.model = model;
  if (model.family == CovarianceFamily::PoweredExponentialVariogram && !points.empty()) {
    s.reference = reference ? *reference : points.front();
  }
  const Eigen::MatrixXd K = covariance_matrix(model, points, M, s.reference);
  const CovarianceFactor f = factor_covariance(K);
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index na = f.lower.cols();
  s.values = SampleMatrix::Zero(static_cast<Eigen::Index>(replicates), n);
  parallel_for(replicates, [&](std::size_t r) {
    Rng rng = substream(seed, r);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(na);
    for (auto& v : z) v = normal(rng);
    s.values.row(static_cast<Eigen::Index>(r)) = (f.lower * z).transpose();
  });
  return s;
}

FieldSample conditional_refine(const FieldSample& coarse, const std::vector<Point>& fine_points, const Manifold& M,
                               std::uint64_t seed) {
  std::map<PointKey, Eigen::Index> fine_index;
  for (std::size_t i = 0; i < fine_points.size(); ++i) {
    M.validate(fine_points[i]);
    fine_index.emplace(key_of(fine_points[i]), static_cast<Eigen::Index>(i));
  }
  const auto nf = static_cast<Eigen::Index>(fine_points.size());
  std::vector<Eigen::Index> coarse_to_fine(coarse.size());
  std::vector<bool> is_coarse(fine_points.size(), false);
  for (std::size_t c = 0; c < coarse.size(); ++c) {
    const auto it = fine_index.find(key_of(coarse.points[c]));
    if (it == fine_index.end()) throw InvalidInput("conditional_refine: coarse point missing from the fine set");
    coarse_to_fine[c] = it->second;
    is_coarse[it->second] = true;
  }
  std::vector<Eigen::Index> fresh;
  for (Eigen::Index i = 0; i < nf; ++i)
    if (!is_coarse[i]) fresh.push_back(i);

  FieldSample out;
  out.points = fine_points;
  out.seed = seed;
  out.model = coarse.model;
  out.reference = coarse.reference;
  const auto R = static_cast<Eigen::Index>(coarse.replicates());
  out.values = SampleMatrix::Zero(R, nf);
  for (std::size_t c = 0; c < coarse.size(); ++c) out.values.col(coarse_to_fine[c]) = coarse.values.col(c);
  if (fresh.empty() || R == 0) return out;

  // Joint covariance over [coarse..., fresh...] with the coarse pinning point.
  std::vector<Point> joint = coarse.points;
  for (Eigen::Index i : fresh) joint.push_back(fine_points[i]);
  const Eigen::MatrixXd K = covariance_matrix(coarse.model, joint, M, coarse.reference);
  const auto nc = static_cast<Eigen::Index>(coarse.size());
  const auto nu = static_cast<Eigen::Index>(fresh.size());

  // Deterministic (zero-variance) coarse points carry no information.
  std::vector<Eigen::Index> cond;
  for (Eigen::Index i = 0; i < nc; ++i)
    if (!(K(i, i) == 0.0 && K.row(i).isZero(0.0))) cond.push_back(i);
  const auto ncond = static_cast<Eigen::Index>(cond.size());

  Eigen::MatrixXd Kcc(ncond, ncond), Kuc(nu, ncond);
  for (Eigen::Index a = 0; a < ncond; ++a) {
    for (Eigen::Index b = 0; b < ncond; ++b) Kcc(a, b) = K(cond[a], cond[b]);
    for (Eigen::Index u = 0; u < nu; ++u) Kuc(u, a) = K(nc + u, cond[a]);
  }
  const Eigen::MatrixXd Kuu = K.bottomRightCorner(nu, nu);

  Eigen::MatrixXd gain(nu, ncond);  // Kuc Kcc^{-1}
  Eigen::MatrixXd schur = Kuu;
  if (ncond > 0) {
    auto [Lc, jitter] = jittered_cholesky(Kcc);
    (void)jitter;
    // gain^T = Kcc^{-1} Kcu
    Eigen::MatrixXd W = Lc.triangularView<Eigen::Lower>().solve(Kuc.transpose());
    gain = Lc.transpose().triangularView<Eigen::Upper>().solve(W).transpose();
    schur -= W.transpose() * W;
  }
  schur = 0.5 * (schur + schur.transpose());
  const CovarianceFactor f = factor_covariance(schur);
  const Eigen::Index na = f.lower.cols();

  parallel_for(static_cast<std::size_t>(R), [&](std::size_t r) {
    const auto row = static_cast<Eigen::Index>(r);
    Eigen::VectorXd given(ncond);
    for (Eigen::Index a = 0; a < ncond; ++a) given[a] = coarse.values(row, cond[a]);
    Rng rng = substream(seed, r);
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(na);
    for (auto& v : z) v = normal(rng);
    Eigen::VectorXd draw = f.lower * z;
    if (ncond > 0) draw += gain * given;
    for (Eigen::Index u = 0; u < nu; ++u) out.values(row, fresh[u]) = draw[u];
  });
  return out;
}

std::vector<double> log_bin_edges(double h_min, double h_max, int bins) {
  if (!(h_min > 0.0) || !(h_max >= h_min) || bins < 1) throw InvalidInput("invalid bin range");
  std::vector<double> edges(bins + 1);
  const double lo = std::log(h_min), hi = std::log(h_max);
  for (int b = 0; b <= bins; ++b) edges[b] = std::exp(lo + (hi - lo) * b / bins);
  edges.front() = h_min;
  edges.back() = h_max;
  return edges;
}

std::vector<BinnedStatistic> variogram_empirical(const FieldSample& sample, const Manifold& M, int bins) {
  return binned_increments(sample, M, bins, [](double d) { return d * d; });
}

std::vector<BinnedStatistic> moment_estimate(const FieldSample& sample, const Manifold& M, double l, int bins) {
  if (!(l >= 1.0)) throw InvalidInput("moment order l must be >= 1");
  if (l == 2.0) return variogram_empirical(sample, M, bins);
  return binned_increments(sample, M, bins, [l](double d) { return std::pow(std::abs(d), l); });
}

void validate(const MomentCondition& mc, int m, MomentPart part) {
  if (!(mc.l >= 1.0)) throw InvalidInput("moment order l must be >= 1");
  if (!(mc.K > 0.0)) throw InvalidInput("moment constant K must be positive");
  if (part == MomentPart::Continuity) {
    if (!(mc.kappa >= m)) throw InvalidInput("kappa must be >= m");
    if (!(mc.nu > mc.l + 1.0)) throw InvalidInput("nu must exceed l + 1");
  } else {
    if (!(mc.gamma > 0.0 && mc.gamma < 1.0)) throw InvalidInput("gamma must lie in (0, 1)");
    if (!(mc.alpha > 1.0)) throw InvalidInput("alpha must exceed 1");
  }
}

double moment_bound(const MomentCondition& mc, int m, MomentPart part, double h) {
  validate(mc, m, part);
  if (!(h > 0.0 && h < 1.0)) throw DomainError("moment bound is defined for 0 < h < 1");
  const double lg = std::log2(1.0 / h);
  if (part == MomentPart::Continuity) return mc.K * std::pow(lg, -mc.nu) * std::pow(h, mc.kappa);
  return mc.K * std::pow(lg, -mc.alpha) * std::pow(h, m + mc.l * mc.gamma);
}

std::vector<MomentCheck> moment_predicate(const std::vector<BinnedStatistic>& table, const MomentCondition& mc,
                                          int m, MomentPart part) {
  validate(mc, m, part);
  std::vector<MomentCheck> out;
  for (const auto& row : table) {
    if (!(row.h_mid < 1.0)) continue;
    MomentCheck c;
    c.h = row.h_mid;
    c.moment = row.value;
    c.bound = moment_bound(mc, m, part, row.h_mid);
    c.holds = c.moment <= c.bound;
    out.push_back(c);
  }
  return out;
}

double gaussian_abs_moment(double l, double sigma) {
  return std::pow(sigma, l) * std::pow(2.0, 0.5 * l) * std::tgamma(0.5 * (l + 1.0)) / std::sqrt(std::numbers::pi);
}

}  // namespace mkc
