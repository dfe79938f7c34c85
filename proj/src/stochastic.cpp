#include "mechid/stochastic.hpp"

#include "mechid/errors.hpp"
#include "mechid/parallel.hpp"
#include "mechid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace mechid {

std::string to_string(TestMethod m) {
  return m == TestMethod::ks_bonferroni ? "per-coordinate-ks-bonferroni" : "energy-distance-permutation";
}

TestMethod parse_test_method(const std::string& name) {
  if (name == "per-coordinate-ks-bonferroni" || name == "ks") return TestMethod::ks_bonferroni;
  if (name == "energy-distance-permutation" || name == "energy") return TestMethod::energy_permutation;
  throw InvalidInput("unknown test method '" + name + "'");
}

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // P(K <= lambda) = sqrt(2 pi) / lambda * sum exp(-(2j-1)^2 pi^2 / (8 lambda^2)).
    const double w = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int j = 1; j <= 20; ++j) {
      const double k = 2.0 * j - 1.0;
      cdf += std::exp(-k * k * w);
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw InvalidInput("KS test needs nonempty samples");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
  return r;
}

namespace {

constexpr Eigen::Index kCachedDistanceLimit = 3000;

double energy_statistic(const std::vector<int>& labels, const std::function<double(int, int)>& dist, int n, int m) {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;
  const int N = n + m;
  for (int i = 0; i < N; ++i) {
    for (int j = i + 1; j < N; ++j) {
      const double dij = dist(i, j);
      const bool xi = labels[static_cast<std::size_t>(i)] == 0;
      const bool xj = labels[static_cast<std::size_t>(j)] == 0;
      if (xi && xj) {
        xx += dij;
      } else if (!xi && !xj) {
        yy += dij;
      } else {
        xy += dij;
      }
    }
  }
  const double dn = n;
  const double dm = m;
  return 2.0 * xy / (dn * dm) - 2.0 * xx / (dn * dn) - 2.0 * yy / (dm * dm);
}

TwoSampleResult energy_test(const Matrix& X, const Matrix& Y, std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  const int m = static_cast<int>(Y.rows());
  Matrix Z(n + m, X.cols());
  Z << X, Y;
  Matrix cache;
  std::function<double(int, int)> dist;
  if (Z.rows() <= kCachedDistanceLimit) {
    cache.resize(Z.rows(), Z.rows());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      for (Eigen::Index j = 0; j < Z.rows(); ++j) cache(i, j) = (Z.row(i) - Z.row(j)).norm();
    }
    dist = [&cache](int i, int j) { return cache(i, j); };
  } else {
    dist = [&Z](int i, int j) { return (Z.row(i) - Z.row(j)).norm(); };
  }
  std::vector<int> labels(static_cast<std::size_t>(n + m), 1);
  std::fill(labels.begin(), labels.begin() + n, 0);
  TwoSampleResult result;
  result.statistic = energy_statistic(labels, dist, n, m);
  int exceed = 0;
  for (int k = 0; k < kEnergyPermutations; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k));
    std::vector<int> permuted = labels;
    std::shuffle(permuted.begin(), permuted.end(), rng);
    if (energy_statistic(permuted, dist, n, m) >= result.statistic) ++exceed;
  }
  result.p_value = (1.0 + exceed) / (1.0 + kEnergyPermutations);
  return result;
}

}  // namespace

TwoSampleResult two_sample_test(const Matrix& X, const Matrix& Y, TestMethod method, std::uint64_t seed) {
  if (X.rows() == 0 || Y.rows() == 0) throw InvalidInput("two-sample test needs nonempty samples");
  if (X.cols() != Y.cols()) throw InvalidInput("two-sample test: dimension mismatch");
  if (method == TestMethod::energy_permutation) return energy_test(X, Y, seed);
  TwoSampleResult result;
  double min_p = 1.0;
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    std::vector<double> x(X.col(k).data(), X.col(k).data() + X.rows());
    std::vector<double> y(Y.col(k).data(), Y.col(k).data() + Y.rows());
    const auto ks = ks_two_sample(std::move(x), std::move(y));
    result.statistic = std::max(result.statistic, ks.statistic);
    min_p = std::min(min_p, ks.p_value);
  }
  result.p_value = std::min(1.0, min_p * static_cast<double>(X.cols()));
  return result;
}

void DistributionalTestSpec::validate() const {
  if (anchors.empty()) throw InvalidInput("distributional test needs at least one anchor");
  if (samples_per_anchor < 100) throw InvalidInput("samples_per_anchor must be at least 100");
  if (!(significance > 0.0 && significance < 1.0)) throw InvalidInput("significance must lie in (0, 1)");
}

std::vector<Vector> DistributionalTestSpec::default_anchors(int d, int count, double lo, double hi) {
  return low_discrepancy_points(d, count, lo, hi);
}

TestReport stochastic_equivariance_test(const Bijection& a, const StochasticMechanism& m1,
                                        const StochasticMechanism& m2, const DistributionalTestSpec& spec,
                                        unsigned threads) {
  spec.validate();
  if (m1.d != m2.d) throw InvalidInput("stochastic mechanisms must share the latent dimension");
  const int d = m1.d;
  const std::size_t anchors = spec.anchors.size();
  TestReport report;
  report.statistics.assign(anchors, 0.0);
  report.p_values.assign(anchors, 1.0);
  parallel_for(anchors, threads, [&](std::size_t i) {
    const Vector& z = spec.anchors[i];
    if (z.size() != d) throw InvalidInput("anchor dimension differs from the mechanisms");
    const Vector az = a(z);
    CounterRng left(spec.seed, 4 * i);
    CounterRng right(spec.seed, 4 * i + 1);
    Matrix X(spec.samples_per_anchor, d);
    Matrix Y(spec.samples_per_anchor, d);
    for (int s = 0; s < spec.samples_per_anchor; ++s) {
      X.row(s) = a(m1.apply(z, uniform_vector(left, d))).transpose();
      Y.row(s) = m2.apply(az, uniform_vector(right, d)).transpose();
    }
    if (!X.allFinite() || !Y.allFinite()) {
      std::ostringstream os;
      os << "non-finite samples at anchor " << i << " (" << z.transpose() << ")";
      throw NonFiniteError(os.str());
    }
    const auto result = two_sample_test(X, Y, spec.method, derive_key(spec.seed, 4 * i + 2));
    report.statistics[i] = result.statistic;
    report.p_values[i] = result.p_value;
  });
  report.min_p_value = *std::min_element(report.p_values.begin(), report.p_values.end());
  report.threshold = spec.significance / static_cast<double>(anchors);
  report.pass = report.min_p_value >= report.threshold;
  return report;
}

Matrix SignedPermutation::matrix() const {
  const auto d = static_cast<Eigen::Index>(perm.size());
  Matrix P = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) P(i, perm[static_cast<std::size_t>(i)]) = signs[static_cast<std::size_t>(i)];
  return P;
}

std::optional<SignedPermutation> extract_signed_permutation(const Matrix& A, double tol) {
  if (A.rows() != A.cols()) return std::nullopt;
  const auto d = A.rows();
  SignedPermutation sp;
  std::vector<bool> column_used(static_cast<std::size_t>(d), false);
  for (Eigen::Index i = 0; i < d; ++i) {
    int unit = -1;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = std::abs(A(i, j));
      if (v >= 1.0 - tol && v <= 1.0 + tol) {
        if (unit >= 0) return std::nullopt;
        unit = static_cast<int>(j);
      } else if (v > tol) {
        return std::nullopt;
      }
    }
    if (unit < 0 || column_used[static_cast<std::size_t>(unit)]) return std::nullopt;
    column_used[static_cast<std::size_t>(unit)] = true;
    sp.perm.push_back(unit);
    sp.signs.push_back(A(i, unit) > 0.0 ? 1 : -1);
  }
  return sp;
}

ClassVerdict klindt_identifiability_test(const AffineMap& a, double tol) {
  const auto d = a.A.rows();
  ClassVerdict v;
  v.orthonormality_defect = (a.A.transpose() * a.A - Matrix::Identity(d, d)).norm();
  v.orthonormal = v.orthonormality_defect <= tol;
  v.pattern = extract_signed_permutation(a.A, tol);
  v.signed_permutation = v.pattern.has_value();
  v.det_deviation = std::abs(std::abs(a.A.determinant()) - 1.0);
  v.volume_preserving = v.det_deviation <= tol;
  v.in_klindt_class = v.orthonormal && v.signed_permutation;
  return v;
}

Matrix finite_difference_jacobian(const VectorFunction& f, const Vector& z, double step_scale) {
  const double h = step_scale * (1.0 + z.norm());
  const Vector f0 = f(z);
  Matrix J(f0.size(), z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Vector plus = z;
    Vector minus = z;
    plus(k) += h;
    minus(k) -= h;
    J.col(k) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return J;
}

namespace {

// Richardson-extrapolated central difference; throws when the estimates at
// h and h/2 disagree by more than 10 * tol.
Matrix guarded_jacobian(const VectorFunction& f, const Vector& z, double step_scale, double tol) {
  const Matrix coarse = finite_difference_jacobian(f, z, step_scale);
  const Matrix fine = finite_difference_jacobian(f, z, 0.5 * step_scale);
  if (!coarse.allFinite() || !fine.allFinite()) throw NonFiniteError("non-finite Jacobian estimate");
  const double gap = (coarse - fine).cwiseAbs().maxCoeff();
  if (gap > 10.0 * tol) {
    std::ostringstream os;
    os << "finite-difference Jacobian inconsistent at (" << z.transpose() << "): step estimates differ by " << gap;
    throw IllConditionedError(os.str());
  }
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace

VolumeCheck volume_preservation_test(const VectorFunction& a, std::span<const Vector> points, double step_scale,
                                     double tol) {
  if (points.empty()) throw InvalidInput("volume test needs at least one point");
  VolumeCheck check;
  for (const auto& z : points) {
    const Matrix J = guarded_jacobian(a, z, step_scale, tol);
    if (J.rows() != J.cols()) throw InvalidInput("volume test needs a map R^d -> R^d");
    check.max_deviation = std::max(check.max_deviation, std::abs(std::abs(J.determinant()) - 1.0));
  }
  check.pass = check.max_deviation <= tol;
  return check;
}

JacobianVerdict jacobian_identifiability_test(const VectorFunction& a, std::span<const Vector> anchors,
                                              double step_scale, double tol) {
  if (anchors.empty()) throw InvalidInput("Jacobian test needs at least one anchor");
  JacobianVerdict verdict;
  verdict.in_class = true;
  for (const auto& z : anchors) {
    AnchorJacobian entry;
    entry.anchor = z;
    entry.jacobian = guarded_jacobian(a, z, step_scale, tol);
    const auto d = entry.jacobian.cols();
    entry.orthonormality_defect = (entry.jacobian.transpose() * entry.jacobian - Matrix::Identity(d, d)).norm();
    entry.pattern = extract_signed_permutation(entry.jacobian, tol);
    entry.pass = entry.orthonormality_defect <= tol && entry.pattern.has_value();
    verdict.in_class = verdict.in_class && entry.pass;
    verdict.anchors.push_back(std::move(entry));
  }
  verdict.pattern_constant = std::all_of(verdict.anchors.begin(), verdict.anchors.end(), [&](const auto& e) {
    return e.pattern.has_value() && e.pattern == verdict.anchors.front().pattern;
  });
  verdict.in_class = verdict.in_class && verdict.pattern_constant;
  return verdict;
}

}  // namespace mechid
