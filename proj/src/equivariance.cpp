#include "mechid/equivariance.hpp"

#include "checks.hpp"
#include "mechid/errors.hpp"
#include "mechid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace mechid {

std::string Verdict::to_string() const {
  switch (kind) {
    case IdentifiabilityClass::exact:
      return "exact";
    case IdentifiabilityClass::offset_only:
      return "offset-only";
    case IdentifiabilityClass::linear_family:
      return "linear-family";
    case IdentifiabilityClass::unconstrained:
      return "unconstrained";
    case IdentifiabilityClass::other:
      return "other(" + std::to_string(dimension) + ")";
    case IdentifiabilityClass::not_applicable:
      return "not-applicable";
  }
  return "unknown";
}

namespace {

Vector stack(const AffineMap& a) {
  const int d = a.dim();
  Vector x(d * d + d);
  x << vec(a.A), a.p;
  return x;
}

AffineMap unstack(const Vector& x, int d) {
  return AffineMap(unvec(x.head(d * d), d, d), x.tail(d));
}

// Singular values of the A-block of orthonormal directions lie in [0, 1];
// below this they are treated as pure offset directions.
double a_part_threshold(double tol) { return std::max(std::sqrt(tol), 1e-12); }

bool shift_singular(const Matrix& M, double tol) {
  const int d = static_cast<int>(M.rows());
  return numerical_rank(M - Matrix::Identity(d, d), tol) < d;
}

}  // namespace

AffineMap AffineFamily::element(const Vector& coefficients) const {
  if (coefficients.size() != dimension()) throw InvalidInput("coefficient count does not match family dimension");
  Vector x = stack(particular);
  if (dimension() > 0) x += directions * coefficients;
  return unstack(x, d);
}

bool AffineFamily::contains(const AffineMap& a, double tol) const {
  if (!nonempty || a.dim() != d) return false;
  Vector x = stack(a) - stack(particular);
  if (dimension() > 0) x -= directions * (directions.transpose() * x);
  return x.norm() <= tol * std::max(1.0, stack(a).norm());
}

std::optional<AffineMap> AffineFamily::invertible_representative(std::uint64_t seed, int attempts) const {
  if (!nonempty) return std::nullopt;
  if (dimension() == 0) {
    if (particular.invertible(1e-6)) return particular;
    return std::nullopt;
  }
  for (int i = 0; i < attempts; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    Vector c(dimension());
    for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = normal(rng);
    AffineMap a = element(c);
    if (a.invertible(1e-6)) return a;
  }
  return std::nullopt;
}

Verdict AffineFamily::verdict() const {
  if (!nonempty) return {IdentifiabilityClass::not_applicable, 0};
  const int dim = dimension();
  if (dim == 0) return {IdentifiabilityClass::exact, 0};
  if (dim == d * d + d) return {IdentifiabilityClass::unconstrained, dim};
  if (a_part.dimension() == 0) return {IdentifiabilityClass::offset_only, dim};
  if (p_free.empty()) return {IdentifiabilityClass::linear_family, dim};
  return {IdentifiabilityClass::other, dim};
}

AffineFamily solve_affine_family(const Matrix& rows, const Vector& rhs, int d, double tol,
                                 const std::optional<AffineMap>& known_solution) {
  const Eigen::Index unknowns = static_cast<Eigen::Index>(d) * d + d;
  if (rows.cols() != unknowns || rows.rows() != rhs.size()) throw InvalidInput("affine system has the wrong shape");
  AffineFamily family;
  family.d = d;
  family.directions = null_space(rows, tol);

  const double scale = rows.norm();
  auto consistent = [&](const Vector& x) {
    return (rows * x - rhs).norm() <= 1e3 * tol * (scale * x.norm() + rhs.norm()) + 1e-300;
  };
  if (known_solution && consistent(stack(*known_solution))) {
    family.particular = *known_solution;
    family.nonempty = true;
  } else {
    Vector x = rows.completeOrthogonalDecomposition().solve(rhs);
    family.nonempty = consistent(x);
    family.particular = unstack(x, d);
    // A-constraints are homogeneous; round-off there must not pass as a
    // genuine (tiny but invertible) linear part.
    if (family.particular.A.norm() <= 1e3 * tol * (1.0 + x.norm())) family.particular.A.setZero();
  }

  family.a_part.rows = d;
  family.a_part.cols = d;
  const Eigen::Index k = family.directions.cols();
  if (k == 0) return family;
  const Matrix top = family.directions.topRows(d * d);
  const Matrix bottom = family.directions.bottomRows(d);
  Eigen::JacobiSVD<Matrix> svd(top, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double threshold = a_part_threshold(tol);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > threshold) ++rank;
  }
  for (Eigen::Index i = 0; i < rank; ++i) {
    family.a_part.basis.push_back(unvec(svd.matrixU().col(i), d, d));
    family.p_for_basis.push_back(bottom * svd.matrixV().col(i) / s(i));
  }
  if (rank < k) {
    Matrix free = bottom * svd.matrixV().rightCols(k - rank);
    Eigen::HouseholderQR<Matrix> qr(free);
    Matrix q = qr.householderQ() * Matrix::Identity(free.rows(), free.cols());
    for (Eigen::Index j = 0; j < q.cols(); ++j) family.p_free.push_back(q.col(j));
  }
  return family;
}

void append_intertwining_constraints(const AffineMechanism& m1, const AffineMechanism& m2, Matrix& rows,
                                     Vector& rhs) {
  const int d = m1.dim();
  if (m2.dim() != d) throw InvalidInput("intertwining constraints need mechanisms of equal dimension");
  const int unknowns = d * d + d;
  if (rows.size() == 0) rows.resize(0, unknowns);
  if (rows.cols() != unknowns) throw InvalidInput("constraint matrix has the wrong width");

  Matrix block = Matrix::Zero(d * d + d, unknowns);
  block.topLeftCorner(d * d, d * d) = sylvester_operator(m1.M, m2.M);
  // A b1 = (b1^T (x) I) vec(A).
  for (int j = 0; j < d; ++j) block.block(d * d, j * d, d, d).diagonal().setConstant(m1.b(j));
  block.block(d * d, d * d, d, d) = -(m2.M - Matrix::Identity(d, d));

  Vector block_rhs = Vector::Zero(d * d + d);
  block_rhs.tail(d) = m2.b;

  const Eigen::Index old = rows.rows();
  rows.conservativeResize(old + block.rows(), Eigen::NoChange);
  rows.bottomRows(block.rows()) = block;
  rhs.conservativeResize(old + block.rows());
  rhs.tail(block.rows()) = block_rhs;
}

LinearSubspaceBasis linear_commutant(const Matrix& M, double tol) {
  if (M.rows() != M.cols() || M.rows() < 1) throw InvalidInput("commutant needs a square matrix");
  if (!M.allFinite()) throw NonFiniteError("commutant: matrix has non-finite entries");
  const int d = static_cast<int>(M.rows());
  return basis_from_columns(null_space(sylvester_operator(M, M), tol), d, d);
}

AffineFamily affine_equivariances(const AffineMechanism& m, double tol) {
  const AffineMechanism list[] = {m};
  return shared_equivariances(list, tol);
}

AffineFamily shared_equivariances(std::span<const AffineMechanism> mechanisms, double tol) {
  if (mechanisms.empty()) throw InvalidInput("shared_equivariances needs at least one mechanism");
  const int d = mechanisms.front().dim();
  Matrix rows;
  Vector rhs;
  bool degenerate = false;
  for (const auto& m : mechanisms) {
    if (m.dim() != d) throw InvalidInput("all mechanisms must share the latent dimension");
    append_intertwining_constraints(m, m, rows, rhs);
    degenerate = degenerate || shift_singular(m.M, tol);
  }
  AffineFamily family = solve_affine_family(rows, rhs, d, tol, AffineMap::identity(d));
  family.shift_degenerate = degenerate;
  return family;
}

namespace detail {

CheckResult intertwining_check(const Bijection& a, const GeneralMechanism& m1, const GeneralMechanism& m2,
                               const GridSpec& grid, double tol) {
  if (m1.d != m2.d) throw InvalidInput("mechanisms must share the latent dimension");
  CheckResult result;
  result.pass = true;
  for (const Vector& z : grid.generate(m1.d)) {
    const Vector lhs = a(m1.apply(z));
    const Vector rhs = m2.apply(a(z));
    if (!lhs.allFinite() || !rhs.allFinite()) {
      std::ostringstream os;
      os << "non-finite evaluation at grid point (" << z.transpose() << ")";
      throw NonFiniteError(os.str());
    }
    const double r = (lhs - rhs).norm() / (1.0 + rhs.norm());
    if (r > result.max_residual || result.worst_point.size() == 0) {
      result.max_residual = std::max(result.max_residual, r);
      result.worst_point = z;
    }
  }
  result.pass = result.max_residual <= tol;
  return result;
}

EigenData eigen_data(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, true);
  EigenData e;
  e.values = es.eigenvalues();
  e.vectors = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(e.vectors);
  const auto& s = svd.singularValues();
  e.condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  e.radius = e.values.cwiseAbs().maxCoeff();
  e.min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    for (Eigen::Index j = i + 1; j < e.values.size(); ++j) {
      e.min_gap = std::min(e.min_gap, std::abs(e.values(i) - e.values(j)));
    }
  }
  return e;
}

}  // namespace detail

CheckResult check_equivariance(const Bijection& a, const GeneralMechanism& m, const GridSpec& grid, double tol) {
  return detail::intertwining_check(a, m, m, grid, tol);
}

CheckResult check_equivariance(const AffineMap& a, const AffineMechanism& m, const GridSpec& grid, double tol) {
  if (a.dim() != m.dim()) throw InvalidInput("map and mechanism dimensions differ");
  return check_equivariance(a.as_bijection(), m.as_general(), grid, tol);
}

namespace {

// Components of the eigen-coordinates treated as zero. A zero vector has
// every component zero.
std::vector<int> zero_components_of(const ComplexVector& c, double cond, double tol) {
  std::vector<int> zeros;
  const double magnitude = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
  const double threshold = std::max(std::sqrt(tol), 1e3 * tol * cond) * magnitude;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (magnitude == 0.0 || std::abs(c(i)) <= threshold) zeros.push_back(static_cast<int>(i));
  }
  return zeros;
}

// dim { A' : A' M = M A', A' v = 0 for v in constraints }.
int linear_solution_dimension(const Matrix& M, const std::vector<Vector>& constraints, double tol) {
  const int d = static_cast<int>(M.rows());
  Matrix rows(d * d + d * static_cast<int>(constraints.size()), d * d);
  rows.setZero();
  rows.topRows(d * d) = sylvester_operator(M, M);
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    for (int j = 0; j < d; ++j) {
      rows.block(d * d + d * static_cast<int>(c), j * d, d, d).diagonal().setConstant(constraints[c](j));
    }
  }
  return static_cast<int>(null_space(rows, tol).cols());
}

Verdict linear_verdict(int dim, int d) {
  if (dim == 0) return {IdentifiabilityClass::exact, 0};
  if (dim == d * d) return {IdentifiabilityClass::unconstrained, dim};
  return {IdentifiabilityClass::other, dim};
}

void fill_spectrum(ConditionReport& report, const detail::EigenData& e, double tol) {
  report.eigenvalues = e.values;
  report.eigenvector_condition = e.condition;
  report.diagonalizable = e.condition < 1.0 / tol;
  report.min_eigen_gap = e.values.size() > 1 ? e.min_gap : 0.0;
  report.distinct_eigenvalues = e.values.size() == 1 || e.min_gap > kEigenGapFraction * e.radius;
}

}  // namespace

ConditionReport theorem2_conditions(const AffineMechanism& m, double tol) {
  const int d = m.dim();
  ConditionReport report;
  report.d = d;
  const auto e = detail::eigen_data(m.M);
  fill_spectrum(report, e, tol);
  report.solution_dimension = linear_solution_dimension(m.M, {m.b}, tol);
  if (!report.diagonalizable) {
    report.verdict = {IdentifiabilityClass::not_applicable, report.solution_dimension};
    return report;
  }
  report.eigen_offsets = e.vectors.partialPivLu().solve(m.b.cast<std::complex<double>>());
  report.zero_components = zero_components_of(report.eigen_offsets, e.condition, tol);
  report.offset_condition = report.zero_components.empty();
  report.verdict = linear_verdict(report.solution_dimension, d);
  return report;
}

ConditionReport offset_identifiability_check(const Matrix& M, std::span<const Vector> offsets, double tol) {
  if (offsets.empty()) throw InvalidInput("offset check needs at least one offset");
  const int d = static_cast<int>(M.rows());
  if (M.cols() != d) throw InvalidInput("offset check needs a square M");
  for (const auto& b : offsets) {
    if (b.size() != d) throw InvalidInput("offset length must equal d");
  }
  ConditionReport report;
  report.d = d;

  std::vector<Vector> distinct;
  for (const auto& b : offsets) {
    const bool seen = std::any_of(distinct.begin(), distinct.end(), [&](const Vector& o) {
      return (o - b).norm() <= tol * (1.0 + std::max(o.norm(), b.norm()));
    });
    if (!seen) distinct.push_back(b);
  }
  report.distinct_offsets = static_cast<int>(distinct.size());

  std::vector<Vector> differences;
  for (std::size_t i = 1; i < distinct.size(); ++i) differences.push_back(distinct[i] - distinct[0]);
  if (!differences.empty()) {
    Matrix D(d, static_cast<Eigen::Index>(differences.size()));
    for (std::size_t i = 0; i < differences.size(); ++i) D.col(static_cast<Eigen::Index>(i)) = differences[i];
    report.offset_difference_rank = numerical_rank(D, tol);
  }
  report.assumption1 = report.distinct_offsets >= d + 1 && report.offset_difference_rank == d;

  const auto e = detail::eigen_data(M);
  fill_spectrum(report, e, tol);
  report.solution_dimension = linear_solution_dimension(M, differences, tol);
  if (!report.diagonalizable) {
    report.verdict = {IdentifiabilityClass::not_applicable, report.solution_dimension};
    return report;
  }

  // Component k needs some pair i != j with (S^{-1}(b^i - b^j))_k != 0;
  // differences against the first offset reach every pair's span.
  report.eigen_offsets = ComplexVector::Zero(d);
  auto lu = e.vectors.partialPivLu();
  for (const auto& diff : differences) {
    const ComplexVector c = lu.solve(diff.cast<std::complex<double>>());
    for (int k = 0; k < d; ++k) {
      if (std::abs(c(k)) > std::abs(report.eigen_offsets(k))) report.eigen_offsets(k) = c(k);
    }
  }
  report.zero_components = zero_components_of(report.eigen_offsets, e.condition, tol);
  report.offset_condition = !differences.empty() && report.zero_components.empty();

  if (report.assumption1 && report.distinct_eigenvalues && report.offset_condition) {
    report.verdict = {IdentifiabilityClass::offset_only, report.solution_dimension};
  } else {
    report.verdict = {IdentifiabilityClass::other, report.solution_dimension};
  }
  return report;
}

}  // namespace mechid
