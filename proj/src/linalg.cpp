#include "mechid/linalg.hpp"

#include "mechid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mechid {

Matrix LinearSubspaceBasis::gram() const {
  const int k = dimension();
  Matrix g(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) g(i, j) = (basis[i].array() * basis[j].array()).sum();
  }
  return g;
}

Matrix LinearSubspaceBasis::as_columns() const {
  Matrix cols_out(static_cast<Eigen::Index>(rows) * cols, dimension());
  for (int k = 0; k < dimension(); ++k) cols_out.col(k) = vec(basis[k]);
  return cols_out;
}

double LinearSubspaceBasis::distance(const Matrix& X) const {
  Vector x = vec(X);
  if (dimension() == 0) return x.norm();
  Matrix Q = as_columns();
  return (x - Q * (Q.transpose() * x)).norm();
}

bool LinearSubspaceBasis::contains(const Matrix& X, double tol) const {
  return distance(X) <= tol * std::max(1.0, X.norm());
}

Vector vec(const Matrix& A) { return Eigen::Map<const Vector>(A.data(), A.size()); }

Matrix unvec(const Eigen::Ref<const Vector>& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols) throw InvalidInput("unvec: size mismatch");
  Matrix out(rows, cols);
  for (int c = 0; c < cols; ++c) out.col(c) = v.segment(static_cast<Eigen::Index>(c) * rows, rows);
  return out;
}

Matrix sylvester_operator(const Matrix& M1, const Matrix& M2) {
  // vec(M2 A) = (I (x) M2) vec(A);  vec(A M1) = (M1^T (x) I) vec(A).
  const Eigen::Index n = M2.rows();  // rows of A
  const Eigen::Index m = M1.rows();  // cols of A
  Matrix K = Matrix::Zero(n * m, n * m);
  for (Eigen::Index j = 0; j < m; ++j) K.block(j * n, j * n, n, n) += M2;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const double c = M1(k, j);
      if (c != 0.0) K.block(j * n, k * n, n, n).diagonal().array() -= c;
    }
  }
  return K;
}

Matrix null_space(const Matrix& K, double tol) {
  const Eigen::Index n = K.cols();
  if (n == 0) return Matrix(0, 0);
  if (K.rows() == 0) return Matrix::Identity(n, n);
  if (!K.allFinite()) throw NonFiniteError("null_space: operator has non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(K, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index rank = 0;
  if (smax > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > tol * smax) ++rank;
    }
  }
  return svd.matrixV().rightCols(n - rank);
}

int numerical_rank(const Matrix& K, double tol) {
  if (K.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(K);
  const Vector& s = svd.singularValues();
  if (s(0) <= 0.0) return 0;
  return static_cast<int>((s.array() > tol * s(0)).count());
}

double condition_number(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  const Vector& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

LinearSubspaceBasis basis_from_columns(const Matrix& columns, int rows, int cols) {
  LinearSubspaceBasis out;
  out.rows = rows;
  out.cols = cols;
  for (Eigen::Index k = 0; k < columns.cols(); ++k) out.basis.push_back(unvec(columns.col(k), rows, cols));
  return out;
}

ComplexVector eigenvalues(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues();
}

double spectrum_distance(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  std::vector<bool> used(static_cast<std::size_t>(b.size()), false);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index best_j = -1;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double dist = std::abs(a(i) - b(j));
      if (dist < best) {
        best = dist;
        best_j = j;
      }
    }
    used[static_cast<std::size_t>(best_j)] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

bool spectra_match(const Matrix& M1, const Matrix& M2, double tol) {
  if (M1.rows() != M2.rows()) return false;
  const ComplexVector e1 = eigenvalues(M1);
  const ComplexVector e2 = eigenvalues(M2);
  const double radius = std::max(e1.cwiseAbs().maxCoeff(), e2.cwiseAbs().maxCoeff());
  return spectrum_distance(e1, e2) <= tol * (1.0 + radius);
}

}  // namespace mechid
