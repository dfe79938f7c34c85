#pragma once

#include "mechid/types.hpp"

#include <vector>

namespace mechid {

/// Orthonormal (Frobenius) basis of a space of matrices of a fixed shape.
struct LinearSubspaceBasis {
  int rows = 0;
  int cols = 0;
  std::vector<Matrix> basis;

  int dimension() const { return static_cast<int>(basis.size()); }
  Matrix gram() const;
  /// Column k is vec(basis[k]).
  Matrix as_columns() const;
  /// Distance from X to the span, in Frobenius norm.
  double distance(const Matrix& X) const;
  bool contains(const Matrix& X, double tol) const;
};

Vector vec(const Matrix& A);
Matrix unvec(const Eigen::Ref<const Vector>& v, int rows, int cols);

/// Matrix of A -> M2 A - A M1 acting on column-major vec(A).
Matrix sylvester_operator(const Matrix& M1, const Matrix& M2);

/// Orthonormal columns spanning {x : K x = 0}; singular values at or below
/// tol * sigma_max count as zero. A zero operator has a full null space.
Matrix null_space(const Matrix& K, double tol);

int numerical_rank(const Matrix& K, double tol);

double condition_number(const Matrix& A);

LinearSubspaceBasis basis_from_columns(const Matrix& columns, int rows, int cols);

ComplexVector eigenvalues(const Matrix& M);

/// True when the eigenvalue multisets agree up to tol * (1 + spectral radius).
bool spectra_match(const Matrix& M1, const Matrix& M2, double tol);

/// Greedy matching distance between two eigenvalue multisets.
double spectrum_distance(const ComplexVector& a, const ComplexVector& b);

}  // namespace mechid
