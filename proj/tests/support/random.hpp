#pragma once

#include "mechid/dynamics.hpp"
#include "mechid/types.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace mechid::testing {

using Engine = std::mt19937_64;

inline Matrix gaussian_matrix(Engine& rng, int rows, int cols) {
  std::normal_distribution<double> normal;
  Matrix A(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) A(i, j) = normal(rng);
  return A;
}

inline Vector gaussian_vector(Engine& rng, int d) { return gaussian_matrix(rng, d, 1).col(0); }

inline double condition(const Matrix& A) {
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

/// Random invertible matrix with condition number below max_cond.
inline Matrix well_conditioned(Engine& rng, int d, double max_cond = 20.0) {
  for (;;) {
    Matrix A = gaussian_matrix(rng, d, d);
    if (condition(A) < max_cond) return A;
  }
}

/// Real eigenvalues with |lambda| in [0.5, 2.5], pairwise gaps >= min_gap,
/// none equal to 1.
inline Vector distinct_eigenvalues(Engine& rng, int d, double min_gap = 0.25) {
  std::uniform_real_distribution<double> mag(0.5, 2.5);
  std::bernoulli_distribution flip(0.3);
  for (;;) {
    Vector lambda(d);
    for (int i = 0; i < d; ++i) lambda(i) = (flip(rng) ? -1.0 : 1.0) * mag(rng);
    bool ok = true;
    for (int i = 0; i < d && ok; ++i) {
      if (std::abs(lambda(i) - 1.0) < min_gap) ok = false;
      for (int j = i + 1; j < d && ok; ++j) ok = std::abs(lambda(i) - lambda(j)) >= min_gap;
    }
    if (ok) return lambda;
  }
}

struct Diagonalizable {
  Matrix M;
  Matrix S;
  Vector lambda;
};

inline Diagonalizable diagonalizable_with_distinct(Engine& rng, int d, double max_cond = 20.0) {
  Diagonalizable out;
  out.lambda = distinct_eigenvalues(rng, d);
  out.S = well_conditioned(rng, d, max_cond);
  out.M = out.S * out.lambda.asDiagonal() * out.S.inverse();
  return out;
}

inline Matrix permutation_matrix(const std::vector<int>& perm) {
  const auto d = static_cast<int>(perm.size());
  Matrix P = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) P(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return P;
}

inline std::vector<int> random_permutation(Engine& rng, int d) {
  std::vector<int> p(static_cast<std::size_t>(d));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline Matrix random_signed_permutation(Engine& rng, int d) {
  Matrix P = permutation_matrix(random_permutation(rng, d));
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < d; ++i)
    if (coin(rng)) P.row(i) *= -1.0;
  return P;
}

inline Matrix rotation2(double radians) {
  Matrix R(2, 2);
  R << std::cos(radians), -std::sin(radians), std::sin(radians), std::cos(radians);
  return R;
}

inline Matrix diag(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v.asDiagonal();
}

inline Vector vecof(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace mechid::testing
