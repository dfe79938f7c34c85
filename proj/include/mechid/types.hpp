#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <string>

namespace mechid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;

/// A map on latent vectors together with its inverse.
struct Bijection {
  std::function<Vector(const Vector&)> forward;
  std::function<Vector(const Vector&)> inverse;
  std::string label;

  Vector operator()(const Vector& z) const { return forward(z); }
};

/// a(z) = A z + p.
struct AffineMap {
  Matrix A;
  Vector p;

  AffineMap() = default;
  AffineMap(Matrix a, Vector offset);

  static AffineMap identity(int d);

  int dim() const { return static_cast<int>(A.rows()); }
  Vector apply(const Vector& z) const { return A * z + p; }
  AffineMap inverse() const;
  /// (*this) after `inner`: z -> A (inner.A z + inner.p) + p.
  AffineMap compose(const AffineMap& inner) const;
  AffineMap power(int k) const;
  bool invertible(double tol = 1e-9) const;
  Bijection as_bijection(std::string label = "affine") const;
};

}  // namespace mechid
