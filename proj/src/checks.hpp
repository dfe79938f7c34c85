#pragma once

#include "mechid/equivariance.hpp"

namespace mechid::detail {

/// Grid maximum of |a(m1(z)) - m2(a(z))| / (1 + |m2(a(z))|).
CheckResult intertwining_check(const Bijection& a, const GeneralMechanism& m1, const GeneralMechanism& m2,
                               const GridSpec& grid, double tol);

/// Eigen-coordinates S^{-1} v for every column v, with the eigendecomposition
/// quality measures.
struct EigenData {
  ComplexVector values;
  Eigen::MatrixXcd vectors;
  double condition = 0.0;
  double min_gap = 0.0;
  double radius = 0.0;
};

EigenData eigen_data(const Matrix& M);

}  // namespace mechid::detail
