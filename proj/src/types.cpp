#include "mechid/types.hpp"

#include "mechid/errors.hpp"

#include <utility>

namespace mechid {

AffineMap::AffineMap(Matrix a, Vector offset) : A(std::move(a)), p(std::move(offset)) {
  if (A.rows() != A.cols() || A.rows() != p.size()) {
    throw InvalidInput("affine map needs a square A matching the offset length");
  }
}

AffineMap AffineMap::identity(int d) { return AffineMap(Matrix::Identity(d, d), Vector::Zero(d)); }

AffineMap AffineMap::inverse() const {
  Eigen::PartialPivLU<Matrix> lu(A);
  Matrix inv = lu.inverse();
  return AffineMap(inv, -inv * p);
}

AffineMap AffineMap::compose(const AffineMap& inner) const { return AffineMap(A * inner.A, A * inner.p + p); }

AffineMap AffineMap::power(int k) const {
  if (k < 0) return inverse().power(-k);
  AffineMap result = identity(dim());
  for (int i = 0; i < k; ++i) result = compose(result);
  return result;
}

bool AffineMap::invertible(double tol) const {
  if (A.size() == 0) return false;
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& s = svd.singularValues();
  return s(0) > 0.0 && s(s.size() - 1) > tol * s(0);
}

Bijection AffineMap::as_bijection(std::string label) const {
  AffineMap inv = inverse();
  AffineMap fwd = *this;
  return Bijection{[fwd](const Vector& z) { return fwd.apply(z); },
                   [inv](const Vector& x) { return inv.apply(x); }, std::move(label)};
}

}  // namespace mechid
