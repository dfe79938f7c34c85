#include "mechid/equivariance.hpp"
#include "mechid/errors.hpp"
#include "support/oracles.hpp"
#include "support/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace mechid;
using namespace mechid::testing;

namespace {

const Matrix kRot90 = mat2(0, -1, 1, 0);
const GridSpec kGrid{};

bool in_span(const Matrix& X, const std::vector<Matrix>& spanning) {
  Matrix cols(X.size(), static_cast<Eigen::Index>(spanning.size()));
  for (std::size_t k = 0; k < spanning.size(); ++k) cols.col(static_cast<Eigen::Index>(k)) = vec(spanning[k]);
  const Vector coeff = cols.colPivHouseholderQr().solve(vec(X));
  return (cols * coeff - vec(X)).norm() <= 1e-9 * (1 + X.norm());
}

}  // namespace

TEST_CASE("sylvester operator matches the entrywise oracle up to the flattening order") {
  Engine rng(4);
  const Matrix M1 = gaussian_matrix(rng, 3, 3);
  const Matrix M2 = gaussian_matrix(rng, 3, 3);
  const Matrix A = gaussian_matrix(rng, 3, 3);
  const Vector lib = sylvester_operator(M1, M2) * vec(A);
  const Matrix expected = M2 * A - A * M1;
  CHECK((unvec(lib, 3, 3) - expected).norm() < 1e-12);
  // Oracle flattens row-major; compare through the same product.
  Vector row_major(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) row_major(i * 3 + j) = A(i, j);
  const Vector oracle = entrywise_intertwiner_operator(M1, M2) * row_major;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(oracle(i * 3 + j) == doctest::Approx(expected(i, j)));
}

TEST_CASE("linear_commutant examples") {
  SUBCASE("distinct diagonal commutes only with diagonals") {
    const auto basis = linear_commutant(diag({2, 3}));
    CHECK(basis.dimension() == 2);
    for (const auto& B : basis.basis) CHECK(std::abs(B(0, 1)) + std::abs(B(1, 0)) < 1e-12);
    CHECK(basis.contains(diag({1, 0}), 1e-10));
    CHECK(basis.contains(diag({0, 1}), 1e-10));
  }
  SUBCASE("identity commutes with everything") { CHECK(linear_commutant(Matrix::Identity(2, 2)).dimension() == 4); }
  SUBCASE("rotation by 90 degrees: span{I, M} by LU oracle") {
    const Matrix oracle = lu_kernel(entrywise_intertwiner_operator(kRot90, kRot90));
    REQUIRE(oracle.cols() == 2);
    for (Eigen::Index k = 0; k < oracle.cols(); ++k) {
      Matrix K(2, 2);
      K << oracle(0, k), oracle(1, k), oracle(2, k), oracle(3, k);
      CHECK(in_span(K, {Matrix::Identity(2, 2), kRot90}));
    }
    const auto basis = linear_commutant(kRot90);
    CHECK(basis.dimension() == 2);
    for (const auto& B : basis.basis) CHECK(in_span(B, {Matrix::Identity(2, 2), kRot90}));
  }
}

TEST_CASE("commutant basis is orthonormal and commutes, across random spectra") {
  Engine rng(5);
  const double tol = kDefaultTolerance;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 5;
    const auto diagm = diagonalizable_with_distinct(rng, d);
    const auto basis = linear_commutant(diagm.M, tol);
    CAPTURE(trial);
    CHECK(basis.dimension() == d);
    CHECK((basis.gram() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-10);
    for (const auto& A : basis.basis) {
      CHECK((diagm.M * A - A * diagm.M).norm() <= 10 * tol * diagm.M.norm() * A.norm());
    }
    CHECK(basis.contains(Matrix::Identity(d, d), 1e-8));
    CHECK(lu_kernel_dimension(entrywise_intertwiner_operator(diagm.M, diagm.M), 1e-8) == d);
  }
  CHECK(linear_commutant(3.5 * Matrix::Identity(4, 4)).dimension() == 16);
}

TEST_CASE("affine_equivariances examples") {
  SUBCASE("M = 2I, b = 0: every A with p = 0") {
    const auto fam = affine_equivariances(AffineMechanism(diag({2, 2}), vecof({0, 0})));
    CHECK(fam.dimension() == 4);
    CHECK(fam.a_part.dimension() == 4);
    CHECK(fam.p_free.empty());
    CHECK(fam.contains(AffineMap(mat2(1, 2, 3, 5), vecof({0, 0})), 1e-9));
    CHECK_FALSE(fam.contains(AffineMap(mat2(1, 2, 3, 5), vecof({0.1, 0})), 1e-9));
    CHECK(fam.verdict().kind == IdentifiabilityClass::linear_family);
  }
  SUBCASE("M = diag(2,3), b = (1,1): A diagonal with p = (c1-1, (c2-1)/2)") {
    const auto fam = affine_equivariances(AffineMechanism(diag({2, 3}), vecof({1, 1})));
    CHECK(fam.dimension() == 2);
    CHECK_FALSE(fam.shift_degenerate);
    for (auto [c1, c2] : {std::pair{1.0, 1.0}, {2.0, -1.0}, {0.3, 4.0}}) {
      // Solving (A - I) b = (M - I) p by hand for diagonal A.
      const AffineMap expected(diag({c1, c2}), vecof({c1 - 1.0, (c2 - 1.0) / 2.0}));
      CHECK(fam.contains(expected, 1e-9));
      CHECK(check_equivariance(expected, AffineMechanism(diag({2, 3}), vecof({1, 1})), kGrid, 1e-9).pass);
    }
    CHECK_FALSE(fam.contains(AffineMap(diag({2, 1}), vecof({0, 0})), 1e-9));
    CHECK_FALSE(fam.contains(AffineMap(mat2(1, 0.5, 0, 1), vecof({0, 0})), 1e-9));
    CHECK(fam.verdict().kind == IdentifiabilityClass::linear_family);
  }
  SUBCASE("identity mechanism leaves the encoder unconstrained") {
    const auto fam = affine_equivariances(AffineMechanism::identity(2));
    CHECK(fam.dimension() == 6);
    CHECK(fam.shift_degenerate);
    CHECK(fam.verdict().kind == IdentifiabilityClass::unconstrained);
  }
}

TEST_CASE("identity-like mechanisms with an offset give offset or mixed families") {
  // m(z) = z + b: A b = b, p free.
  const auto fam = affine_equivariances(AffineMechanism(Matrix::Identity(2, 2), vecof({1, 0})));
  CHECK(fam.dimension() == 4);
  CHECK(fam.p_free.size() == 2);
  CHECK(fam.verdict().kind == IdentifiabilityClass::other);
  CHECK(fam.contains(AffineMap(mat2(1, 5, 0, 2), vecof({3, 4})), 1e-9));
  CHECK_FALSE(fam.contains(AffineMap(mat2(2, 0, 0, 1), vecof({0, 0})), 1e-9));
}

TEST_CASE("shared_equivariances examples") {
  const AffineMechanism d23(diag({2, 3}), vecof({0, 0}), "diag");
  const AffineMechanism rot(kRot90, vecof({0, 0}), "rot");
  SUBCASE("diagonal intersect span{I, rot90} = {cI}") {
    const std::vector<AffineMechanism> both = {d23, rot};
    const auto fam = shared_equivariances(both);
    CHECK(fam.a_part.dimension() == 1);
    CHECK(fam.a_part.contains(Matrix::Identity(2, 2), 1e-9));
    // Independent route: intersect the LU kernels of both operators.
    Matrix stacked(8, 4);
    stacked << entrywise_intertwiner_operator(d23.M, d23.M), entrywise_intertwiner_operator(rot.M, rot.M);
    CHECK(lu_kernel_dimension(stacked) == 1);
  }
  SUBCASE("duplicates change nothing") {
    const std::vector<AffineMechanism> twice = {d23, d23};
    const auto a = shared_equivariances(twice);
    const auto b = affine_equivariances(d23);
    CHECK(a.dimension() == b.dimension());
    for (const auto& B : b.a_part.basis) CHECK(a.a_part.contains(B, 1e-9));
  }
  SUBCASE("single mechanism matches the commutant") {
    const std::vector<AffineMechanism> one = {d23};
    CHECK(shared_equivariances(one).a_part.dimension() == linear_commutant(d23.M).dimension());
  }
  CHECK_THROWS_AS(shared_equivariances(std::span<const AffineMechanism>{}), InvalidInput);
}

TEST_CASE("shared dimension never exceeds any member's") {
  Engine rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 3;
    std::vector<AffineMechanism> ms;
    int min_dim = 1 << 20;
    for (int k = 0; k < 1 + trial % 3; ++k) {
      Matrix M = trial % 2 ? diagonalizable_with_distinct(rng, d).M : Matrix(2.0 * Matrix::Identity(d, d));
      ms.emplace_back(M, trial % 4 == 0 ? Vector(Vector::Zero(d)) : gaussian_vector(rng, d));
      min_dim = std::min(min_dim, affine_equivariances(ms.back()).dimension());
    }
    CHECK(shared_equivariances(ms).dimension() <= min_dim);
  }
}

TEST_CASE("check_equivariance examples") {
  Engine rng(7);
  SUBCASE("scaling commutes with a linear mechanism") {
    const AffineMechanism m(well_conditioned(rng, 3), Vector::Zero(3));
    for (double c : {-2.0, 0.5, 3.0}) {
      CHECK(check_equivariance(AffineMap(c * Matrix::Identity(3, 3), Vector::Zero(3)), m, kGrid, 1e-9).pass);
    }
  }
  SUBCASE("permutations commute with the identity mechanism") {
    const AffineMap P(permutation_matrix({2, 0, 1}), Vector::Zero(3));
    CHECK(check_equivariance(P, AffineMechanism::identity(3), kGrid, 1e-12).pass);
  }
  SUBCASE("a shift does not commute with diag(2,3)") {
    const AffineMap shift(Matrix::Identity(2, 2), vecof({0.3, 0}));
    const AffineMechanism m(diag({2, 3}), vecof({0, 0}));
    const auto r = check_equivariance(shift, m, kGrid, 1e-9);
    CHECK_FALSE(r.pass);
    // At z = 0: a(m(0)) = (0.3, 0) and m(a(0)) = (0.6, 0).
    const Vector lhs = shift.apply(m.apply(Vector::Zero(2)));
    const Vector rhs = m.apply(shift.apply(Vector::Zero(2)));
    CHECK((lhs - rhs).norm() >= 0.3 - 1e-15);
    CHECK(r.max_residual > 0.1);
  }
  SUBCASE("non-finite evaluations are reported") {
    const Bijection blowup{[](const Vector& z) { return Vector(z.array() / 0.0); }, [](const Vector& z) { return z; }, "inf"};
    CHECK_THROWS_AS(check_equivariance(blowup, AffineMechanism::identity(2).as_general(), kGrid, 1e-9), NonFiniteError);
  }
}

TEST_CASE("equivariances form a group on the grid") {
  Engine rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 3;
    const AffineMechanism m(diagonalizable_with_distinct(rng, d).M, gaussian_vector(rng, d));
    const auto fam = affine_equivariances(m);
    const auto a1 = fam.invertible_representative(2 * trial);
    const auto a2 = fam.invertible_representative(2 * trial + 1);
    REQUIRE(a1);
    REQUIRE(a2);
    const double tol = 1e-9;
    REQUIRE(check_equivariance(*a1, m, kGrid, tol).pass);
    REQUIRE(check_equivariance(*a2, m, kGrid, tol).pass);
    CHECK(check_equivariance(a1->compose(*a2), m, kGrid, 10 * tol).pass);
    CHECK(check_equivariance(a1->inverse(), m, kGrid, 10 * tol).pass);
  }
}

TEST_CASE("every family member passes the pointwise check") {
  Engine rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 2 + trial % 3;
    Matrix M;
    switch (trial % 4) {
      case 0: M = diagonalizable_with_distinct(rng, d).M; break;
      case 1: M = 1.5 * Matrix::Identity(d, d); break;
      case 2: M = Matrix::Identity(d, d); break;
      default: {
        Vector lambda = distinct_eigenvalues(rng, d);
        lambda(1) = lambda(0);
        const Matrix S = well_conditioned(rng, d);
        M = S * lambda.asDiagonal() * S.inverse();
      }
    }
    const AffineMechanism m(M, trial % 3 == 0 ? Vector(Vector::Zero(d)) : gaussian_vector(rng, d));
    const auto fam = affine_equivariances(m);
    for (int k = 0; k < 5; ++k) {
      Vector c(fam.dimension());
      for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = std::normal_distribution<double>()(rng);
      const AffineMap a = fam.element(c);
      if (!a.invertible(1e-6)) continue;
      CAPTURE(trial);
      CHECK(check_equivariance(a, m, kGrid, 1e-9).pass);
    }
  }
}

TEST_CASE("theorem2_conditions examples") {
  SUBCASE("distinct eigenvalues and nonzero eigen-offsets: exact") {
    const auto r = theorem2_conditions(AffineMechanism(diag({2, 3}), vecof({1, 1})));
    CHECK(r.diagonalizable);
    CHECK(r.distinct_eigenvalues);
    CHECK(r.min_eigen_gap == doctest::Approx(1.0));
    CHECK(r.offset_condition);
    CHECK(r.zero_components.empty());
    CHECK(r.verdict.kind == IdentifiabilityClass::exact);
  }
  SUBCASE("zero eigen-offset component") {
    const auto r = theorem2_conditions(AffineMechanism(diag({2, 3}), vecof({1, 0})));
    CHECK_FALSE(r.offset_condition);
    REQUIRE(r.zero_components.size() == 1);
    CHECK(r.zero_components[0] == 1);
    CHECK(r.verdict.kind == IdentifiabilityClass::other);
    CHECK(r.verdict.dimension >= 1);
  }
  SUBCASE("repeated eigenvalue") {
    const auto r = theorem2_conditions(AffineMechanism(diag({2, 2}), vecof({1, 1})));
    CHECK_FALSE(r.distinct_eigenvalues);
    CHECK(r.verdict.kind == IdentifiabilityClass::other);
  }
  SUBCASE("non-diagonalizable matrices are not applicable, never a crash") {
    const auto r = theorem2_conditions(AffineMechanism(mat2(1, 1, 0, 1), vecof({1, 1})));
    CHECK_FALSE(r.diagonalizable);
    CHECK(r.verdict.kind == IdentifiabilityClass::not_applicable);
  }
  SUBCASE("complex eigenvalues are handled") {
    const auto r = theorem2_conditions(AffineMechanism(2.0 * kRot90, vecof({1, 0})));
    CHECK(r.diagonalizable);
    CHECK(r.distinct_eigenvalues);
    CHECK(r.offset_condition);
    CHECK(r.verdict.kind == IdentifiabilityClass::exact);
  }
}

TEST_CASE("condition verdict tracks planted zero eigen-offsets") {
  Engine rng(10);
  for (int trial = 0; trial < 60; ++trial) {
    const int d = 2 + trial % 3;
    const int k = trial % (d + 1);
    const auto dm = diagonalizable_with_distinct(rng, d);
    Vector c = gaussian_vector(rng, d);
    for (int i = 0; i < d; ++i) c(i) += (c(i) >= 0 ? 0.5 : -0.5);
    const auto zeros = random_permutation(rng, d);
    for (int i = 0; i < k; ++i) c(zeros[static_cast<std::size_t>(i)]) = 0.0;
    const auto r = theorem2_conditions(AffineMechanism(dm.M, dm.S * c));
    CAPTURE(trial);
    CHECK(static_cast<int>(r.zero_components.size()) == k);
    CHECK(r.solution_dimension == k);
  }
}

TEST_CASE("offset_identifiability_check examples") {
  const Matrix M = diag({2, 3});
  SUBCASE("three affinely independent offsets") {
    const std::vector<Vector> offs = {vecof({0, 0}), vecof({1, 0}), vecof({0, 1})};
    const auto r = offset_identifiability_check(M, offs);
    CHECK(r.assumption1);
    CHECK(r.offset_difference_rank == 2);
    CHECK(r.offset_condition);
    CHECK(r.verdict.kind == IdentifiabilityClass::offset_only);
    CHECK(r.assumption2_assumed);
  }
  SUBCASE("too few offsets") {
    const std::vector<Vector> offs = {vecof({0, 0}), vecof({1, 0})};
    const auto r = offset_identifiability_check(M, offs);
    CHECK_FALSE(r.assumption1);
    CHECK(r.distinct_offsets == 2);
    CHECK(r.verdict.kind == IdentifiabilityClass::other);
  }
  SUBCASE("collinear differences") {
    const std::vector<Vector> offs = {vecof({0, 0}), vecof({1, 0}), vecof({2, 0})};
    const auto r = offset_identifiability_check(M, offs);
    CHECK(r.offset_difference_rank == 1);
    CHECK_FALSE(r.assumption1);
    CHECK(r.verdict.kind == IdentifiabilityClass::other);
    CHECK(r.solution_dimension == 1);
  }
  SUBCASE("repeated offsets do not count as distinct") {
    const std::vector<Vector> offs = {vecof({0, 0}), vecof({1, 0}), vecof({1, 0}), vecof({0, 0})};
    CHECK(offset_identifiability_check(M, offs).distinct_offsets == 2);
  }
  CHECK_THROWS_AS(offset_identifiability_check(M, std::span<const Vector>{}), InvalidInput);
}
