#pragma once

#include "mechid/dynamics.hpp"
#include "mechid/grid.hpp"
#include "mechid/linalg.hpp"
#include "mechid/types.hpp"

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mechid {

inline constexpr double kDefaultTolerance = 1e-9;
/// Eigenvalues closer than this fraction of the spectral radius are repeated.
inline constexpr double kEigenGapFraction = 1e-7;

enum class IdentifiabilityClass { exact, offset_only, linear_family, unconstrained, other, not_applicable };

struct Verdict {
  IdentifiabilityClass kind = IdentifiabilityClass::other;
  /// Measured solution dimension (meaningful for every kind but not_applicable).
  int dimension = 0;

  std::string to_string() const;
  bool operator==(const Verdict&) const = default;
};

/// Solution set of a system of affine constraints on maps a(z) = A z + p:
/// { particular + sum_k c_k direction_k }. Directions are orthonormal columns
/// over the stacked coordinates (vec(A), p).
struct AffineFamily {
  int d = 0;
  bool nonempty = false;
  AffineMap particular;
  Matrix directions;

  /// Orthonormal basis of the A-components of the directions.
  LinearSubspaceBasis a_part;
  /// Offset change accompanying a unit step along a_part.basis[k].
  std::vector<Vector> p_for_basis;
  /// Offsets that may be added with A unchanged.
  std::vector<Vector> p_free;
  /// (M - I) singular for some constrained mechanism, so p is not a
  /// function of A.
  bool shift_degenerate = false;

  int dimension() const { return static_cast<int>(directions.cols()); }
  AffineMap element(const Vector& coefficients) const;
  bool contains(const AffineMap& a, double tol) const;
  /// Random combinations of the directions (20 attempts by default) until an
  /// element with invertible A appears.
  std::optional<AffineMap> invertible_representative(std::uint64_t seed, int attempts = 20) const;
  /// Classification per the decision table exact / offset-only /
  /// linear-family / unconstrained / other(dim).
  Verdict verdict() const;
};

/// Solves the stacked affine system rows * (vec(A), p) = rhs.
AffineFamily solve_affine_family(const Matrix& rows, const Vector& rhs, int d, double tol,
                                 const std::optional<AffineMap>& known_solution = std::nullopt);

LinearSubspaceBasis linear_commutant(const Matrix& M, double tol = kDefaultTolerance);

AffineFamily affine_equivariances(const AffineMechanism& m, double tol = kDefaultTolerance);

/// Throws InvalidInput for an empty list.
AffineFamily shared_equivariances(std::span<const AffineMechanism> mechanisms, double tol = kDefaultTolerance);

/// Appends the constraints {A M1 = M2 A, A b1 - (M2 - I) p = b2} to (rows, rhs).
void append_intertwining_constraints(const AffineMechanism& m1, const AffineMechanism& m2, Matrix& rows,
                                     Vector& rhs);

struct CheckResult {
  bool pass = false;
  double max_residual = 0.0;
  Vector worst_point;
};

/// Max over the grid of |a(m(z)) - m(a(z))| / (1 + |m(a(z))|), compared to tol.
CheckResult check_equivariance(const Bijection& a, const GeneralMechanism& m, const GridSpec& grid, double tol);
CheckResult check_equivariance(const AffineMap& a, const AffineMechanism& m, const GridSpec& grid, double tol);

struct ConditionReport {
  int d = 0;
  bool diagonalizable = false;
  double eigenvector_condition = 0.0;

  bool distinct_eigenvalues = false;
  double min_eigen_gap = 0.0;
  ComplexVector eigenvalues;

  /// Per-component eigen-coordinates of the offset (S^{-1} b), or, for the
  /// multiple-offset check, of the offset difference with the largest
  /// magnitude in that component.
  bool offset_condition = false;
  ComplexVector eigen_offsets;
  std::vector<int> zero_components;

  /// Only evaluated by offset_identifiability_check.
  bool assumption1 = false;
  int distinct_offsets = 0;
  int offset_difference_rank = 0;
  /// Positive-measure regularity is a declared hypothesis, never tested.
  bool assumption2_assumed = true;

  /// Dimension of {A' : A' M = M A', A' b = 0 for each constraining b},
  /// the non-identity part of the linear equivariances.
  int solution_dimension = 0;
  Verdict verdict;
};

ConditionReport theorem2_conditions(const AffineMechanism& m, double tol = kDefaultTolerance);

ConditionReport offset_identifiability_check(const Matrix& M, std::span<const Vector> offsets,
                                             double tol = kDefaultTolerance);

}  // namespace mechid
