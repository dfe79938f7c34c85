#pragma once

#include "mechid/equivariance.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mechid {

/// Solutions (A, p) of {A M1 = M2 A, A b1 + p = M2 p + b2}, i.e. affine a
/// with a o m1 = m2 o a.
AffineFamily find_affine_intertwiners(const AffineMechanism& m1, const AffineMechanism& m2,
                                      double tol = kDefaultTolerance);

/// Max over the grid of |a(m1(z)) - m2(a(z))| / (1 + |m2(a(z))|), compared to tol.
CheckResult check_imitation(const Bijection& a, const GeneralMechanism& m1, const GeneralMechanism& m2,
                            const GridSpec& grid, double tol);

struct MechanismClass {
  std::vector<AffineMechanism> used;
  std::vector<AffineMechanism> hypothesized;

  void validate() const;
  int dim() const { return used.empty() ? 0 : used.front().dim(); }
  /// used followed by hypothesized.
  std::vector<AffineMechanism> all() const;
};

struct ImitationRecord {
  std::string source;
  std::string target;
  AffineMap map;
  double residual = 0.0;
};

struct AssignmentSolution {
  /// assignment[i] indexes MechanismClass::all() for used mechanism i.
  std::vector<int> assignment;
  AffineFamily family;
  std::optional<AffineMap> representative;
  std::vector<ImitationRecord> records;
};

struct ClosureOptions {
  std::size_t budget = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  GridSpec grid;
};

struct ImitatorClosure {
  /// Assignments with an invertible representative, ordered by enumeration index.
  std::vector<AssignmentSolution> solutions;
  std::size_t assignments_considered = 0;
  /// Assignments with a nonempty family but no invertible representative found.
  std::size_t without_representative = 0;
  /// Dimension of the span of every solution family's A-part.
  int combined_a_dimension = 0;
};

/// Throws BudgetError when the spectrum-compatible assignments exceed the budget.
ImitatorClosure imitator_closure(const MechanismClass& mechanisms, double tol = kDefaultTolerance,
                                 const ClosureOptions& options = {});

struct CycleReport {
  /// False when some used mechanism has no imitation target under a.
  bool in_closure = false;
  int unmatched_index = -1;
  std::vector<int> permutation;
  std::vector<std::vector<int>> cycles;
  /// Cycle length containing each index.
  std::vector<int> cycle_length;
  /// Residual of a^k against mechanism i, k = cycle_length[i].
  std::vector<double> power_residuals;
  bool powers_commute = false;

  bool bijective() const;
};

/// Throws AmbiguityError when a matches more than one target for some mechanism.
CycleReport cycle_analysis(const AffineMap& a, std::span<const AffineMechanism> used, const GridSpec& grid,
                           double tol);

}  // namespace mechid
