#pragma once

#include "mechid/dynamics.hpp"
#include "mechid/equivariance.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mechid {

struct ObservationPair {
  Vector x;
  Vector x_next;
  /// b_t of the step x -> x_next.
  Vector offset;
};

struct RecoveryProblem {
  Matrix M;
  std::vector<ObservationPair> pairs;
  int latent_dim = 0;
  int obs_dim = 0;

  void validate() const;
  /// Pairs (x_t, x_{t+1}) of a trajectory whose mechanisms are affine with a
  /// shared M; labels resolve against `mechanisms`.
  static RecoveryProblem from_trajectory(const Trajectory& trajectory,
                                         std::span<const AffineMechanism> mechanisms);
};

struct RecoveryResult {
  /// d x n encoder estimate.
  Matrix encoder;
  int solution_space_dim = 0;
  double residual = 0.0;
  Verdict identifiability;
  ConditionReport conditions;
  int observation_rank = 0;
  std::size_t pairs_used = 0;
  /// Fewer than d (n + 1) pairs were supplied.
  bool fewer_pairs_than_recommended = false;
  /// Orthonormal null directions of the homogeneous system, as d x n matrices.
  std::vector<Matrix> null_directions;
};

/// Solves E x_{t+1} = M E x_t + b_t over all pairs for E restricted to the
/// span of the observations. Throws DataDeficiencyError when the observations
/// do not affinely span a d-dimensional set.
RecoveryResult recover_linear_encoder(const RecoveryProblem& problem, double tol = kDefaultTolerance,
                                      std::uint64_t seed = 0);

/// Same solve; the identifiability field comes from the multiple-offset check.
RecoveryResult recover_with_multiple_offsets(const RecoveryProblem& problem, double tol = kDefaultTolerance,
                                             std::uint64_t seed = 0);

enum class ComparisonClass { exact, offset, signed_permutation, signed_permutation_offset, linear };

std::string to_string(ComparisonClass c);
ComparisonClass parse_comparison_class(const std::string& name);

/// z = E x + e.
struct AffineEncoder {
  Matrix E;
  Vector e;

  static AffineEncoder linear(Matrix E);
};

struct Comparison {
  /// min_a |a o truth - estimate| / |truth| over the class, in the Frobenius
  /// norm of the stacked [E | e].
  double residual = 0.0;
  AffineMap best;
};

Comparison compare_up_to_class(const AffineEncoder& estimate, const AffineEncoder& truth, ComparisonClass cls);

}  // namespace mechid
