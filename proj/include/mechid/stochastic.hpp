#pragma once

#include "mechid/dynamics.hpp"
#include "mechid/grid.hpp"
#include "mechid/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mechid {

enum class TestMethod { ks_bonferroni, energy_permutation };

std::string to_string(TestMethod m);
TestMethod parse_test_method(const std::string& name);

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov on scalars (asymptotic p-value with the
/// Stephens small-sample correction).
KsResult ks_two_sample(std::vector<double> x, std::vector<double> y);

struct TwoSampleResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline constexpr int kEnergyPermutations = 500;

/// Rows are observations.
///   ks_bonferroni: min over coordinates of the KS p-value, times d, capped at 1;
///                  statistic is the largest KS distance.
///   energy_permutation: permutation p-value of the energy distance with 500
///                  resamples drawn from `seed`.
TwoSampleResult two_sample_test(const Matrix& X, const Matrix& Y, TestMethod method, std::uint64_t seed);

struct DistributionalTestSpec {
  std::vector<Vector> anchors;
  int samples_per_anchor = 10000;
  double significance = 0.05;
  TestMethod method = TestMethod::ks_bonferroni;
  std::uint64_t seed = 0;

  void validate() const;
  /// `count` low-discrepancy anchors from the box (default 5 in [-1, 1]^d).
  static std::vector<Vector> default_anchors(int d, int count = 5, double lo = -1.0, double hi = 1.0);
};

struct TestReport {
  std::vector<double> statistics;
  std::vector<double> p_values;
  double min_p_value = 1.0;
  /// significance / number of anchors.
  double threshold = 0.0;
  bool pass = false;
};

/// For each anchor z compares samples of a(m1(z, U)) against m2(a(z), U')
/// drawn from independent streams; passes iff every anchor p-value is at
/// least significance / anchors.
TestReport stochastic_equivariance_test(const Bijection& a, const StochasticMechanism& m1,
                                        const StochasticMechanism& m2, const DistributionalTestSpec& spec,
                                        unsigned threads = 1);

struct SignedPermutation {
  /// Row i has its unit entry in column perm[i] with sign signs[i].
  std::vector<int> perm;
  std::vector<int> signs;

  Matrix matrix() const;
  bool operator==(const SignedPermutation&) const = default;
};

/// Each row has exactly one entry with |entry| in [1 - tol, 1 + tol], all
/// others at most tol, and the selected columns are distinct.
std::optional<SignedPermutation> extract_signed_permutation(const Matrix& A, double tol);

struct ClassVerdict {
  bool orthonormal = false;
  double orthonormality_defect = 0.0;
  bool signed_permutation = false;
  std::optional<SignedPermutation> pattern;
  bool volume_preserving = false;
  double det_deviation = 0.0;
  bool in_klindt_class = false;
};

ClassVerdict klindt_identifiability_test(const AffineMap& a, double tol);

using VectorFunction = std::function<Vector(const Vector&)>;

/// Central differences with h = step_scale * (1 + |z|).
Matrix finite_difference_jacobian(const VectorFunction& f, const Vector& z, double step_scale = 1e-5);

struct VolumeCheck {
  bool pass = false;
  double max_deviation = 0.0;
};

/// Passes iff max over points of ||det J(z)| - 1| <= tol. Throws
/// IllConditionedError when the Jacobians at steps h and h/2 differ by more
/// than 10 * tol.
VolumeCheck volume_preservation_test(const VectorFunction& a, std::span<const Vector> points,
                                     double step_scale, double tol);

struct AnchorJacobian {
  Vector anchor;
  Matrix jacobian;
  double orthonormality_defect = 0.0;
  std::optional<SignedPermutation> pattern;
  bool pass = false;
};

struct JacobianVerdict {
  bool in_class = false;
  bool pattern_constant = false;
  std::vector<AnchorJacobian> anchors;
};

JacobianVerdict jacobian_identifiability_test(const VectorFunction& a, std::span<const Vector> anchors,
                                              double step_scale, double tol);

}  // namespace mechid
