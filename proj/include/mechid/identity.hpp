#pragma once

#include "mechid/decoder.hpp"
#include "mechid/dynamics.hpp"
#include "mechid/grid.hpp"

#include <span>
#include <string>
#include <vector>

namespace mechid {

struct CandidateModel {
  Decoder decoder;
  /// One hypothesis-class index per step (unknown-mechanism setting only).
  std::vector<int> mechanism_assignment;
};

struct IdentityCheck {
  bool pass = false;
  double max_residual = 0.0;
};

/// Max over x = g(z), z on the grid, of
/// |g m g^{-1}(x) - g~ m~ g~^{-1}(x)| / (1 + |x|).
IdentityCheck observation_identity(const Decoder& truth, const GeneralMechanism& m, const Decoder& candidate,
                                   const GeneralMechanism& candidate_m, const GridSpec& grid, double tol);

/// Known mechanism: candidate uses the same m.
IdentityCheck verify_observation_identity(const Decoder& truth, const GeneralMechanism& m,
                                          const CandidateModel& candidate, const GridSpec& grid, double tol);

struct StepIdentityCheck {
  bool pass = false;
  std::vector<double> step_residuals;
};

/// Checks g m_t g^{-1} = g~ m~_t g~^{-1} for each step, with m~_t taken from
/// the hypothesis class at candidate.mechanism_assignment[t].
StepIdentityCheck verify_identity_unknown_mech(const Decoder& truth, std::span<const GeneralMechanism> schedule,
                                               std::span<const GeneralMechanism> hypothesis_class,
                                               const CandidateModel& candidate, const GridSpec& grid, double tol);

struct AuditOptions {
  double tol_equivariance = 1e-9;
  double tol_identity = 1e-8;
  GridSpec grid;
  unsigned threads = 1;
};

struct AuditRow {
  std::string candidate_id;
  bool equivariance_pass = false;
  bool identity_pass = false;
  double equivariance_residual = 0.0;
  double identity_residual = 0.0;
  /// Unnormalised grid maxima of |a m - m a| and |g a^{-1} m a - g m|.
  double commutation_raw = 0.0;
  double identity_raw = 0.0;
  /// L_g * L_{a^{-1}} * commutation_raw.
  double identity_bound = 0.0;
  bool bound_holds = false;

  bool agree() const { return equivariance_pass == identity_pass; }
};

struct AuditTable {
  std::vector<AuditRow> rows;
  double decoder_lipschitz = 0.0;

  bool all_agree() const;
  bool all_bounds_hold() const;
};

/// For every candidate a: does a commute with each mechanism, and does the
/// decoder g o a^{-1} satisfy the observation identity for each mechanism?
/// With a nonempty hypothesis class, both columns instead ask whether each
/// used mechanism has some partner in the class (imitation / unknown-mechanism
/// identity).
AuditTable membership_equivalence_audit(const Decoder& truth, std::span<const GeneralMechanism> mechanisms,
                                        std::span<const Bijection> candidates, const AuditOptions& options = {},
                                        std::span<const GeneralMechanism> hypothesis_class = {});

/// Largest spectral norm of a central-difference Jacobian of f over the
/// points and the corners of their bounding box.
double lipschitz_estimate(const std::function<Vector(const Vector&)>& f, std::span<const Vector> points);

}  // namespace mechid
