#include "mechid/identity.hpp"

#include "mechid/equivariance.hpp"
#include "mechid/errors.hpp"
#include "mechid/imitation.hpp"
#include "mechid/parallel.hpp"
#include "mechid/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mechid {

IdentityCheck observation_identity(const Decoder& truth, const GeneralMechanism& m, const Decoder& candidate,
                                   const GeneralMechanism& candidate_m, const GridSpec& grid, double tol) {
  if (truth.obs_dim() != candidate.obs_dim() || truth.latent_dim() != candidate.latent_dim()) {
    throw InvalidInput("candidate decoder shape differs from the true decoder");
  }
  IdentityCheck result;
  for (const Vector& z : grid.generate(truth.latent_dim())) {
    const Vector x = truth.decode(z);
    const Vector lhs = truth.decode(m.apply(truth.encode(x)));
    const Vector rhs = candidate.decode(candidate_m.apply(candidate.encode(x)));
    const double r = (lhs - rhs).norm() / (1.0 + x.norm());
    if (!std::isfinite(r)) throw NonFiniteError("observation identity: non-finite evaluation");
    result.max_residual = std::max(result.max_residual, r);
  }
  result.pass = result.max_residual <= tol;
  return result;
}

IdentityCheck verify_observation_identity(const Decoder& truth, const GeneralMechanism& m,
                                          const CandidateModel& candidate, const GridSpec& grid, double tol) {
  return observation_identity(truth, m, candidate.decoder, m, grid, tol);
}

StepIdentityCheck verify_identity_unknown_mech(const Decoder& truth, std::span<const GeneralMechanism> schedule,
                                               std::span<const GeneralMechanism> hypothesis_class,
                                               const CandidateModel& candidate, const GridSpec& grid, double tol) {
  if (candidate.mechanism_assignment.size() != schedule.size()) {
    throw InvalidInput("candidate must supply one hypothesis index per step");
  }
  StepIdentityCheck result;
  result.pass = true;
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    const int index = candidate.mechanism_assignment[t];
    if (index < 0 || static_cast<std::size_t>(index) >= hypothesis_class.size()) {
      throw InvalidInput("hypothesis index out of range at step " + std::to_string(t));
    }
    const auto check = observation_identity(truth, schedule[t], candidate.decoder,
                                            hypothesis_class[static_cast<std::size_t>(index)], grid, tol);
    result.step_residuals.push_back(check.max_residual);
    result.pass = result.pass && check.pass;
  }
  return result;
}

bool AuditTable::all_agree() const {
  return std::all_of(rows.begin(), rows.end(), [](const AuditRow& r) { return r.agree(); });
}

bool AuditTable::all_bounds_hold() const {
  return std::all_of(rows.begin(), rows.end(), [](const AuditRow& r) { return r.bound_holds; });
}

double lipschitz_estimate(const std::function<Vector(const Vector&)>& f, std::span<const Vector> points) {
  if (points.empty()) return 0.0;
  const auto d = points.front().size();
  Vector lo = points.front();
  Vector hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::vector<Vector> probes(points.begin(), points.end());
  for (long mask = 0; mask < (1L << d); ++mask) {
    Vector corner(d);
    for (Eigen::Index k = 0; k < d; ++k) corner(k) = (mask >> k) & 1 ? hi(k) : lo(k);
    probes.push_back(std::move(corner));
  }
  double best = 0.0;
  for (const auto& p : probes) {
    const Matrix J = finite_difference_jacobian(f, p);
    Eigen::JacobiSVD<Matrix> svd(J);
    best = std::max(best, svd.singularValues()(0));
  }
  return best;
}

namespace {

// Slack on the measured Lipschitz constants, plus a round-off floor.
constexpr double kLipschitzSlack = 1.01;
constexpr double kRoundoffFloor = 1e-10;

}  // namespace

AuditTable membership_equivalence_audit(const Decoder& truth, std::span<const GeneralMechanism> mechanisms,
                                        std::span<const Bijection> candidates, const AuditOptions& options,
                                        std::span<const GeneralMechanism> hypothesis_class) {
  if (mechanisms.empty()) throw InvalidInput("audit needs at least one mechanism");
  const int d = truth.latent_dim();
  for (const auto& m : mechanisms) {
    if (m.d != d) throw InvalidInput("audit: mechanism dimension differs from the decoder");
  }
  const auto grid_points = options.grid.generate(d);

  // Targets for mechanism i: itself (known mechanism) or the whole class.
  auto targets_for = [&](std::size_t i) -> std::vector<const GeneralMechanism*> {
    std::vector<const GeneralMechanism*> out;
    if (hypothesis_class.empty()) {
      out.push_back(&mechanisms[i]);
    } else {
      for (const auto& h : hypothesis_class) out.push_back(&h);
    }
    return out;
  };

  AuditTable table;
  table.rows.resize(candidates.size());
  std::vector<double> decoder_lipschitz(candidates.size(), 0.0);

  parallel_for(candidates.size(), options.threads, [&](std::size_t c) {
    const Bijection& a = candidates[c];
    AuditRow row;
    row.candidate_id = a.label.empty() ? "candidate_" + std::to_string(c) : a.label;
    const Decoder candidate = Decoder::reparametrized(truth, a);

    row.equivariance_pass = true;
    row.identity_pass = true;
    std::vector<Vector> touched;
    std::vector<Vector> inverse_inputs;
    double output_scale = 0.0;
    struct Raw {
      const GeneralMechanism* m;
      const GeneralMechanism* target;
    };
    std::vector<Raw> chosen;

    for (std::size_t i = 0; i < mechanisms.size(); ++i) {
      const auto& m = mechanisms[i];
      double best_eq = std::numeric_limits<double>::infinity();
      double best_id = std::numeric_limits<double>::infinity();
      const GeneralMechanism* best_target = nullptr;
      for (const GeneralMechanism* target : targets_for(i)) {
        const auto eq = check_imitation(a, m, *target, options.grid, options.tol_equivariance);
        const auto id = observation_identity(truth, m, candidate, *target, options.grid, options.tol_identity);
        if (eq.max_residual < best_eq) {
          best_eq = eq.max_residual;
          best_target = target;
        }
        best_id = std::min(best_id, id.max_residual);
      }
      row.equivariance_residual = std::max(row.equivariance_residual, best_eq);
      row.identity_residual = std::max(row.identity_residual, best_id);
      row.equivariance_pass = row.equivariance_pass && best_eq <= options.tol_equivariance;
      row.identity_pass = row.identity_pass && best_id <= options.tol_identity;
      chosen.push_back({&m, best_target});
    }

    // Unnormalised residuals for the Lipschitz inequality
    //   |g a^{-1} m~ a z - g m z| <= L_g L_{a^{-1}} |a m z - m~ a z|.
    for (const auto& [m, target] : chosen) {
      for (const Vector& z : grid_points) {
        const Vector mz = m->apply(z);
        const Vector az = a(z);
        const Vector target_az = target->apply(az);
        const Vector pulled = a.inverse(target_az);
        row.commutation_raw = std::max(row.commutation_raw, (a(mz) - target_az).norm());
        const Vector gmz = truth.decode(mz);
        row.identity_raw = std::max(row.identity_raw, (truth.decode(pulled) - gmz).norm());
        output_scale = std::max(output_scale, gmz.norm());
        touched.push_back(mz);
        touched.push_back(pulled);
        inverse_inputs.push_back(target_az);
        inverse_inputs.push_back(a(mz));
      }
    }
    const double lg = lipschitz_estimate([&](const Vector& z) { return truth.decode(z); }, touched);
    const double la = lipschitz_estimate(a.inverse, inverse_inputs);
    decoder_lipschitz[c] = lg;
    row.identity_bound =
        kLipschitzSlack * kLipschitzSlack * lg * la * row.commutation_raw + kRoundoffFloor * (1.0 + output_scale);
    row.bound_holds = row.identity_raw <= row.identity_bound;
    table.rows[c] = std::move(row);
  });
  for (double l : decoder_lipschitz) table.decoder_lipschitz = std::max(table.decoder_lipschitz, l);
  return table;
}

}  // namespace mechid
