#include "mechid/imitation.hpp"

#include "checks.hpp"
#include "mechid/errors.hpp"
#include "mechid/parallel.hpp"
#include "mechid/rng.hpp"

#include <algorithm>
#include <sstream>

namespace mechid {

namespace {

constexpr double kSpectrumTolerance = 1e-7;

bool same_mechanism(const AffineMechanism& a, const AffineMechanism& b) {
  return a.dim() == b.dim() && a.M == b.M && a.b == b.b;
}

bool shift_singular(const Matrix& M, double tol) {
  const int d = static_cast<int>(M.rows());
  return numerical_rank(M - Matrix::Identity(d, d), tol) < d;
}

}  // namespace

AffineFamily find_affine_intertwiners(const AffineMechanism& m1, const AffineMechanism& m2, double tol) {
  if (m1.dim() != m2.dim()) throw InvalidInput("intertwiners need mechanisms of equal dimension");
  const int d = m1.dim();
  Matrix rows;
  Vector rhs;
  append_intertwining_constraints(m1, m2, rows, rhs);
  std::optional<AffineMap> hint;
  if (same_mechanism(m1, m2)) hint = AffineMap::identity(d);
  AffineFamily family = solve_affine_family(rows, rhs, d, tol, hint);
  family.shift_degenerate = shift_singular(m2.M, tol);
  return family;
}

CheckResult check_imitation(const Bijection& a, const GeneralMechanism& m1, const GeneralMechanism& m2,
                            const GridSpec& grid, double tol) {
  return detail::intertwining_check(a, m1, m2, grid, tol);
}

void MechanismClass::validate() const {
  if (used.empty()) throw InvalidInput("mechanism class needs at least one used mechanism");
  const int d = used.front().dim();
  for (const auto& m : all()) {
    if (m.dim() != d) throw InvalidInput("all mechanisms in a class must share the latent dimension");
  }
}

std::vector<AffineMechanism> MechanismClass::all() const {
  std::vector<AffineMechanism> out = used;
  out.insert(out.end(), hypothesized.begin(), hypothesized.end());
  return out;
}

ImitatorClosure imitator_closure(const MechanismClass& mechanisms, double tol, const ClosureOptions& options) {
  mechanisms.validate();
  const auto all = mechanisms.all();
  const auto& used = mechanisms.used;
  const int d = mechanisms.dim();

  // Similarity preserves spectra, so only spectrum-compatible targets can
  // appear in an assignment.
  std::vector<std::vector<int>> compatible(used.size());
  std::size_t total = 1;
  for (std::size_t i = 0; i < used.size(); ++i) {
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (spectra_match(used[i].M, all[j].M, kSpectrumTolerance)) compatible[i].push_back(static_cast<int>(j));
    }
    const std::size_t options_here = compatible[i].size();
    if (options_here == 0) {
      total = 0;
      break;
    }
    if (total > options.budget / options_here + 1) {
      throw BudgetError("imitator search exceeds the assignment budget of " + std::to_string(options.budget));
    }
    total *= options_here;
  }
  if (total > options.budget) {
    std::ostringstream os;
    os << "imitator search needs " << total << " assignments, budget is " << options.budget;
    throw BudgetError(os.str());
  }

  struct Slot {
    std::optional<AssignmentSolution> solution;
    bool nonempty = false;
  };
  std::vector<Slot> slots(total);
  parallel_for(total, options.threads, [&](std::size_t index) {
    std::vector<int> assignment(used.size());
    std::size_t rest = index;
    for (std::size_t i = 0; i < used.size(); ++i) {
      assignment[i] = compatible[i][rest % compatible[i].size()];
      rest /= compatible[i].size();
    }
    Matrix rows;
    Vector rhs;
    bool identity_assignment = true;
    bool degenerate = false;
    for (std::size_t i = 0; i < used.size(); ++i) {
      const auto& target = all[static_cast<std::size_t>(assignment[i])];
      append_intertwining_constraints(used[i], target, rows, rhs);
      identity_assignment = identity_assignment && same_mechanism(used[i], target);
      degenerate = degenerate || shift_singular(target.M, tol);
    }
    std::optional<AffineMap> hint;
    if (identity_assignment) hint = AffineMap::identity(d);
    AssignmentSolution sol;
    sol.assignment = assignment;
    sol.family = solve_affine_family(rows, rhs, d, tol, hint);
    sol.family.shift_degenerate = degenerate;
    slots[index].nonempty = sol.family.nonempty;
    sol.representative = sol.family.invertible_representative(derive_key(options.seed, index));
    if (!sol.representative) return;
    const Bijection a = sol.representative->as_bijection();
    for (std::size_t i = 0; i < used.size(); ++i) {
      const auto& target = all[static_cast<std::size_t>(assignment[i])];
      const auto check = check_imitation(a, used[i].as_general(), target.as_general(), options.grid, tol);
      sol.records.push_back(ImitationRecord{used[i].label, target.label, *sol.representative, check.max_residual});
    }
    slots[index].solution = std::move(sol);
  });

  ImitatorClosure closure;
  closure.assignments_considered = total;
  Matrix combined(d * d, 0);
  for (auto& slot : slots) {
    if (slot.solution) {
      const Matrix cols = slot.solution->family.a_part.as_columns();
      combined.conservativeResize(Eigen::NoChange, combined.cols() + cols.cols());
      combined.rightCols(cols.cols()) = cols;
      closure.solutions.push_back(std::move(*slot.solution));
    } else if (slot.nonempty) {
      ++closure.without_representative;
    }
  }
  closure.combined_a_dimension = combined.cols() > 0 ? numerical_rank(combined, 1e-9) : 0;
  return closure;
}

bool CycleReport::bijective() const {
  if (permutation.empty()) return false;
  std::vector<int> sorted = permutation;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != static_cast<int>(i)) return false;
  }
  return true;
}

CycleReport cycle_analysis(const AffineMap& a, std::span<const AffineMechanism> used, const GridSpec& grid,
                           double tol) {
  if (used.empty()) throw InvalidInput("cycle analysis needs at least one mechanism");
  for (const auto& m : used) {
    if (m.dim() != a.dim()) throw InvalidInput("cycle analysis: dimension mismatch");
  }
  CycleReport report;
  const Bijection map = a.as_bijection();
  std::vector<GeneralMechanism> general;
  for (const auto& m : used) general.push_back(m.as_general());

  for (std::size_t i = 0; i < used.size(); ++i) {
    std::vector<int> matches;
    for (std::size_t j = 0; j < used.size(); ++j) {
      if (check_imitation(map, general[i], general[j], grid, tol).pass) matches.push_back(static_cast<int>(j));
    }
    if (matches.empty()) {
      report.in_closure = false;
      report.unmatched_index = static_cast<int>(i);
      report.permutation.clear();
      return report;
    }
    if (matches.size() > 1) {
      std::ostringstream os;
      os << "map imitates mechanism " << i << " onto " << matches.size()
         << " distinct targets; tolerance too loose to separate them";
      throw AmbiguityError(os.str());
    }
    report.permutation.push_back(matches.front());
  }
  report.in_closure = true;
  if (!report.bijective()) return report;

  const std::size_t n = used.size();
  report.cycle_length.assign(n, 0);
  std::vector<bool> seen(n, false);
  for (std::size_t start = 0; start < n; ++start) {
    if (seen[start]) continue;
    std::vector<int> cycle;
    for (auto i = static_cast<int>(start); !seen[static_cast<std::size_t>(i)];
         i = report.permutation[static_cast<std::size_t>(i)]) {
      seen[static_cast<std::size_t>(i)] = true;
      cycle.push_back(i);
    }
    for (int i : cycle) report.cycle_length[static_cast<std::size_t>(i)] = static_cast<int>(cycle.size());
    report.cycles.push_back(std::move(cycle));
  }

  report.powers_commute = true;
  for (std::size_t i = 0; i < n; ++i) {
    const AffineMap power = a.power(report.cycle_length[i]);
    const auto check = check_equivariance(power.as_bijection(), general[i], grid, tol);
    report.power_residuals.push_back(check.max_residual);
    report.powers_commute = report.powers_commute && check.pass;
  }
  return report;
}

}  // namespace mechid
