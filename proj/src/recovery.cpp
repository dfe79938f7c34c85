#include "mechid/recovery.hpp"

#include "mechid/errors.hpp"
#include "mechid/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace mechid {

void RecoveryProblem::validate() const {
  if (latent_dim < 1 || obs_dim < latent_dim) throw InvalidInput("recovery needs obs_dim >= latent_dim >= 1");
  if (M.rows() != latent_dim || M.cols() != latent_dim) throw InvalidInput("recovery: M must be d x d");
  if (pairs.empty()) throw InvalidInput("recovery needs at least one observation pair");
  for (const auto& p : pairs) {
    if (p.x.size() != obs_dim || p.x_next.size() != obs_dim || p.offset.size() != latent_dim) {
      throw InvalidInput("recovery: observation pair has the wrong shape");
    }
  }
}

RecoveryProblem RecoveryProblem::from_trajectory(const Trajectory& trajectory,
                                                 std::span<const AffineMechanism> mechanisms) {
  if (trajectory.length() < 2) throw InvalidInput("recovery needs a trajectory with at least two states");
  if (mechanisms.empty()) throw InvalidInput("recovery needs the mechanism declarations");
  std::map<std::string, const AffineMechanism*> by_label;
  for (const auto& m : mechanisms) by_label[m.label] = &m;
  RecoveryProblem problem;
  for (std::size_t t = 0; t + 1 < trajectory.length(); ++t) {
    const auto it = by_label.find(trajectory.mechanism_labels.at(t));
    if (it == by_label.end()) {
      throw InvalidInput("trajectory step " + std::to_string(t + 1) + " names unknown mechanism '" +
                         trajectory.mechanism_labels[t] + "'");
    }
    const AffineMechanism& m = *it->second;
    if (problem.M.size() == 0) {
      problem.M = m.M;
    } else if ((problem.M - m.M).norm() > 1e-12 * (1.0 + problem.M.norm())) {
      throw InvalidInput("recovery needs every step to share the transition matrix M");
    }
    problem.pairs.push_back({trajectory.observations[t], trajectory.observations[t + 1], m.b});
  }
  problem.latent_dim = static_cast<int>(problem.M.rows());
  problem.obs_dim = static_cast<int>(trajectory.observations.front().size());
  return problem;
}

namespace {

std::vector<Vector> distinct_offsets(const RecoveryProblem& problem) {
  std::vector<Vector> out;
  for (const auto& p : problem.pairs) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Vector& o) { return o == p.offset; });
    if (!seen) out.push_back(p.offset);
  }
  return out;
}

RecoveryResult solve_stacked(const RecoveryProblem& problem, double tol, std::uint64_t seed) {
  problem.validate();
  const int d = problem.latent_dim;
  const int n = problem.obs_dim;
  const auto T = static_cast<Eigen::Index>(problem.pairs.size());

  // Subspace spanned by every observation; the encoder is solved on it.
  Matrix all_points(n, 2 * T);
  Matrix sources(n + 1, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& p = problem.pairs[static_cast<std::size_t>(t)];
    all_points.col(2 * t) = p.x;
    all_points.col(2 * t + 1) = p.x_next;
    sources.col(t) << p.x, 1.0;
  }
  Eigen::JacobiSVD<Matrix> span_svd(all_points, Eigen::ComputeThinU);
  const Vector& sv = span_svd.singularValues();
  const int r = sv(0) > 0.0 ? static_cast<int>((sv.array() > tol * sv(0)).count()) : 0;
  const int affine_rank = numerical_rank(sources, tol);
  if (r < d || affine_rank < d + 1) {
    throw DataDeficiencyError("observations span " + std::to_string(r) + " directions (affine rank " +
                              std::to_string(affine_rank) + "); need " + std::to_string(d) +
                              " directions and affine rank " + std::to_string(d + 1));
  }
  const Matrix Q = span_svd.matrixU().leftCols(r);

  // E = F Q^T; per pair F y' - M F y = b, i.e.
  // (y'^T (x) I - y^T (x) M) vec(F) = b.
  Matrix K = Matrix::Zero(d * T, static_cast<Eigen::Index>(d) * r);
  Vector rhs(d * T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& p = problem.pairs[static_cast<std::size_t>(t)];
    const Vector y = Q.transpose() * p.x;
    const Vector y_next = Q.transpose() * p.x_next;
    for (int k = 0; k < r; ++k) {
      auto block = K.block(t * d, static_cast<Eigen::Index>(k) * d, d, d);
      block.diagonal().array() += y_next(k);
      block -= y(k) * problem.M;
    }
    rhs.segment(t * d, d) = p.offset;
  }

  Eigen::JacobiSVD<Matrix> svd(K, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const Eigen::Index unknowns = K.cols();
  Eigen::Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0) rank = (s.array() > tol * s(0)).count();

  Vector f = Vector::Zero(unknowns);
  for (Eigen::Index i = 0; i < rank; ++i) {
    f += svd.matrixV().col(i) * (svd.matrixU().col(i).dot(rhs) / s(i));
  }

  RecoveryResult result;
  result.solution_space_dim = static_cast<int>(unknowns - rank);
  result.residual = (K * f - rhs).norm();
  result.observation_rank = r;
  result.pairs_used = problem.pairs.size();
  result.fewer_pairs_than_recommended = problem.pairs.size() < static_cast<std::size_t>(d) * (n + 1);
  for (Eigen::Index j = rank; j < unknowns; ++j) {
    result.null_directions.push_back(unvec(svd.matrixV().col(j), d, r) * Q.transpose());
  }

  Matrix E = unvec(f, d, r) * Q.transpose();
  auto full_row_rank = [&](const Matrix& X) { return numerical_rank(X, 1e-6) == d; };
  if (!full_row_rank(E) && !result.null_directions.empty()) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      CounterRng rng(seed, static_cast<std::uint64_t>(attempt));
      std::normal_distribution<double> normal;
      Matrix candidate = E;
      for (const auto& N : result.null_directions) candidate += normal(rng) * N;
      if (full_row_rank(candidate)) {
        E = candidate;
        break;
      }
    }
  }
  result.encoder = std::move(E);
  return result;
}

}  // namespace

RecoveryResult recover_linear_encoder(const RecoveryProblem& problem, double tol, std::uint64_t seed) {
  RecoveryResult result = solve_stacked(problem, tol, seed);
  const auto offsets = distinct_offsets(problem);
  if (offsets.size() == 1) {
    result.conditions = theorem2_conditions(AffineMechanism(problem.M, offsets.front()), tol);
  } else {
    result.conditions = offset_identifiability_check(problem.M, offsets, tol);
  }
  result.identifiability = result.conditions.verdict;
  return result;
}

RecoveryResult recover_with_multiple_offsets(const RecoveryProblem& problem, double tol, std::uint64_t seed) {
  RecoveryResult result = solve_stacked(problem, tol, seed);
  result.conditions = offset_identifiability_check(problem.M, distinct_offsets(problem), tol);
  result.identifiability = result.conditions.verdict;
  return result;
}

std::string to_string(ComparisonClass c) {
  switch (c) {
    case ComparisonClass::exact:
      return "exact";
    case ComparisonClass::offset:
      return "offset";
    case ComparisonClass::signed_permutation:
      return "signed-permutation";
    case ComparisonClass::signed_permutation_offset:
      return "signed-permutation+offset";
    case ComparisonClass::linear:
      return "linear";
  }
  return "unknown";
}

ComparisonClass parse_comparison_class(const std::string& name) {
  if (name == "exact") return ComparisonClass::exact;
  if (name == "offset") return ComparisonClass::offset;
  if (name == "signed-permutation") return ComparisonClass::signed_permutation;
  if (name == "signed-permutation+offset") return ComparisonClass::signed_permutation_offset;
  if (name == "linear") return ComparisonClass::linear;
  throw InvalidInput("unknown comparison class '" + name + "'");
}

AffineEncoder AffineEncoder::linear(Matrix E) {
  const auto d = E.rows();
  return AffineEncoder{std::move(E), Vector::Zero(d)};
}

namespace {

// Minimum-cost perfect matching; cost(i, j) pairs estimate row i with truth row j.
std::vector<int> exhaustive_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> best(static_cast<std::size_t>(n));
  // Greedy start gives the initial bound.
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  double best_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    int pick = -1;
    for (int j = 0; j < n; ++j) {
      if (!taken[static_cast<std::size_t>(j)] && (pick < 0 || cost(i, j) < cost(i, pick))) pick = j;
    }
    taken[static_cast<std::size_t>(pick)] = true;
    best[static_cast<std::size_t>(i)] = pick;
    best_cost += cost(i, pick);
  }
  std::vector<int> current(static_cast<std::size_t>(n));
  std::fill(taken.begin(), taken.end(), false);
  auto search = [&](auto&& self, int i, double acc) -> void {
    if (acc >= best_cost) return;
    if (i == n) {
      best_cost = acc;
      best = current;
      return;
    }
    for (int j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      taken[static_cast<std::size_t>(j)] = true;
      current[static_cast<std::size_t>(i)] = j;
      self(self, i + 1, acc + cost(i, j));
      taken[static_cast<std::size_t>(j)] = false;
    }
  };
  search(search, 0, 0.0);
  return best;
}

// Hungarian algorithm (potentials form), O(n^3).
std::vector<int> hungarian_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assignment;
}

Matrix stacked(const AffineEncoder& enc) {
  Matrix out(enc.E.rows(), enc.E.cols() + 1);
  out << enc.E, enc.e;
  return out;
}

// Best signed permutation A minimising |A truth_rows - estimate_rows|_F.
Matrix best_signed_permutation(const Matrix& truth_rows, const Matrix& estimate_rows) {
  const auto d = truth_rows.rows();
  Matrix cost(d, d);
  Matrix sign(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double plus = (truth_rows.row(j) - estimate_rows.row(i)).squaredNorm();
      const double minus = (truth_rows.row(j) + estimate_rows.row(i)).squaredNorm();
      cost(i, j) = std::min(plus, minus);
      sign(i, j) = plus <= minus ? 1.0 : -1.0;
    }
  }
  const auto assignment = d <= 8 ? exhaustive_assignment(cost) : hungarian_assignment(cost);
  Matrix A = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const int j = assignment[static_cast<std::size_t>(i)];
    A(i, j) = sign(i, j);
  }
  return A;
}

}  // namespace

Comparison compare_up_to_class(const AffineEncoder& estimate, const AffineEncoder& truth, ComparisonClass cls) {
  if (estimate.E.rows() != truth.E.rows() || estimate.E.cols() != truth.E.cols() ||
      estimate.e.size() != estimate.E.rows() || truth.e.size() != truth.E.rows()) {
    throw InvalidInput("compare_up_to_class: encoder shapes differ");
  }
  const auto d = truth.E.rows();
  const Matrix T = stacked(truth);
  const Matrix Y = stacked(estimate);
  const double norm = T.norm();
  if (!(norm > 0.0)) throw InvalidInput("compare_up_to_class: truth encoder is zero");

  Comparison out;
  out.best = AffineMap::identity(static_cast<int>(d));
  switch (cls) {
    case ComparisonClass::exact:
      break;
    case ComparisonClass::offset:
      out.best.p = estimate.e - truth.e;
      break;
    case ComparisonClass::signed_permutation:
      out.best.A = best_signed_permutation(T, Y);
      break;
    case ComparisonClass::signed_permutation_offset:
      out.best.A = best_signed_permutation(truth.E, estimate.E);
      out.best.p = estimate.e - out.best.A * truth.e;
      break;
    case ComparisonClass::linear:
      out.best.A = T.transpose().completeOrthogonalDecomposition().solve(Y.transpose()).transpose();
      break;
  }
  Matrix mapped(d, T.cols());
  mapped << out.best.A * truth.E, out.best.A * truth.e + out.best.p;
  out.residual = (mapped - Y).norm() / norm;
  return out;
}

}  // namespace mechid
