#include "mechid/cli/runner.hpp"

#include "mechid/cli/report.hpp"
#include "mechid/parallel.hpp"
#include "mechid/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace mechid::cli {

namespace fs = std::filesystem;

namespace {

struct OutputFile {
  std::string name;
  std::string content;
};

struct Context {
  std::string experiment;
  Json config;
  fs::path base_dir;
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  Json report = Json::object();
  Json trials = Json::array();
  std::vector<OutputFile> files;
  std::vector<std::string> failures;

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("seed", "missing required field (set it in the config, MECHID_SEED or --seed)");
    return *seed;
  }
  double tol(double fallback) const { return number_or(config, "tolerance", fallback, ""); }
  bool csv() const { return config.contains("csv") && get_bool(config["csv"], "csv"); }
};

// ---- expectations -------------------------------------------------------

const Json* expectations(const Context& ctx) {
  const auto it = ctx.config.find("expect");
  if (it == ctx.config.end()) return nullptr;
  if (!it->is_object()) throw ConfigError("expect", "expected an object");
  return &*it;
}

void expect_equal(Context& ctx, const std::string& key, const Json& actual) {
  const Json* ex = expectations(ctx);
  if (!ex || !ex->contains(key)) return;
  const Json& want = (*ex)[key];
  if (want != actual) ctx.failures.push_back("expect." + key + ": wanted " + want.dump() + ", got " + actual.dump());
}

void expect_at_most(Context& ctx, const std::string& key, double actual) {
  const Json* ex = expectations(ctx);
  if (!ex || !ex->contains(key)) return;
  const double bound = get_number((*ex)[key], "expect." + key);
  if (!(actual <= bound)) {
    ctx.failures.push_back("expect." + key + ": wanted at most " + format_double(bound) + ", got " + format_double(actual));
  }
}

void expect_at_least(Context& ctx, const std::string& key, double actual) {
  const Json* ex = expectations(ctx);
  if (!ex || !ex->contains(key)) return;
  const double bound = get_number((*ex)[key], "expect." + key);
  if (!(actual >= bound)) {
    ctx.failures.push_back("expect." + key + ": wanted at least " + format_double(bound) + ", got " + format_double(actual));
  }
}

// ---- shared pieces ------------------------------------------------------

std::string csv_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> parse_schedule(const Json& config, const std::vector<MechanismDecl>& mechanisms, int T,
                                        const std::string& path) {
  const Json& sched = require(config, "schedule", path);
  const std::string p = path.empty() ? "schedule" : path + ".schedule";
  std::vector<std::string> labels;
  if (sched.is_array()) {
    for (std::size_t i = 0; i < sched.size(); ++i) labels.push_back(get_string(sched[i], p + "[" + std::to_string(i) + "]"));
  } else if (sched.is_object()) {
    const Json& cycle = require(sched, "cycle", p);
    if (!cycle.is_array() || cycle.empty()) throw ConfigError(p + ".cycle", "expected a nonempty array of labels");
    for (int t = 0; t + 1 < T; ++t) {
      const std::size_t k = static_cast<std::size_t>(t) % cycle.size();
      labels.push_back(get_string(cycle[k], p + ".cycle[" + std::to_string(k) + "]"));
    }
  } else {
    throw ConfigError(p, "expected an array of labels or {\"cycle\": [...]}");
  }
  if (labels.size() + 1 < static_cast<std::size_t>(T)) {
    throw ConfigError(p, "schedule has " + std::to_string(labels.size()) + " steps, T - 1 = " + std::to_string(T - 1));
  }
  labels.resize(static_cast<std::size_t>(T > 0 ? T - 1 : 0));
  for (std::size_t i = 0; i < labels.size(); ++i) find_mechanism(mechanisms, labels[i], p + "[" + std::to_string(i) + "]");
  return labels;
}

bool schedule_is_noisy(const Json& config) {
  const auto it = config.find("mechanisms");
  if (it == config.end() || !it->is_array()) return false;
  for (const auto& m : *it) {
    if (m.is_object() && m.contains("noise")) return true;
  }
  return false;
}

struct Simulation {
  Trajectory trajectory;
  bool stochastic = false;
  Vector z1;
};

Simulation simulate_block(const Json& block, const std::string& path, const std::vector<MechanismDecl>& mechanisms,
                          const Decoder& decoder, const std::optional<std::uint64_t>& seed) {
  const std::string tpath = path.empty() ? "T" : path + ".T";
  const auto T = get_integer(require(block, "T", path), tpath);
  if (T < 1) throw ConfigError(tpath, "must be at least 1");
  const auto labels = parse_schedule(block, mechanisms, static_cast<int>(T), path);
  const int d = mechanisms.front().affine.dim();
  if (decoder.latent_dim() != d) throw ConfigError(path.empty() ? "decoder" : path + ".decoder", "latent dimension differs from the mechanisms");

  Simulation sim;
  for (const auto& l : labels) sim.stochastic = sim.stochastic || find_mechanism(mechanisms, l, "schedule").noise.has_value();

  const std::string zpath = path.empty() ? "z1" : path + ".z1";
  std::optional<Vector> z1;
  if (block.contains("z1")) {
    z1 = get_vector(block["z1"], zpath);
    if (z1->size() != d) throw ConfigError(zpath, "length differs from the latent dimension");
  }
  double lo = -1.0;
  double hi = 1.0;
  if (block.contains("z1_box")) {
    const std::string bp = path.empty() ? "z1_box" : path + ".z1_box";
    lo = number_or(block["z1_box"], "lo", lo, bp);
    hi = number_or(block["z1_box"], "hi", hi, bp);
    if (!(lo < hi)) throw ConfigError(bp, "lo must be below hi");
  }
  if (!z1 && !seed) throw ConfigError("seed", "missing required field (needed to draw z1; or give z1 explicitly)");

  if (sim.stochastic) {
    if (!seed) throw ConfigError("seed", "missing required field (stochastic mechanisms in the schedule)");
    std::vector<StochasticMechanism> schedule;
    for (const auto& l : labels) {
      const auto& decl = find_mechanism(mechanisms, l, "schedule");
      if (decl.noise) {
        schedule.push_back(decl.stochastic());
      } else {
        const AffineMechanism m = decl.affine;
        schedule.push_back(StochasticMechanism{[m](const Vector& z, const Vector&) { return m.apply(z); }, decl.label, d});
      }
    }
    LatentSampler sampler = z1 ? LatentSampler([v = *z1](CounterRng&) { return v; }) : box_sampler(d, lo, hi);
    sim.trajectory = simulate_stochastic(decoder, schedule, sampler, static_cast<int>(T), *seed);
  } else {
    if (!z1) {
      CounterRng rng(*seed, 0);
      z1 = box_sampler(d, lo, hi)(rng);
    }
    std::vector<Mechanism> schedule;
    for (const auto& l : labels) schedule.emplace_back(find_mechanism(mechanisms, l, "schedule").affine);
    sim.trajectory = simulate_deterministic(decoder, schedule, *z1, static_cast<int>(T));
    if (seed && !block.contains("z1")) sim.trajectory.seed = seed;
  }
  sim.z1 = sim.trajectory.latents.front();
  return sim;
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream os;
  write_trajectory_csv(os, t);
  return os.str();
}

std::vector<AffineMechanism> affine_list(const std::vector<MechanismDecl>& decls) {
  std::vector<AffineMechanism> out;
  for (const auto& d : decls) out.push_back(d.affine);
  return out;
}

Matrix random_matrix(CounterRng& rng, int d) {
  std::normal_distribution<double> normal;
  Matrix A(d, d);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
  return A;
}

// ---- experiments --------------------------------------------------------

void run_simulate(Context& ctx) {
  const auto mechanisms = parse_mechanisms(require(ctx.config, "mechanisms", ""), "mechanisms");
  const Decoder decoder = parse_decoder(require(ctx.config, "decoder", ""), "decoder");
  const Simulation sim = simulate_block(ctx.config, "", mechanisms, decoder, ctx.seed);
  const auto& traj = sim.trajectory;
  ctx.files.push_back({"trajectory.csv", trajectory_csv(traj)});
  ctx.report["T"] = traj.length();
  ctx.report["latent_dim"] = decoder.latent_dim();
  ctx.report["obs_dim"] = decoder.obs_dim();
  ctx.report["stochastic"] = sim.stochastic;
  ctx.report["decoder"] = decoder.describe();
  ctx.report["z1"] = to_json(sim.z1);
  ctx.report["final_latent"] = to_json(traj.latents.back());
  ctx.report["final_observation"] = to_json(traj.observations.back());
  ctx.report["trajectory_file"] = "trajectory.csv";
  ctx.trials.push_back({{"index", 0}, {"outcome", "simulated"}, {"T", traj.length()}});
}

void run_commutant(Context& ctx) {
  const double tol = ctx.tol(kDefaultTolerance);
  const auto mechanisms = parse_mechanisms(require(ctx.config, "mechanisms", ""), "mechanisms");
  const GridSpec grid = parse_grid(ctx.config, "");
  Json list = Json::array();
  Json commutant_dims = Json::array();
  Json equivariance_dims = Json::array();
  Json verdicts = Json::array();
  std::ostringstream csv;
  const int d = mechanisms.front().affine.dim();
  csv << "label,index";
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) csv << ",a_" << i << "_" << j;
  csv << "\n";

  for (std::size_t k = 0; k < mechanisms.size(); ++k) {
    const auto& m = mechanisms[k];
    const auto basis = linear_commutant(m.affine.M, tol);
    const auto family = affine_equivariances(m.affine, tol);
    const auto conditions = theorem2_conditions(m.affine, tol);
    Json entry;
    entry["label"] = m.label;
    Json mats = Json::array();
    for (std::size_t b = 0; b < basis.basis.size(); ++b) {
      mats.push_back(to_json(basis.basis[b]));
      csv << m.label << "," << b;
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) csv << "," << format_double(basis.basis[b](i, j));
      csv << "\n";
    }
    entry["commutant"] = {{"dimension", basis.dimension()}, {"basis", std::move(mats)}};
    entry["equivariances"] = to_json(family);
    // Spot check: a representative of the family commutes on the grid.
    if (const auto rep = family.invertible_representative(derive_key(ctx.seed.value_or(0), k))) {
      const auto check = check_equivariance(*rep, m.affine, grid, 10 * tol);
      entry["representative"] = to_json(*rep);
      entry["representative_check"] = {{"pass", check.pass}, {"max_residual", check.max_residual}};
      if (!check.pass) ctx.failures.push_back(m.label + ": equivariance representative fails the grid check");
    }
    entry["conditions"] = to_json(conditions);
    commutant_dims.push_back(basis.dimension());
    equivariance_dims.push_back(family.dimension());
    verdicts.push_back(conditions.verdict.to_string());
    ctx.trials.push_back({{"index", k},
                          {"label", m.label},
                          {"outcome", conditions.verdict.to_string()},
                          {"commutant_dimension", basis.dimension()}});
    list.push_back(std::move(entry));
  }
  ctx.report["mechanisms"] = std::move(list);

  if (mechanisms.size() > 1) {
    const auto shared = shared_equivariances(affine_list(mechanisms), tol);
    ctx.report["shared"] = to_json(shared);
    expect_equal(ctx, "shared_a_dimension", shared.a_part.dimension());
    expect_equal(ctx, "shared_dimension", shared.dimension());
  }
  if (ctx.config.contains("offsets")) {
    const Json& offs = ctx.config["offsets"];
    if (!offs.is_array()) throw ConfigError("offsets", "expected an array of vectors");
    std::vector<Vector> offsets;
    for (std::size_t i = 0; i < offs.size(); ++i) {
      offsets.push_back(get_vector(offs[i], "offsets[" + std::to_string(i) + "]"));
      if (offsets.back().size() != d) throw ConfigError("offsets[" + std::to_string(i) + "]", "length differs from M");
    }
    const auto check = offset_identifiability_check(mechanisms.front().affine.M, offsets, tol);
    ctx.report["offset_check"] = to_json(check);
    expect_equal(ctx, "offset_verdict", check.verdict.to_string());
  }
  if (ctx.csv()) {
    ctx.files.push_back({"commutant_basis.csv", csv.str()});
    ctx.report["basis_file"] = "commutant_basis.csv";
  }

  const bool single = mechanisms.size() == 1;
  expect_equal(ctx, "commutant_dimension", single ? commutant_dims[0] : commutant_dims);
  expect_equal(ctx, "equivariance_dimension", single ? equivariance_dims[0] : equivariance_dims);
  expect_equal(ctx, "verdict", single ? verdicts[0] : verdicts);
}

void run_imitate(Context& ctx) {
  const double tol = ctx.tol(kDefaultTolerance);
  MechanismClass cls;
  const auto used = parse_mechanisms(require(ctx.config, "used", ""), "used");
  std::vector<MechanismDecl> hyp;
  if (ctx.config.contains("hypothesized") && !ctx.config["hypothesized"].empty()) {
    hyp = parse_mechanisms(ctx.config["hypothesized"], "hypothesized");
  }
  cls.used = affine_list(used);
  cls.hypothesized = affine_list(hyp);
  for (const auto& h : hyp) {
    for (const auto& u : used) {
      if (h.label == u.label) throw ConfigError("hypothesized", "label '" + h.label + "' also names a used mechanism");
    }
    if (h.affine.dim() != cls.dim()) throw ConfigError("hypothesized", "all mechanisms must share the latent dimension");
  }
  const auto all = cls.all();

  ClosureOptions opts;
  opts.budget = static_cast<std::size_t>(integer_or(ctx.config, "budget", 10000, ""));
  opts.seed = ctx.seed.value_or(0);
  opts.threads = ctx.threads;
  opts.grid = parse_grid(ctx.config, "");
  const auto closure = imitator_closure(cls, tol, opts);

  ctx.report["assignments_considered"] = closure.assignments_considered;
  ctx.report["without_representative"] = closure.without_representative;
  ctx.report["combined_a_dimension"] = closure.combined_a_dimension;
  Json solutions = Json::array();
  Json assignments = Json::array();
  for (std::size_t s = 0; s < closure.solutions.size(); ++s) {
    const auto& sol = closure.solutions[s];
    Json labels = Json::array();
    for (int idx : sol.assignment) labels.push_back(all[static_cast<std::size_t>(idx)].label);
    Json entry;
    entry["assignment"] = labels;
    entry["assignment_index"] = sol.assignment;
    entry["family"] = to_json(sol.family);
    entry["representative"] = to_json(*sol.representative);
    Json records = Json::array();
    for (const auto& r : sol.records) records.push_back(to_json(r));
    entry["records"] = std::move(records);
    try {
      entry["cycle"] = to_json(cycle_analysis(*sol.representative, cls.used, opts.grid, std::max(tol, 1e-7)));
    } catch (const AmbiguityError& e) {
      entry["cycle_error"] = e.what();
    }
    ctx.trials.push_back({{"index", s}, {"assignment", labels}, {"outcome", "solution"}});
    assignments.push_back(labels);
    solutions.push_back(std::move(entry));
  }
  ctx.report["solutions"] = std::move(solutions);

  expect_equal(ctx, "solutions", static_cast<int>(closure.solutions.size()));
  expect_equal(ctx, "combined_a_dimension", closure.combined_a_dimension);
  if (const Json* ex = expectations(ctx); ex && ex->contains("contains_assignment")) {
    const Json& want = (*ex)["contains_assignment"];
    bool found = false;
    for (const auto& a : assignments) found = found || a == want;
    if (!found) ctx.failures.push_back("expect.contains_assignment: no solution assigns " + want.dump());
  }
}

void run_verify(Context& ctx) {
  const double tol = ctx.tol(1e-9);
  const auto mechanisms = parse_mechanisms(require(ctx.config, "mechanisms", ""), "mechanisms");
  const Decoder decoder = parse_decoder(require(ctx.config, "decoder", ""), "decoder");
  const int d = mechanisms.front().affine.dim();
  if (decoder.latent_dim() != d) throw ConfigError("decoder.G", "latent dimension differs from the mechanisms");

  AuditOptions opts;
  opts.tol_equivariance = tol;
  opts.tol_identity = 10 * tol;
  if (ctx.config.contains("tolerances")) {
    const Json& t = ctx.config["tolerances"];
    opts.tol_equivariance = number_or(t, "equivariance", opts.tol_equivariance, "tolerances");
    opts.tol_identity = number_or(t, "identity", opts.tol_identity, "tolerances");
  }
  opts.grid = parse_grid(ctx.config, "");
  opts.threads = ctx.threads;

  std::vector<GeneralMechanism> ms;
  for (const auto& m : mechanisms) ms.push_back(m.affine.as_general());
  std::vector<GeneralMechanism> hypothesis;
  std::vector<AffineMechanism> hypothesis_affine;
  if (ctx.config.contains("hypothesis_class")) {
    const auto hyp = parse_mechanisms(ctx.config["hypothesis_class"], "hypothesis_class");
    for (const auto& h : hyp) {
      if (h.affine.dim() != d) throw ConfigError("hypothesis_class", "dimension differs from the mechanisms");
      hypothesis.push_back(h.affine.as_general());
      hypothesis_affine.push_back(h.affine);
    }
  }

  std::vector<Bijection> candidates;
  std::vector<std::optional<bool>> claims;
  const Json& cands = require(ctx.config, "candidates", "");
  if (cands.is_array()) {
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const std::string p = "candidates[" + std::to_string(i) + "]";
      const AffineMap a = parse_affine_map(cands[i], p);
      if (a.dim() != d) throw ConfigError(p + ".A", "dimension differs from the mechanisms");
      const std::string label = cands[i].contains("label") ? get_string(cands[i]["label"], p + ".label") : "candidate_" + std::to_string(i);
      candidates.push_back(a.as_bijection(label));
      std::optional<bool> claim;
      if (cands[i].contains("claim")) {
        const std::string c = get_string(cands[i]["claim"], p + ".claim");
        if (c == "equivariant") claim = true;
        else if (c == "not-equivariant") claim = false;
        else throw ConfigError(p + ".claim", "expected \"equivariant\" or \"not-equivariant\"");
      }
      claims.push_back(claim);
    }
  } else if (cands.is_object()) {
    // Generated family: representatives of the shared equivariance family
    // (or of the imitator closure) plus random invertible maps.
    const Json& gen = require(cands, "generate", "candidates");
    const auto n_eq = integer_or(gen, "equivariant", 0, "candidates.generate");
    const auto n_rand = integer_or(gen, "random", 0, "candidates.generate");
    const std::uint64_t seed = ctx.require_seed();
    std::vector<AffineFamily> families;
    if (hypothesis_affine.empty()) {
      families.push_back(shared_equivariances(affine_list(mechanisms), opts.tol_equivariance));
    } else {
      ClosureOptions co;
      co.seed = seed;
      co.grid = opts.grid;
      const auto closure = imitator_closure(MechanismClass{affine_list(mechanisms), hypothesis_affine}, opts.tol_equivariance, co);
      for (const auto& s : closure.solutions) families.push_back(s.family);
    }
    for (std::int64_t k = 0; k < n_eq && !families.empty(); ++k) {
      const auto& fam = families[static_cast<std::size_t>(k) % families.size()];
      const auto rep = fam.invertible_representative(derive_key(seed, static_cast<std::uint64_t>(k)));
      if (!rep) continue;
      candidates.push_back(rep->as_bijection("generated_eq_" + std::to_string(k)));
      claims.push_back(std::nullopt);
    }
    for (std::int64_t k = 0; k < n_rand; ++k) {
      CounterRng rng(seed, 1000000 + static_cast<std::uint64_t>(k));
      Matrix A = random_matrix(rng, d);
      while (condition_number(A) > 1e3) A = random_matrix(rng, d);
      Vector p(d);
      std::normal_distribution<double> normal;
      for (int i = 0; i < d; ++i) p(i) = normal(rng);
      candidates.push_back(AffineMap(A, p).as_bijection("generated_random_" + std::to_string(k)));
      claims.push_back(std::nullopt);
    }
  } else {
    throw ConfigError("candidates", "expected an array of maps or {\"generate\": {...}}");
  }
  if (candidates.empty()) throw ConfigError("candidates", "no candidates to audit");

  const auto table = membership_equivalence_audit(decoder, ms, candidates, opts, hypothesis);
  std::ostringstream csv;
  csv << "candidate_id,equivariance_pass,identity_pass,equivariance_residual,identity_residual,identity_bound,bound_holds\n";
  Json rows = Json::array();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    csv << r.candidate_id << "," << csv_bool(r.equivariance_pass) << "," << csv_bool(r.identity_pass) << ","
        << format_double(r.equivariance_residual) << "," << format_double(r.identity_residual) << ","
        << format_double(r.identity_bound) << "," << csv_bool(r.bound_holds) << "\n";
    Json row = to_json(r);
    std::string outcome = r.agree() ? "agree" : "disagree";
    if (claims[i]) {
      row["claim"] = *claims[i] ? "equivariant" : "not-equivariant";
      if (*claims[i] != r.equivariance_pass || *claims[i] != r.identity_pass) {
        outcome = "claim-contradicted";
        ctx.failures.push_back(r.candidate_id + ": claimed " + row["claim"].get<std::string>() +
                               ", audit found equivariance_pass=" + csv_bool(r.equivariance_pass) +
                               " identity_pass=" + csv_bool(r.identity_pass));
      }
    }
    if (!r.agree()) ctx.failures.push_back(r.candidate_id + ": equivariance and identity verdicts disagree");
    ctx.trials.push_back({{"index", i}, {"candidate_id", r.candidate_id}, {"outcome", outcome}});
    rows.push_back(std::move(row));
  }
  ctx.files.push_back({"audit.csv", csv.str()});
  ctx.report["rows"] = std::move(rows);
  ctx.report["all_agree"] = table.all_agree();
  ctx.report["all_bounds_hold"] = table.all_bounds_hold();
  ctx.report["decoder_lipschitz"] = table.decoder_lipschitz;
  ctx.report["tolerances"] = {{"equivariance", opts.tol_equivariance}, {"identity", opts.tol_identity}};
  ctx.report["audit_file"] = "audit.csv";
}

void run_recover(Context& ctx) {
  const double tol = ctx.tol(kDefaultTolerance);
  const auto mechanisms = parse_mechanisms(require(ctx.config, "mechanisms", ""), "mechanisms");
  const Json& src = require(ctx.config, "trajectory", "");
  Trajectory traj;
  std::optional<Decoder> decoder;
  if (ctx.config.contains("decoder")) decoder = parse_decoder(ctx.config["decoder"], "decoder");
  if (src.is_string()) {
    fs::path path = get_string(src, "trajectory");
    if (path.is_relative()) path = ctx.base_dir / path;
    std::istringstream in(read_text(path));
    traj = read_trajectory_csv(in);
  } else if (src.is_object()) {
    if (!decoder) throw ConfigError("decoder", "missing required field (needed to simulate the trajectory)");
    traj = simulate_block(src, "trajectory", mechanisms, *decoder, ctx.seed).trajectory;
    ctx.files.push_back({"trajectory.csv", trajectory_csv(traj)});
  } else {
    throw ConfigError("trajectory", "expected a CSV path or a simulation block");
  }

  const auto problem = RecoveryProblem::from_trajectory(traj, affine_list(mechanisms));
  std::string mode = ctx.config.contains("mode") ? get_string(ctx.config["mode"], "mode") : "auto";
  if (mode == "auto") {
    bool several = false;
    for (const auto& p : problem.pairs) several = several || p.offset != problem.pairs.front().offset;
    mode = several ? "multiple" : "single";
  }
  RecoveryResult result;
  if (mode == "single") {
    result = recover_linear_encoder(problem, tol, ctx.seed.value_or(0));
  } else if (mode == "multiple") {
    result = recover_with_multiple_offsets(problem, tol, ctx.seed.value_or(0));
  } else {
    throw ConfigError("mode", "expected \"auto\", \"single\" or \"multiple\"");
  }
  ctx.report["mode"] = mode;
  ctx.report["result"] = to_json(result);

  std::optional<AffineEncoder> truth;
  if (ctx.config.contains("truth")) {
    const Json& t = ctx.config["truth"];
    AffineEncoder enc;
    enc.E = get_matrix(require(t, "E", "truth"), "truth.E");
    enc.e = t.contains("e") ? get_vector(t["e"], "truth.e") : Vector(Vector::Zero(enc.E.rows()));
    truth = enc;
  } else if (decoder && decoder->is_linear()) {
    truth = AffineEncoder::linear(decoder->linear_part().completeOrthogonalDecomposition().pseudoInverse());
  }
  double comparison_residual = std::numeric_limits<double>::quiet_NaN();
  if (truth) {
    const std::string cls_name = ctx.config.contains("class") ? get_string(ctx.config["class"], "class") : "exact";
    ComparisonClass cls;
    try {
      cls = parse_comparison_class(cls_name);
    } catch (const InvalidInput& e) {
      throw ConfigError("class", e.what());
    }
    const auto cmp = compare_up_to_class(AffineEncoder::linear(result.encoder), *truth, cls);
    comparison_residual = cmp.residual;
    ctx.report["comparison"] = {{"class", to_string(cls)}, {"residual", cmp.residual}, {"best", to_json(cmp.best)}};
  }
  ctx.trials.push_back({{"index", 0},
                        {"outcome", result.identifiability.to_string()},
                        {"solution_space_dim", result.solution_space_dim}});
  expect_equal(ctx, "solution_space_dim", result.solution_space_dim);
  expect_equal(ctx, "verdict", result.identifiability.to_string());
  if (truth) expect_at_most(ctx, "max_comparison_residual", comparison_residual);
}

void run_stochastic(Context& ctx) {
  const auto mechanisms = parse_mechanisms(require(ctx.config, "mechanisms", ""), "mechanisms");
  const std::string l1 = get_string(require(ctx.config, "m1", ""), "m1");
  const std::string l2 = ctx.config.contains("m2") ? get_string(ctx.config["m2"], "m2") : l1;
  const auto& d1 = find_mechanism(mechanisms, l1, "m1");
  const auto& d2 = find_mechanism(mechanisms, l2, "m2");
  if (!d1.noise) throw ConfigError("mechanisms", "mechanism '" + l1 + "' needs a noise declaration");
  if (!d2.noise) throw ConfigError("mechanisms", "mechanism '" + l2 + "' needs a noise declaration");
  const int d = d1.affine.dim();
  const AffineMap a = parse_affine_map(require(ctx.config, "candidate", ""), "candidate");
  if (a.dim() != d) throw ConfigError("candidate.A", "dimension differs from the mechanisms");
  const std::uint64_t seed = ctx.require_seed();

  DistributionalTestSpec spec;
  const Json empty = Json::object();
  const Json& t = ctx.config.contains("test") ? ctx.config["test"] : empty;
  if (t.contains("anchors")) {
    for (std::size_t i = 0; i < t["anchors"].size(); ++i) {
      const std::string p = "test.anchors[" + std::to_string(i) + "]";
      spec.anchors.push_back(get_vector(t["anchors"][i], p));
      if (spec.anchors.back().size() != d) throw ConfigError(p, "length differs from the latent dimension");
    }
  } else {
    const auto count = integer_or(t, "anchor_count", 5, "test");
    if (count < 1) throw ConfigError("test.anchor_count", "must be positive");
    double lo = -1.0;
    double hi = 1.0;
    if (t.contains("box")) {
      lo = number_or(t["box"], "lo", lo, "test.box");
      hi = number_or(t["box"], "hi", hi, "test.box");
    }
    spec.anchors = DistributionalTestSpec::default_anchors(d, static_cast<int>(count), lo, hi);
  }
  spec.samples_per_anchor = static_cast<int>(integer_or(t, "samples_per_anchor", 10000, "test"));
  spec.significance = number_or(t, "significance", 0.05, "test");
  if (t.contains("method")) {
    try {
      spec.method = parse_test_method(get_string(t["method"], "test.method"));
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ConfigError("test.method", e.what());
    }
  }
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("test", e.what());
  }
  const auto reps = integer_or(ctx.config, "repetitions", 1, "");
  if (reps < 1) throw ConfigError("repetitions", "must be positive");

  const auto m1 = d1.stochastic();
  const auto m2 = d2.stochastic();
  const Bijection map = a.as_bijection("candidate");
  std::vector<TestReport> reports(static_cast<std::size_t>(reps));
  parallel_for(reports.size(), ctx.threads, [&](std::size_t r) {
    DistributionalTestSpec local = spec;
    local.seed = derive_key(seed, r);
    reports[r] = stochastic_equivariance_test(map, m1, m2, local, 1);
  });

  std::ostringstream csv;
  csv << "repetition,anchor";
  for (int i = 1; i <= d; ++i) csv << ",z_" << i;
  csv << ",statistic,p_value\n";
  Json list = Json::array();
  int passes = 0;
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    passes += rep.pass;
    for (std::size_t i = 0; i < spec.anchors.size(); ++i) {
      csv << r << "," << i;
      for (Eigen::Index k = 0; k < d; ++k) csv << "," << format_double(spec.anchors[i](k));
      csv << "," << format_double(rep.statistics[i]) << "," << format_double(rep.p_values[i]) << "\n";
    }
    ctx.trials.push_back({{"index", r}, {"outcome", rep.pass ? "pass" : "reject"}, {"min_p_value", rep.min_p_value}});
    list.push_back(to_json(rep));
  }
  const double class_tol = ctx.tol(1e-6);
  const auto verdict = klindt_identifiability_test(a, class_tol);
  const auto jac = jacobian_identifiability_test(map.forward, spec.anchors, 1e-5, class_tol);
  const auto vol = volume_preservation_test(map.forward, spec.anchors, 1e-5, class_tol);
  const double rate = static_cast<double>(passes) / static_cast<double>(reps);

  ctx.files.push_back({"pvalues.csv", csv.str()});
  ctx.report["method"] = to_string(spec.method);
  ctx.report["samples_per_anchor"] = spec.samples_per_anchor;
  ctx.report["significance"] = spec.significance;
  Json anchors = Json::array();
  for (const auto& z : spec.anchors) anchors.push_back(to_json(z));
  ctx.report["anchors"] = std::move(anchors);
  ctx.report["repetitions"] = std::move(list);
  ctx.report["pass_count"] = passes;
  ctx.report["pass_rate"] = rate;
  ctx.report["class_verdict"] = to_json(verdict);
  ctx.report["jacobian_verdict"] = to_json(jac);
  ctx.report["volume"] = {{"pass", vol.pass}, {"max_deviation", vol.max_deviation}};
  ctx.report["pvalues_file"] = "pvalues.csv";

  expect_equal(ctx, "pass", passes == reps);
  expect_at_least(ctx, "min_pass_rate", rate);
  expect_at_most(ctx, "max_pass_rate", rate);
  expect_equal(ctx, "in_klindt_class", verdict.in_klindt_class);
}

using Runner = void (*)(Context&);

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> table = {
      {"simulate", run_simulate}, {"commutant", run_commutant},         {"imitate", run_imitate},
      {"verify", run_verify},     {"recover", run_recover},             {"stochastic-test", run_stochastic},
  };
  return table;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("MECHID_SEED");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-') throw ConfigError("MECHID_SEED", "not a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"simulate", "commutant",       "imitate",
                                                 "verify",   "recover",         "stochastic-test"};
  return names;
}

bool is_stochastic_experiment(const std::string& experiment, const Json& config) {
  if (experiment == "stochastic-test") return true;
  if (experiment == "simulate") return schedule_is_noisy(config);
  return false;
}

Json resolve_config(const std::string& experiment, Json config, const RunOptions& options) {
  if (!config.is_object()) throw ConfigError("(root)", "expected a JSON object");
  if (!runners().count(experiment)) throw ConfigError("experiment", "unknown experiment '" + experiment + "'");
  if (config.contains("experiment")) {
    const std::string named = get_string(config["experiment"], "experiment");
    if (named != experiment) {
      throw ConfigError("experiment", "config is for '" + named + "', subcommand is '" + experiment + "'");
    }
  }
  config["experiment"] = experiment;
  if (config.contains("seed")) get_seed(config["seed"], "seed");
  if (options.use_env_seed) {
    if (const auto s = env_seed()) config["seed"] = *s;
  }
  if (options.seed) config["seed"] = *options.seed;
  if (options.tol) config["tolerance"] = *options.tol;
  if (options.csv) config["csv"] = *options.csv;
  if (options.budget) config["budget"] = *options.budget;
  if (options.comparison_class) config["class"] = *options.comparison_class;
  // Output location and thread count never change results.
  config.erase("out");
  config.erase("threads");
  return config;
}

RunResult run_experiment(const std::string& experiment, const Json& raw_config, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Context ctx;
  ctx.experiment = experiment;
  ctx.config = resolve_config(experiment, raw_config, options);
  ctx.base_dir = options.base_dir;
  ctx.threads = options.threads.value_or(raw_config.contains("threads")
                                             ? static_cast<unsigned>(get_integer(raw_config["threads"], "threads"))
                                             : default_thread_count());
  if (ctx.threads == 0) ctx.threads = 1;
  if (ctx.config.contains("seed")) ctx.seed = get_seed(ctx.config["seed"], "seed");
  if (is_stochastic_experiment(experiment, ctx.config) && !ctx.seed) {
    throw ConfigError("seed", "missing required field (stochastic experiment)");
  }

  fs::path out = options.out_dir;
  if (out.empty()) {
    out = raw_config.contains("out") ? fs::path(get_string(raw_config["out"], "out")) : fs::path("out") / experiment;
    if (out.is_relative() && raw_config.contains("out")) out = options.base_dir / out;
  }

  runners().at(experiment)(ctx);

  ctx.report["experiment"] = experiment;
  ctx.report["version"] = kVersion;
  if (ctx.seed) ctx.report["seed"] = *ctx.seed;
  ctx.report["verdict_failures"] = ctx.failures;
  ctx.files.insert(ctx.files.begin(), {"report.json", ctx.report.dump(2) + "\n"});

  fs::create_directories(out);
  Json outputs = Json::array();
  for (const auto& f : ctx.files) {
    write_text(out / f.name, f.content);
    outputs.push_back({{"path", f.name}, {"sha256", sha256_hex(f.content)}, {"bytes", f.content.size()}});
  }

  const bool stochastic = is_stochastic_experiment(experiment, ctx.config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  RunResult result;
  result.failures = ctx.failures;
  result.exit_code = ctx.failures.empty() ? kExitOk : kExitVerdict;
  Json& m = result.manifest;
  m["version"] = kVersion;
  m["experiment"] = experiment;
  m["config"] = ctx.config;
  m["config_digest"] = sha256_hex(canonical_dump(ctx.config));
  if (ctx.seed) m["seed"] = *ctx.seed;
  m["threads"] = ctx.threads;
  m["duration_seconds"] = seconds;
  m["outputs"] = std::move(outputs);
  m["trials"] = std::move(ctx.trials);
  m["status"] = ctx.failures.empty() ? "ok" : "verdict-failure";
  m["exit_code"] = result.exit_code;
  m["replay"] = stochastic ? Json{{"mode", "tolerance"}, {"relative_tolerance", 1e-12}}
                           : Json{{"mode", "bitwise"}, {"relative_tolerance", 0.0}};
  m["base_dir"] = fs::absolute(options.base_dir).lexically_normal().string();
  result.manifest_path = out / "manifest.json";
  write_text(result.manifest_path, m.dump(2) + "\n");
  return result;
}

std::string first_json_divergence(const Json& expected, const Json& actual, double rel_tol, const std::string& where) {
  const std::string here = where.empty() ? "/" : where;
  if (expected.is_number() && actual.is_number()) {
    const double x = expected.get<double>();
    const double y = actual.get<double>();
    if (x == y || (std::isnan(x) && std::isnan(y))) return {};
    if (rel_tol > 0 && std::abs(x - y) <= rel_tol * std::max({1.0, std::abs(x), std::abs(y)})) return {};
    return here + ": expected " + format_double(x) + ", got " + format_double(y);
  }
  if (expected.type() != actual.type()) {
    return here + ": expected " + std::string(expected.type_name()) + ", got " + actual.type_name();
  }
  if (expected.is_object()) {
    for (auto it = expected.begin(); it != expected.end(); ++it) {
      if (!actual.contains(it.key())) return where + "/" + it.key() + ": missing in replay";
      auto d = first_json_divergence(it.value(), actual[it.key()], rel_tol, where + "/" + it.key());
      if (!d.empty()) return d;
    }
    for (auto it = actual.begin(); it != actual.end(); ++it) {
      if (!expected.contains(it.key())) return where + "/" + it.key() + ": unexpected in replay";
    }
    return {};
  }
  if (expected.is_array()) {
    if (expected.size() != actual.size()) {
      return here + ": expected " + std::to_string(expected.size()) + " elements, got " + std::to_string(actual.size());
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      auto d = first_json_divergence(expected[i], actual[i], rel_tol, where + "/" + std::to_string(i));
      if (!d.empty()) return d;
    }
    return {};
  }
  if (expected != actual) return here + ": expected " + expected.dump() + ", got " + actual.dump();
  return {};
}

std::string first_csv_divergence(const std::string& expected, const std::string& actual, double rel_tol) {
  auto split_lines = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  };
  auto split_cells = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  const auto a = split_lines(expected);
  const auto b = split_lines(actual);
  for (std::size_t r = 0; r < std::max(a.size(), b.size()); ++r) {
    if (r >= a.size() || r >= b.size()) return "row " + std::to_string(r + 1) + ": row count differs";
    if (a[r] == b[r]) continue;
    const auto ca = split_cells(a[r]);
    const auto cb = split_cells(b[r]);
    if (ca.size() != cb.size()) return "row " + std::to_string(r + 1) + ": column count differs";
    for (std::size_t c = 0; c < ca.size(); ++c) {
      if (ca[c] == cb[c]) continue;
      char* e1 = nullptr;
      char* e2 = nullptr;
      const double x = std::strtod(ca[c].c_str(), &e1);
      const double y = std::strtod(cb[c].c_str(), &e2);
      const bool numeric = e1 && *e1 == '\0' && e2 && *e2 == '\0' && !ca[c].empty() && !cb[c].empty();
      if (numeric && rel_tol > 0 && std::abs(x - y) <= rel_tol * std::max({1.0, std::abs(x), std::abs(y)})) continue;
      return "row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) + ": expected " + ca[c] +
             ", got " + cb[c];
    }
  }
  return {};
}

ReplayResult replay(const fs::path& manifest_path, const std::optional<Json>& config, const RunOptions& options) {
  const Json manifest = load_json_file(manifest_path);
  const std::string version = get_string(require(manifest, "version", ""), "version");
  if (version != kVersion) {
    throw Error("manifest was written by version " + version + ", this is " + kVersion + "; replay is not supported across versions");
  }
  const std::string experiment = get_string(require(manifest, "experiment", ""), "experiment");
  const Json& recorded = require(manifest, "config", "");
  const double tol = number_or(require(manifest, "replay", ""), "relative_tolerance", 0.0, "replay");

  RunOptions opts = options;
  // The recorded config already has every override folded in; only explicit
  // flags apply on top of it.
  if (!config) opts.use_env_seed = false;
  if (!config && options.base_dir == ".") opts.base_dir = get_string(require(manifest, "base_dir", ""), "base_dir");
  const fs::path original_dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  if (opts.out_dir.empty()) opts.out_dir = original_dir / "replay";
  if (fs::equivalent(fs::absolute(opts.out_dir).parent_path(), fs::absolute(original_dir)) &&
      fs::absolute(opts.out_dir) == fs::absolute(original_dir)) {
    throw InvalidInput("replay output directory must differ from the original run");
  }

  const RunResult rerun = run_experiment(experiment, config ? *config : recorded, opts);
  ReplayResult result;
  result.replay_dir = opts.out_dir;

  for (const auto& out : require(manifest, "outputs", "")) {
    const std::string name = get_string(require(out, "path", "outputs"), "outputs.path");
    const std::string want_digest = get_string(require(out, "sha256", "outputs"), "outputs.sha256");
    const fs::path fresh = opts.out_dir / name;
    if (!fs::exists(fresh)) {
      result.first_divergence = name + ": not produced by the replay";
      return result;
    }
    const std::string now = read_text(fresh);
    if (sha256_hex(now) == want_digest) continue;
    std::string detail;
    const fs::path old = original_dir / name;
    if (fs::exists(old) && sha256_file(old) == want_digest) {
      const std::string before = read_text(old);
      if (name.size() > 5 && name.ends_with(".json")) {
        detail = first_json_divergence(Json::parse(before), Json::parse(now), tol);
      } else {
        detail = first_csv_divergence(before, now, tol);
      }
      if (detail.empty()) continue;  // within the recorded tolerance
    } else {
      detail = "digest differs (original file unavailable for a field-level comparison)";
    }
    result.first_divergence = name + " " + detail;
    return result;
  }
  const std::string want_config = get_string(require(manifest, "config_digest", ""), "config_digest");
  if (rerun.manifest["config_digest"] != want_config) {
    result.first_divergence = "config digest differs: outputs match but the resolved config is not the recorded one";
    return result;
  }
  result.match = true;
  return result;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Mechanism identifiability toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<double> tol;
    bool csv = false;
    std::optional<std::size_t> budget;
    std::optional<std::string> cls;
    std::string manifest;
  } flags;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", flags.config, "experiment config (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "seed (overrides config and MECHID_SEED)");
    sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--tol", flags.tol, "numerical tolerance")->check(CLI::PositiveNumber);
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : experiment_names()) {
    auto* sub = app.add_subcommand(name);
    common(sub, true);
    subs[name] = sub;
  }
  subs["commutant"]->add_flag("--csv", flags.csv, "also write bases as CSV");
  subs["imitate"]->add_option("--budget", flags.budget, "assignment cap")->check(CLI::PositiveNumber);
  subs["recover"]->add_option("--class", flags.cls, "comparison class for the recovered encoder");
  auto* rep = app.add_subcommand("replay", "re-run a manifest and compare outputs");
  common(rep, false);
  rep->add_option("--manifest", flags.manifest, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  RunOptions opts;
  opts.out_dir = flags.out;
  opts.seed = flags.seed;
  opts.threads = flags.threads;
  opts.tol = flags.tol;
  if (flags.csv) opts.csv = true;
  opts.budget = flags.budget;
  opts.comparison_class = flags.cls;

  try {
    if (rep->parsed()) {
      std::optional<Json> config;
      if (!flags.config.empty()) {
        config = load_json_file(flags.config);
        opts.base_dir = fs::path(flags.config).parent_path();
        if (opts.base_dir.empty()) opts.base_dir = ".";
      }
      const auto r = replay(flags.manifest, config, opts);
      if (r.match) {
        std::cout << "replay matches (" << r.replay_dir.string() << ")\n";
        return kExitOk;
      }
      std::cout << "replay differs: first divergence at " << r.first_divergence << "\n";
      return kExitVerdict;
    }
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      opts.base_dir = fs::path(flags.config).parent_path();
      if (opts.base_dir.empty()) opts.base_dir = ".";
      const Json config = load_json_file(flags.config);
      const auto r = run_experiment(name, config, opts);
      std::cout << name << ": " << (r.exit_code == kExitOk ? "ok" : "verdict failure") << " (manifest "
                << r.manifest_path.string() << ")\n";
      for (const auto& f : r.failures) std::cout << "  " << f << "\n";
      return r.exit_code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const DivergenceError& e) {
    std::cerr << "simulation diverged: " << e.what() << "\n";
    return kExitError;
  } catch (const BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << " (raise it with --budget)\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace mechid::cli
