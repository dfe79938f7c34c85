#include "mechid/cli/report.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mechid::cli {

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const ComplexVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(Json::array({v(i).real(), v(i).imag()}));
  return out;
}

Json to_json(const AffineMap& a) { return {{"A", to_json(a.A)}, {"p", to_json(a.p)}}; }

Json to_json(const Verdict& v) {
  // to_string() folds the dimension into "other(k)"; the class alone is handier for matching.
  std::string cls = v.to_string();
  if (v.kind == IdentifiabilityClass::other) cls = "other";
  return {{"class", cls}, {"dimension", v.dimension}, {"label", v.to_string()}};
}

Json to_json(const AffineFamily& family) {
  Json j;
  j["nonempty"] = family.nonempty;
  j["dimension"] = family.dimension();
  j["a_dimension"] = family.a_part.dimension();
  j["free_offset_dimension"] = static_cast<int>(family.p_free.size());
  j["shift_degenerate"] = family.shift_degenerate;
  j["verdict"] = to_json(family.verdict());
  if (family.nonempty) j["particular"] = to_json(family.particular);
  Json basis = Json::array();
  for (std::size_t k = 0; k < family.a_part.basis.size(); ++k) {
    basis.push_back({{"A", to_json(family.a_part.basis[k])}, {"p", to_json(family.p_for_basis[k])}});
  }
  j["basis"] = std::move(basis);
  Json free = Json::array();
  for (const auto& p : family.p_free) free.push_back(to_json(p));
  j["free_offsets"] = std::move(free);
  return j;
}

Json to_json(const ConditionReport& r) {
  Json j;
  j["d"] = r.d;
  j["diagonalizable"] = r.diagonalizable;
  j["eigenvector_condition"] = r.eigenvector_condition;
  j["distinct_eigenvalues"] = r.distinct_eigenvalues;
  j["min_eigen_gap"] = r.min_eigen_gap;
  j["eigenvalues"] = to_json(r.eigenvalues);
  j["offset_condition"] = r.offset_condition;
  j["eigen_offsets"] = to_json(r.eigen_offsets);
  j["zero_components"] = r.zero_components;
  j["assumption1"] = r.assumption1;
  j["distinct_offsets"] = r.distinct_offsets;
  j["offset_difference_rank"] = r.offset_difference_rank;
  j["assumption2_assumed"] = r.assumption2_assumed;
  j["solution_dimension"] = r.solution_dimension;
  j["verdict"] = to_json(r.verdict);
  return j;
}

Json to_json(const ImitationRecord& r) {
  return {{"source", r.source}, {"target", r.target}, {"map", to_json(r.map)}, {"residual", r.residual}};
}

Json to_json(const CycleReport& r) {
  Json j;
  j["in_closure"] = r.in_closure;
  if (!r.in_closure) j["unmatched_index"] = r.unmatched_index;
  j["permutation"] = r.permutation;
  j["bijective"] = r.bijective();
  j["cycles"] = r.cycles;
  j["cycle_length"] = r.cycle_length;
  j["power_residuals"] = r.power_residuals;
  j["powers_commute"] = r.powers_commute;
  return j;
}

Json to_json(const AuditRow& r) {
  Json j;
  j["candidate_id"] = r.candidate_id;
  j["equivariance_pass"] = r.equivariance_pass;
  j["identity_pass"] = r.identity_pass;
  j["equivariance_residual"] = r.equivariance_residual;
  j["identity_residual"] = r.identity_residual;
  j["commutation_raw"] = r.commutation_raw;
  j["identity_raw"] = r.identity_raw;
  j["identity_bound"] = r.identity_bound;
  j["bound_holds"] = r.bound_holds;
  j["agree"] = r.agree();
  return j;
}

Json to_json(const RecoveryResult& r) {
  Json j;
  j["encoder"] = to_json(r.encoder);
  j["solution_space_dim"] = r.solution_space_dim;
  j["residual"] = r.residual;
  j["identifiability"] = to_json(r.identifiability);
  j["conditions"] = to_json(r.conditions);
  j["observation_rank"] = r.observation_rank;
  j["pairs_used"] = r.pairs_used;
  j["fewer_pairs_than_recommended"] = r.fewer_pairs_than_recommended;
  Json dirs = Json::array();
  for (const auto& m : r.null_directions) dirs.push_back(to_json(m));
  j["null_directions"] = std::move(dirs);
  return j;
}

Json to_json(const TestReport& r) {
  return {{"statistics", r.statistics}, {"p_values", r.p_values}, {"min_p_value", r.min_p_value},
          {"threshold", r.threshold},   {"pass", r.pass}};
}

namespace {

Json to_json(const SignedPermutation& p) { return {{"perm", p.perm}, {"signs", p.signs}}; }

}  // namespace

Json to_json(const ClassVerdict& v) {
  Json j;
  j["orthonormal"] = v.orthonormal;
  j["orthonormality_defect"] = v.orthonormality_defect;
  j["signed_permutation"] = v.signed_permutation;
  j["pattern"] = v.pattern ? to_json(*v.pattern) : Json(nullptr);
  j["volume_preserving"] = v.volume_preserving;
  j["det_deviation"] = v.det_deviation;
  j["in_klindt_class"] = v.in_klindt_class;
  return j;
}

Json to_json(const JacobianVerdict& v) {
  Json anchors = Json::array();
  for (const auto& a : v.anchors) {
    anchors.push_back({{"anchor", to_json(a.anchor)},
                       {"jacobian", to_json(a.jacobian)},
                       {"orthonormality_defect", a.orthonormality_defect},
                       {"pattern", a.pattern ? to_json(*a.pattern) : Json(nullptr)},
                       {"pass", a.pass}});
  }
  return {{"in_class", v.in_class}, {"pattern_constant", v.pattern_constant}, {"anchors", std::move(anchors)}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string canonical_dump(const Json& j) { return j.dump(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace mechid::cli
