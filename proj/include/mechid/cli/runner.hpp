#pragma once

#include "mechid/cli/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mechid::cli {

inline constexpr const char* kVersion = MECHID_VERSION;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitVerdict = 2;

const std::vector<std::string>& experiment_names();
bool is_stochastic_experiment(const std::string& experiment, const Json& config);

/// Command-line overrides; flags win over the config, MECHID_SEED sits in between.
struct RunOptions {
  /// Relative paths inside the config resolve against this directory.
  std::filesystem::path base_dir = ".";
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> tol;
  std::optional<bool> csv;
  std::optional<std::size_t> budget;
  std::optional<std::string> comparison_class;
  /// Read MECHID_SEED from the environment.
  bool use_env_seed = true;
};

/// Config with every override folded in; this is what gets digested.
Json resolve_config(const std::string& experiment, Json config, const RunOptions& options);

struct RunResult {
  int exit_code = kExitOk;
  Json manifest;
  std::filesystem::path manifest_path;
  /// Human-readable reasons for a verdict failure.
  std::vector<std::string> failures;
};

/// Runs one experiment and writes report files plus manifest.json into the
/// output directory.
RunResult run_experiment(const std::string& experiment, const Json& config, const RunOptions& options);

struct ReplayResult {
  bool match = false;
  std::string first_divergence;
  std::filesystem::path replay_dir;
};

/// Re-runs the manifest's config (or `config` when given) into a sibling
/// directory and compares every output. Throws on a version mismatch.
ReplayResult replay(const std::filesystem::path& manifest_path, const std::optional<Json>& config,
                    const RunOptions& options);

/// Structural comparison of two JSON documents; empty when equal within
/// the relative tolerance, otherwise a pointer to the first difference.
std::string first_json_divergence(const Json& expected, const Json& actual, double rel_tol,
                                  const std::string& where = "");
/// Cellwise CSV comparison with the same conventions.
std::string first_csv_divergence(const std::string& expected, const std::string& actual, double rel_tol);

int main_entry(int argc, char** argv);

}  // namespace mechid::cli
