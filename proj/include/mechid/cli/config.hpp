#pragma once

#include "mechid/decoder.hpp"
#include "mechid/dynamics.hpp"
#include "mechid/errors.hpp"
#include "mechid/grid.hpp"
#include "mechid/noise.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mechid::cli {

using Json = nlohmann::json;

/// Schema violation; `field` is a dotted path into the config document.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidInput(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Parses a JSON file; syntax errors report line and column.
Json load_json_file(const std::filesystem::path& path);
Json parse_json_text(const std::string& text, const std::string& origin);

// Typed accessors. `path` names the value for error messages.
const Json& require(const Json& object, const std::string& key, const std::string& path);
double get_number(const Json& value, const std::string& path);
std::int64_t get_integer(const Json& value, const std::string& path);
std::uint64_t get_seed(const Json& value, const std::string& path);
std::string get_string(const Json& value, const std::string& path);
bool get_bool(const Json& value, const std::string& path);
Vector get_vector(const Json& value, const std::string& path);
/// Row-major nested arrays.
Matrix get_matrix(const Json& value, const std::string& path);

double number_or(const Json& object, const std::string& key, double fallback, const std::string& path);
std::int64_t integer_or(const Json& object, const std::string& key, std::int64_t fallback, const std::string& path);

struct MechanismDecl {
  std::string label;
  AffineMechanism affine;
  std::optional<NoiseSpec> noise;

  StochasticMechanism stochastic() const;
};

/// {"label": ..., "type": "affine", "M": [[...]], "b": [...], "noise": {...}}
MechanismDecl parse_mechanism(const Json& value, const std::string& path, int index);
std::vector<MechanismDecl> parse_mechanisms(const Json& array, const std::string& path);
const MechanismDecl& find_mechanism(const std::vector<MechanismDecl>& mechanisms, const std::string& label,
                                    const std::string& path);

/// {"family": "generalized-laplace", "alpha": 1, "scale": 1}; d from the mechanism.
NoiseSpec parse_noise(const Json& value, const std::string& path, int d);

/// {"type": "linear", "G": ...} or {"type": "structured", "G": ..., "maps": ["cubic:0.3", ...]}.
Decoder parse_decoder(const Json& value, const std::string& path);

/// {"points": 256, "lo": -2, "hi": 2}; every key optional.
GridSpec parse_grid(const Json& config, const std::string& path);

/// {"A": [[...]], "p": [...]}; p defaults to zero.
AffineMap parse_affine_map(const Json& value, const std::string& path);

}  // namespace mechid::cli
