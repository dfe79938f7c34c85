#include "mechid/cli/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace mechid::cli {

namespace {

std::string kind_of(const Json& v) { return v.type_name(); }

// Byte offset to "line L, column C".
std::string locate(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // byte is 1-based and points just past the offending character.
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    std::string what = e.what();
    const auto cut = what.find("syntax error");
    throw ConfigError(origin, locate(text, offset) + ": " + (cut == std::string::npos ? what : what.substr(cut)));
  }
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

const Json& require(const Json& object, const std::string& key, const std::string& path) {
  if (!object.is_object()) throw ConfigError(path, "expected an object, found " + kind_of(object));
  const auto it = object.find(key);
  if (it == object.end()) throw ConfigError(path.empty() ? key : path + "." + key, "missing required field");
  return *it;
}

double get_number(const Json& value, const std::string& path) {
  if (!value.is_number()) throw ConfigError(path, "expected a number, found " + kind_of(value));
  return value.get<double>();
}

std::int64_t get_integer(const Json& value, const std::string& path) {
  if (!value.is_number_integer()) throw ConfigError(path, "expected an integer, found " + kind_of(value));
  return value.get<std::int64_t>();
}

std::uint64_t get_seed(const Json& value, const std::string& path) {
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer() && value.get<std::int64_t>() >= 0) return value.get<std::uint64_t>();
  throw ConfigError(path, "expected a non-negative integer seed");
}

std::string get_string(const Json& value, const std::string& path) {
  if (!value.is_string()) throw ConfigError(path, "expected a string, found " + kind_of(value));
  return value.get<std::string>();
}

bool get_bool(const Json& value, const std::string& path) {
  if (!value.is_boolean()) throw ConfigError(path, "expected true or false, found " + kind_of(value));
  return value.get<bool>();
}

Vector get_vector(const Json& value, const std::string& path) {
  if (!value.is_array()) throw ConfigError(path, "expected an array of numbers, found " + kind_of(value));
  Vector v(static_cast<Eigen::Index>(value.size()));
  for (std::size_t i = 0; i < value.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = get_number(value[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix get_matrix(const Json& value, const std::string& path) {
  if (!value.is_array() || value.empty()) throw ConfigError(path, "expected a nonempty array of rows");
  const std::size_t rows = value.size();
  if (!value[0].is_array() || value[0].empty()) throw ConfigError(path + "[0]", "expected a nonempty row");
  const std::size_t cols = value[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const Vector row = get_vector(value[i], row_path);
    if (static_cast<std::size_t>(row.size()) != cols) {
      throw ConfigError(row_path, "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    }
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

double number_or(const Json& object, const std::string& key, double fallback, const std::string& path) {
  const auto it = object.find(key);
  return it == object.end() ? fallback : get_number(*it, path + "." + key);
}

std::int64_t integer_or(const Json& object, const std::string& key, std::int64_t fallback, const std::string& path) {
  const auto it = object.find(key);
  return it == object.end() ? fallback : get_integer(*it, path + "." + key);
}

StochasticMechanism MechanismDecl::stochastic() const {
  if (!noise) throw InvalidInput("mechanism '" + label + "' declares no noise");
  StochasticMechanism m = affine_noise_mechanism(affine, *noise);
  m.label = label;
  return m;
}

NoiseSpec parse_noise(const Json& value, const std::string& path, int d) {
  if (!value.is_object()) throw ConfigError(path, "expected an object");
  NoiseSpec spec;
  spec.d = d;
  if (value.contains("family")) {
    try {
      spec.family = parse_noise_family(get_string(value["family"], path + ".family"));
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ConfigError(path + ".family", e.what());
    }
  }
  spec.alpha = number_or(value, "alpha", spec.alpha, path);
  spec.scale = number_or(value, "scale", spec.scale, path);
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

MechanismDecl parse_mechanism(const Json& value, const std::string& path, int index) {
  if (!value.is_object()) throw ConfigError(path, "expected a mechanism object");
  MechanismDecl decl;
  decl.label = value.contains("label") ? get_string(value["label"], path + ".label") : "m" + std::to_string(index);
  const std::string type = value.contains("type") ? get_string(value["type"], path + ".type") : "affine";
  if (type != "affine") throw ConfigError(path + ".type", "unsupported mechanism type '" + type + "'");
  const Matrix M = get_matrix(require(value, "M", path), path + ".M");
  if (M.rows() != M.cols()) throw ConfigError(path + ".M", "transition matrix must be square");
  Vector b = Vector::Zero(M.rows());
  if (value.contains("b")) {
    b = get_vector(value["b"], path + ".b");
    if (b.size() != M.rows()) throw ConfigError(path + ".b", "offset length differs from M");
  }
  try {
    decl.affine = AffineMechanism(M, b, decl.label);
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ".M", e.what());
  }
  if (value.contains("noise")) decl.noise = parse_noise(value["noise"], path + ".noise", static_cast<int>(M.rows()));
  return decl;
}

std::vector<MechanismDecl> parse_mechanisms(const Json& array, const std::string& path) {
  if (!array.is_array() || array.empty()) throw ConfigError(path, "expected a nonempty array of mechanisms");
  std::vector<MechanismDecl> out;
  for (std::size_t i = 0; i < array.size(); ++i) {
    out.push_back(parse_mechanism(array[i], path + "[" + std::to_string(i) + "]", static_cast<int>(i)));
    for (std::size_t j = 0; j + 1 < out.size(); ++j) {
      if (out[j].label == out.back().label) {
        throw ConfigError(path + "[" + std::to_string(i) + "].label", "duplicate label '" + out.back().label + "'");
      }
    }
    if (out.back().affine.dim() != out.front().affine.dim()) {
      throw ConfigError(path + "[" + std::to_string(i) + "].M", "all mechanisms must share the latent dimension");
    }
  }
  return out;
}

const MechanismDecl& find_mechanism(const std::vector<MechanismDecl>& mechanisms, const std::string& label,
                                    const std::string& path) {
  for (const auto& m : mechanisms) {
    if (m.label == label) return m;
  }
  throw ConfigError(path, "unknown mechanism label '" + label + "'");
}

Decoder parse_decoder(const Json& value, const std::string& path) {
  if (!value.is_object()) throw ConfigError(path, "expected a decoder object");
  const std::string type = value.contains("type") ? get_string(value["type"], path + ".type") : "linear";
  const Matrix G = get_matrix(require(value, "G", path), path + ".G");
  try {
    if (type == "linear") return Decoder::linear(G);
    if (type == "structured") {
      const Json& maps = require(value, "maps", path);
      if (!maps.is_array()) throw ConfigError(path + ".maps", "expected an array of map names");
      std::vector<MonotoneMap> parsed;
      for (std::size_t i = 0; i < maps.size(); ++i) {
        const std::string p = path + ".maps[" + std::to_string(i) + "]";
        try {
          parsed.push_back(MonotoneMap::parse(get_string(maps[i], p)));
        } catch (const ConfigError&) {
          throw;
        } catch (const InvalidInput& e) {
          throw ConfigError(p, e.what());
        }
      }
      return Decoder::structured(G, std::move(parsed));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path + ".type", "unsupported decoder type '" + type + "'");
}

GridSpec parse_grid(const Json& config, const std::string& path) {
  GridSpec grid;
  const auto it = config.find("grid");
  if (it == config.end()) return grid;
  const std::string p = path.empty() ? "grid" : path + ".grid";
  if (!it->is_object()) throw ConfigError(p, "expected an object");
  const auto points = integer_or(*it, "points", static_cast<std::int64_t>(grid.points), p);
  if (points < 1) throw ConfigError(p + ".points", "must be positive");
  grid.points = static_cast<int>(points);
  grid.lo = number_or(*it, "lo", grid.lo, p);
  grid.hi = number_or(*it, "hi", grid.hi, p);
  if (!(grid.lo < grid.hi)) throw ConfigError(p, "lo must be below hi");
  return grid;
}

AffineMap parse_affine_map(const Json& value, const std::string& path) {
  if (!value.is_object()) throw ConfigError(path, "expected an affine map object");
  const Matrix A = get_matrix(require(value, "A", path), path + ".A");
  if (A.rows() != A.cols()) throw ConfigError(path + ".A", "must be square");
  Vector p = Vector::Zero(A.rows());
  if (value.contains("p")) {
    p = get_vector(value["p"], path + ".p");
    if (p.size() != A.rows()) throw ConfigError(path + ".p", "length differs from A");
  }
  AffineMap a(A, p);
  if (!a.invertible(1e-12)) throw ConfigError(path + ".A", "map is not invertible");
  return a;
}

}  // namespace mechid::cli
