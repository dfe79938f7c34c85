#pragma once

#include "mechid/cli/config.hpp"
#include "mechid/equivariance.hpp"
#include "mechid/identity.hpp"
#include "mechid/imitation.hpp"
#include "mechid/recovery.hpp"
#include "mechid/stochastic.hpp"

#include <filesystem>
#include <string>

namespace mechid::cli {

/// Row-major nested arrays, the same layout the config reader accepts.
Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Json to_json(const ComplexVector& v);
Json to_json(const AffineMap& a);
Json to_json(const Verdict& v);
Json to_json(const AffineFamily& family);
Json to_json(const ConditionReport& report);
Json to_json(const ImitationRecord& record);
Json to_json(const CycleReport& report);
Json to_json(const AuditRow& row);
Json to_json(const RecoveryResult& result);
Json to_json(const TestReport& report);
Json to_json(const ClassVerdict& verdict);
Json to_json(const JacobianVerdict& verdict);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Canonical form: sorted keys, no whitespace.
std::string canonical_dump(const Json& j);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// %.17g; "nan"/"inf" spelled out.
std::string format_double(double x);

}  // namespace mechid::cli
