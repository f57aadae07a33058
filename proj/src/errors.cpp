#include "geoprobe/errors.hpp"

namespace geoprobe {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kType: return "type";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kFitFailure: return "fit_failure";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kRouting: return "routing";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kModel: return "model";
    case ErrorKind::kUnavailable: return "unavailable";
  }
  return "unknown";
}

namespace {
std::string join_violations(const std::vector<std::string>& v) {
  std::string out = "invalid configuration";
  for (const auto& item : v) {
    out += "\n  - ";
    out += item;
  }
  return out;
}
}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(ErrorKind::kConfig, join_violations(violations)),
      violations_(std::move(violations)) {}

}  // namespace geoprobe
