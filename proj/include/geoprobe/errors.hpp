#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoprobe {

enum class ErrorKind {
  kDomain,
  kParse,
  kSchema,
  kType,
  kVersion,
  kIntegrity,
  kCapacity,
  kFitFailure,
  kNotFound,
  kConflict,
  kConfig,
  kRouting,
  kInfeasible,
  kModel,
  kUnavailable,
};

const char* to_string(ErrorKind kind) noexcept;

// Base for every error thrown by the library. Callers that need to map
// errors to exit codes or HTTP statuses switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::kDomain, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::kParse, what) {}
};

// A required key is absent. key() is the dotted path of the missing key.
class SchemaError : public Error {
 public:
  explicit SchemaError(std::string key)
      : Error(ErrorKind::kSchema, "missing required key '" + key + "'"),
        key_(std::move(key)) {}
  SchemaError(std::string key, const std::string& what)
      : Error(ErrorKind::kSchema, what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class TypeError : public Error {
 public:
  TypeError(std::string key, const std::string& expected)
      : Error(ErrorKind::kType, "key '" + key + "' must be " + expected),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorKind::kVersion, what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what)
      : Error(ErrorKind::kIntegrity, what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error(ErrorKind::kCapacity, what) {}
};

class FitFailure : public Error {
 public:
  explicit FitFailure(const std::string& what) : Error(ErrorKind::kFitFailure, what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error(ErrorKind::kNotFound, what) {}
};

class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& what) : Error(ErrorKind::kConflict, what) {}
};

class RoutingError : public Error {
 public:
  explicit RoutingError(const std::string& what) : Error(ErrorKind::kRouting, what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what)
      : Error(ErrorKind::kInfeasible, what) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorKind::kModel, what) {}
};

class UnavailableError : public Error {
 public:
  explicit UnavailableError(const std::string& what)
      : Error(ErrorKind::kUnavailable, what) {}
};

// Carries every violation found while validating a configuration, not just
// the first one.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace geoprobe
