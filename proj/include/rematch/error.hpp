#pragma once

#include <stdexcept>
#include <string>

namespace rematch {

// Malformed structure: bad ids, dimension mismatches, broken bijections.
class StructuralError : public std::runtime_error {
 public:
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Value outside its mathematical domain.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Room layout that cannot be packed into two teams of five.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// An operation that requires candidates got none.
class EmptyResultError : public std::runtime_error {
 public:
  explicit EmptyResultError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration (files, flags, incompatible settings).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Artifact load failure: corrupt file, wrong magic, version mismatch.
class LoadError : public std::runtime_error {
 public:
  explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (encodings, losses).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rematch
