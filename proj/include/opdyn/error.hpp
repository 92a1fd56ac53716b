#pragma once

#include <stdexcept>
#include <string>

namespace opdyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class EigenSolverFailure : public Error {
 public:
  using Error::Error;
};

class RealNegativeEigenvalue : public Error {
 public:
  RealNegativeEigenvalue(const std::string& what, double eigenvalue)
      : Error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class SharedEigenvalue : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class Assumption1Violation : public InvalidSpec {
 public:
  Assumption1Violation(const std::string& what, std::size_t agent, double eigenvalue)
      : InvalidSpec(what), agent_(agent), eigenvalue_(eigenvalue) {}
  /// Zero-based index of the offending agent.
  std::size_t agent() const noexcept { return agent_; }
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  std::size_t agent_;
  double eigenvalue_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace opdyn
