#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace t3sr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An invalid user-supplied parameter (bad sigma, rank, rate, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Volume file I/O failure. The kind distinguishes the failure modes a
/// caller may want to react to individually.
class IoError : public Error {
 public:
  enum class Kind {
    missing_sidecar,
    bad_header,
    unknown_dtype,
    length_mismatch,
    bad_payload,
    read_failed,
    write_failed,
  };

  IoError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// An iterative solve produced a non-finite residual. Carries the
/// residual trace accumulated up to the failure.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, std::vector<double> trace)
      : Error(msg), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace t3sr
