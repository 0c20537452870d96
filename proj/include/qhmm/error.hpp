#pragma once

#include <stdexcept>
#include <string>

namespace qhmm {

/// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  invalid_input,          // malformed data, dimension mismatch, bad arguments
  precondition_violated,  // e.g. map not irreducible / not primitive
  infeasible,             // a bound has no admissible parameter
  numerical               // eigensolver failure, vanishing probability
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace qhmm
