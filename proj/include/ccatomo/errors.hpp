#pragma once

#include <stdexcept>
#include <string>

namespace ccatomo {

enum class ErrorKind {
  InvalidSpec,
  InvalidProfile,
  InsufficientData,
  Precondition,
  ResampleRequired,
  Underdetermined,
  Schema,
  Io,
  DegenerateSpectrum,
  SingularFrequency,
  BrokenChain,
  InconsistentModes,
};

const char* to_string(ErrorKind kind);

// Numerical failures (as opposed to bad input) map to a distinct exit code in
// the command-line tool.
constexpr bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::DegenerateSpectrum || kind == ErrorKind::SingularFrequency ||
         kind == ErrorKind::BrokenChain || kind == ErrorKind::InconsistentModes;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, long index = -1)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Offending mode, site or grid-point index when the error carries one, else -1.
  long index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  long index_;
};

}  // namespace ccatomo
