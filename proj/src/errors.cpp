#include "ccatomo/errors.hpp"

namespace ccatomo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "invalid spec";
    case ErrorKind::InvalidProfile: return "invalid profile";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::Precondition: return "precondition violated";
    case ErrorKind::ResampleRequired: return "resample required";
    case ErrorKind::Underdetermined: return "underdetermined";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::DegenerateSpectrum: return "degenerate spectrum";
    case ErrorKind::SingularFrequency: return "singular frequency";
    case ErrorKind::BrokenChain: return "broken chain";
    case ErrorKind::InconsistentModes: return "inconsistent modes";
  }
  return "error";
}

}  // namespace ccatomo
