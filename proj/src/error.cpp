#include "mkv/error.hpp"

namespace mkv {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptySupport: return "EmptySupport";
    case Errc::NegativeWeight: return "NegativeWeight";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidAlpha: return "InvalidAlpha";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::DegenerateDiffusion: return "DegenerateDiffusion";
    case Errc::MassLeak: return "MassLeak";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::ReversedTimes: return "ReversedTimes";
    case Errc::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::ConfigParse: return "ConfigParse";
    case Errc::ParseError: return "ParseError";
    case Errc::Numerical: return "Numerical";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace mkv
