#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mkv {

enum class Errc {
  EmptySupport,
  NegativeWeight,
  DimensionMismatch,
  InvalidAlpha,
  InvalidArgument,
  GridMismatch,
  DegenerateDiffusion,
  MassLeak,
  OutOfDomain,
  ReversedTimes,
  MaxIterationsExceeded,
  DegenerateInput,
  ConfigParse,
  ParseError,
  Numerical,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above; the
/// CLI maps them onto process exit codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mkv
