#pragma once

#include <stdexcept>
#include <string>

namespace wsglr {

enum class Errc {
  invalid_argument,
  non_finite,
  degenerate_drift,
  support_mismatch,
  window_too_short,
  non_convergence,
  parse_error,
  io_error,
  missing_role,
  no_valid_trials,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::non_finite: return "non-finite value";
    case Errc::degenerate_drift: return "degenerate drift";
    case Errc::support_mismatch: return "support mismatch";
    case Errc::window_too_short: return "window too short";
    case Errc::non_convergence: return "non-convergence";
    case Errc::parse_error: return "parse error";
    case Errc::io_error: return "i/o error";
    case Errc::missing_role: return "missing role";
    case Errc::no_valid_trials: return "no valid trials";
  }
  return "unknown error";
}

/// Library-wide exception. `code()` distinguishes the failure class so callers
/// (and tests) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace wsglr
