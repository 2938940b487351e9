#ifndef COSIE_ERROR_HPP
#define COSIE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace cosie {

enum class Errc {
  invalid_argument,
  non_finite,
  non_symmetric,
  out_of_range,
  shape_mismatch,
  no_convergence,
  rank_deficient,
  not_orthonormal,
  singular,
  insufficient_samples,
  no_signal,
  degenerate,
  domain,
  io,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_finite: return "non_finite";
    case Errc::non_symmetric: return "non_symmetric";
    case Errc::out_of_range: return "out_of_range";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::no_convergence: return "no_convergence";
    case Errc::rank_deficient: return "rank_deficient";
    case Errc::not_orthonormal: return "not_orthonormal";
    case Errc::singular: return "singular";
    case Errc::insufficient_samples: return "insufficient_samples";
    case Errc::no_signal: return "no_signal";
    case Errc::degenerate: return "degenerate";
    case Errc::domain: return "domain";
    case Errc::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. `code()` lets callers and tests
/// distinguish the failure class without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace cosie

#endif  // COSIE_ERROR_HPP
