// Basic scalar type, error type and small helpers shared across the library.
#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace taper {

#ifdef TAPER_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Tolerances are precision-dependent; verification builds use 64-bit reals.
struct tol {
  static constexpr real fd_rel = sizeof(real) == 8 ? real(1e-4) : real(2e-2);
  static constexpr real oracle_rel = sizeof(real) == 8 ? real(1e-6) : real(1e-4);
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// printf-style formatting into std::string; used for error messages and logs.
inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list copy;
  va_copy(copy, args);
  int n = std::vsnprintf(nullptr, 0, fmt, copy);
  va_end(copy);
  std::string out(n > 0 ? static_cast<size_t>(n) : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args);
  va_end(args);
  return out;
}

template <typename... Args>
[[noreturn]] inline void fail(const char* fmt, Args... args) {
  throw Error(strfmt(fmt, args...));
}

inline real clip(real t, real lo, real hi) { return t < lo ? lo : (t > hi ? hi : t); }

inline real sigmoid(real t) {
  if (t >= 0) {
    real e = std::exp(-t);
    return real(1) / (real(1) + e);
  }
  real e = std::exp(t);
  return e / (real(1) + e);
}

// e^-|t| / (1+e^-|t|)^2: same as sigma*(1-sigma) but avoids the cancellation
// in 1-sigma on the plateaus.
inline real sigmoid_deriv(real t) {
  const real e = std::exp(-std::abs(t));
  const real d = real(1) + e;
  return e / (d * d);
}

}  // namespace taper
