#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <quadmath.h>
#include <stdexcept>
#include <string>

namespace lq {

// Error taxonomy. Everything thrown by the solvers derives from Error so the
// CLI can map classes to exit codes (input -> 2, numerical -> 3).
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct RootCountMismatch : NumericalError {
  using NumericalError::NumericalError;
};
struct NearMultipleRoots : NumericalError {
  using NumericalError::NumericalError;
};
struct UnstableP1 : NumericalError {
  using NumericalError::NumericalError;
};
struct SeriesNotConverged : NumericalError {
  using NumericalError::NumericalError;
};
struct SingularSystem : NumericalError {
  using NumericalError::NumericalError;
};
struct TailNotConverged : NumericalError {
  using NumericalError::NumericalError;
};
struct IllConditioned : NumericalError {
  using NumericalError::NumericalError;
};
struct NoContraction : NumericalError {
  using NumericalError::NumericalError;
};
struct MaxIterations : NumericalError {
  using NumericalError::NumericalError;
};

using cplx = std::complex<double>;

// Neumaier-compensated accumulator; works for double and __float128.
template <class T>
struct KahanSum {
  T sum{0};
  T comp{0};
  T max_mag{0};  // largest |term| seen, for cancellation diagnostics

  void add(T term) {
    T mag = term < T(0) ? -term : term;
    if (mag > max_mag) max_mag = mag;
    T t = sum + term;
    if ((sum < T(0) ? -sum : sum) >= mag)
      comp += (sum - t) + term;
    else
      comp += (term - t) + sum;
    sum = t;
  }
  T value() const { return sum + comp; }
  // max |term| / |sum|: how many digits the alternating cancellation ate
  T cancellation_ratio() const {
    T v = value();
    T av = v < T(0) ? -v : v;
    if (av < T(1e-300)) av = T(1e-300);
    return max_mag / av;
  }
};

// Complex Kahan built from two real accumulators.
struct KahanSumC {
  KahanSum<double> re, im;
  void add(cplx z) {
    re.add(z.real());
    im.add(z.imag());
  }
  cplx value() const { return {re.value(), im.value()}; }
};

// __float128 utilities. Quad is used inside the M/D band machinery, where the
// closed form cancels catastrophically in doubles (see solver notes there).
using quad = __float128;

inline quad qabs(quad x) { return x < 0 ? -x : x; }
inline quad qexp(quad x) { return expq(x); }
inline quad qlog(quad x) { return logq(x); }
inline quad qsqrt(quad x) { return sqrtq(x); }
inline quad qpow(quad b, quad e) { return powq(b, e); }
inline double to_double(quad x) { return static_cast<double>(x); }

inline std::string quad_to_string(quad x) {
  char buf[64];
  quadmath_snprintf(buf, sizeof buf, "%.33Qe", x);
  return buf;
}

constexpr double pi = 3.14159265358979323846264338327950288;

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace lq
