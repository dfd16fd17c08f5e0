#pragma once

#include <algorithm>
#include <vector>

#include "lq/common.hpp"

namespace lq {

// Polynomials are coefficient vectors in ascending order: p[0] + p[1] x + ...
using Poly = std::vector<cplx>;

inline cplx poly_eval(const Poly& p, cplx x) {
  cplx b = 0;
  for (size_t j = p.size(); j-- > 0;) b = b * x + p[j];
  return b;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, cplx(0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline Poly poly_add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), cplx(0));
  for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

inline Poly poly_scale(Poly a, cplx c) {
  for (auto& v : a) v *= c;
  return a;
}

inline void poly_trim(Poly& p, double tol) {
  double scale = 0;
  for (const auto& c : p) scale = std::max(scale, std::abs(c));
  while (p.size() > 1 && std::abs(p.back()) <= tol * scale) p.pop_back();
}

namespace detail {

// One Laguerre root starting from x. Fixed fractional jumps break limit
// cycles; no randomness so runs are reproducible.
inline cplx laguerre_one(const Poly& a, cplx x) {
  static const double frac[] = {0.0, 0.5, 0.25, 0.75, 0.13, 0.38, 0.62, 0.88, 1.0};
  const int m = static_cast<int>(a.size()) - 1;
  const int maxit = 80 * 9;
  for (int it = 1; it <= maxit; ++it) {
    cplx b = a[m];
    double err = std::abs(b);
    cplx d = 0, f = 0;
    const double abx = std::abs(x);
    for (int j = m - 1; j >= 0; --j) {
      f = x * f + d;
      d = x * d + b;
      b = x * b + a[j];
      err = std::abs(b) + abx * err;
    }
    err *= std::numeric_limits<double>::epsilon();
    if (std::abs(b) <= err) return x;
    const cplx g = d / b;
    const cplx g2 = g * g;
    const cplx h = g2 - 2.0 * (f / b);
    const cplx sq = std::sqrt(static_cast<double>(m - 1) * (static_cast<double>(m) * h - g2));
    cplx gp = g + sq, gm = g - sq;
    const double abp = std::abs(gp), abm = std::abs(gm);
    if (abp < abm) gp = gm;
    const cplx dx = std::max(abp, abm) > 0.0
                        ? static_cast<double>(m) / gp
                        : std::polar(1.0 + abx, static_cast<double>(it));
    const cplx x1 = x - dx;
    if (x == x1) return x;
    if (it % 10 != 0)
      x = x1;
    else
      x = x - frac[(it / 10) % 9] * dx;
  }
  throw NumericalError("laguerre: iteration limit hit without converging");
}

}  // namespace detail

// All roots: Laguerre with deflation, then each root re-polished against the
// undeflated polynomial.
inline std::vector<cplx> poly_roots(Poly p) {
  poly_trim(p, 1e-14);
  const int deg = static_cast<int>(p.size()) - 1;
  if (deg < 1) return {};
  std::vector<cplx> roots;
  Poly work = p;
  for (int j = deg; j >= 1; --j) {
    cplx x = detail::laguerre_one(work, cplx(0, 0));
    // deflate: synthetic division by (x - root)
    cplx rem = work[j];
    for (int k = j - 1; k >= 0; --k) {
      cplx save = work[k];
      work[k] = rem;
      rem = save + rem * x;
    }
    work.pop_back();
    roots.push_back(x);
  }
  for (auto& r : roots) r = detail::laguerre_one(p, r);
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return roots;
}

}  // namespace lq
