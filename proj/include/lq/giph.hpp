#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "lq/common.hpp"
#include "lq/dist.hpp"
#include "lq/poly.hpp"

namespace lq {

struct GiphOptions {
  double series_tol = 1e-12;     // certified tail target for the mass series
  int series_max_terms = 500;    // hard cap per series
  double residual_tol = 1e-7;    // held-out identity residual
  double cond_limit = 1e12;
  double root_cert_scale = 1e-9;  // |D(xi)| <= scale * (mu+|xi|)^N
  double near_pair_scale = 1e-6;  // pairwise root distance treated as confluent
  double colloc_margin = 0.5;     // fraction of the series radius the top
                                  // collocation point may use
};

// The characteristic function D(s) = (mu+s)^N - p a(-s) sum_n kappa_n mu^n
// (mu+s)^{N-n}, whose N left-half-plane zeros are the density exponents.
class CharacteristicProblem {
 public:
  explicit CharacteristicProblem(const ModelParams& m)
      : arrival_(m.arrival), p_(m.p) {
    const auto* me = std::get_if<MixedErlang>(&m.service);
    if (!me)
      throw InputError(
          "transform engine needs a mixed Erlang service law; use the md or "
          "fixed point engine for deterministic service");
    if (!(p_ > 0.0))
      throw InputError(
          "transform engine needs p > 0; use the fixed point engine or the "
          "simulator");
    mu_ = me->mu();
    kappa_ = me->kappa();
    if (p_ == 1.0 && !(me->mean() < arrival_.mean())) {
      std::ostringstream os;
      os << "p = 1 with rho = " << me->mean() / arrival_.mean()
         << " >= 1: no stationary waiting time";
      throw UnstableP1(os.str());
    }
    if (!(arrival_.lst(cplx(mu_)).real() > 0))
      throw InputError("arrival transform vanishes at the service rate");
  }

  int order() const { return static_cast<int>(kappa_.size()); }
  double mu() const { return mu_; }
  double p() const { return p_; }
  const std::vector<double>& kappa() const { return kappa_; }
  const Interarrival& arrival() const { return arrival_; }

  // sum_n kappa_n mu^n (mu+s)^{N-n}
  cplx gpoly(cplx s) const {
    const int N = order();
    std::vector<cplx> pw(N + 1);
    pw[0] = 1.0;
    for (int j = 1; j <= N; ++j) pw[j] = pw[j - 1] * (mu_ + s);
    cplx g = 0;
    double mup = 1.0;
    for (int n = 1; n <= N; ++n) {
      mup *= mu_;
      g += kappa_[n - 1] * mup * pw[N - n];
    }
    return g;
  }

  cplx charfun(cplx s) const {
    const int N = order();
    cplx top = 1.0;
    for (int j = 0; j < N; ++j) top *= mu_ + s;
    return top - p_ * arrival_.lst(-s) * gpoly(s);
  }

  cplx charfun_prime(cplx s) const {
    const int N = order();
    cplx pw = 1.0;
    for (int j = 0; j < N - 1; ++j) pw *= mu_ + s;
    cplx gp = 0;
    double mup = 1.0;
    for (int n = 1; n <= N; ++n) {
      mup *= mu_;
      cplx q = 1.0;
      for (int j = 0; j < N - n - 1; ++j) q *= mu_ + s;
      if (N - n >= 1) gp += kappa_[n - 1] * mup * static_cast<double>(N - n) * q;
    }
    return static_cast<double>(N) * pw + p_ * arrival_.lst_prime(-s) * gpoly(s) -
           p_ * arrival_.lst(-s) * gp;
  }

  // beta(s) as a function of w = (mu+s)/mu
  cplx beta_of_w(cplx w) const {
    const cplx iw = 1.0 / w;
    cplx v = 0, f = 1.0;
    for (double k : kappa_) {
      f *= iw;
      v += k * f;
    }
    return v;
  }

 private:
  Interarrival arrival_;
  double p_;
  double mu_ = 1.0;
  std::vector<double> kappa_;
};

namespace detail {

// Phase increment of f along [a,b], refined until each step turns < 0.8 rad.
template <class F>
double arg_sweep(const F& f, cplx a, cplx b, cplx fa, cplx fb, int depth) {
  const double d = std::arg(fb / fa);
  if (std::abs(d) <= 0.8) return d;
  if (depth <= 0)
    throw RootCountMismatch(
        "zero count contour could not be refined to a stable winding number");
  const cplx m = 0.5 * (a + b);
  const cplx fm = f(m);
  if (!(std::abs(fm) > 0))
    throw RootCountMismatch("characteristic function vanished on the counting contour");
  return arg_sweep(f, a, m, fa, fm, depth - 1) +
         arg_sweep(f, m, b, fm, fb, depth - 1);
}

// Argument-principle zero count over the rectangle [re0,re1] x [im0,im1].
template <class F>
int winding_zero_count(const F& f, double re0, double re1, double im0, double im1) {
  const cplx corners[5] = {{re1, im0}, {re1, im1}, {re0, im1}, {re0, im0}, {re1, im0}};
  double total = 0;
  for (int e = 0; e < 4; ++e) {
    const int steps = 64;
    cplx a = corners[e];
    cplx fa = f(a);
    for (int k = 1; k <= steps; ++k) {
      const double t = static_cast<double>(k) / steps;
      const cplx b = corners[e] + t * (corners[e + 1] - corners[e]);
      const cplx fb = f(b);
      if (!(std::abs(fb) > 0))
        throw RootCountMismatch("characteristic function vanished on the counting contour");
      total += arg_sweep(f, a, b, fa, fb, 48);
      a = b;
      fa = fb;
    }
  }
  const double turns = total / (2.0 * pi);
  const int count = static_cast<int>(std::lround(turns));
  if (std::abs(turns - count) > 0.1)
    throw RootCountMismatch("winding number did not close to an integer");
  return count;
}

// Clear the rational a(-s) = num/den to a single polynomial with the same
// left-half-plane zeros as D: (mu+s)^N den(s) - p num(s) G(s).
inline Poly cleared_char_poly(const CharacteristicProblem& pb) {
  Poly num, den;
  pb.arrival().rational_parts(num, den);
  const int N = pb.order();
  const Poly lin = {cplx(pb.mu()), cplx(1.0)};
  std::vector<Poly> pw(N + 1);
  pw[0] = {cplx(1.0)};
  for (int j = 1; j <= N; ++j) pw[j] = poly_mul(pw[j - 1], lin);
  Poly g = {cplx(0.0)};
  double mup = 1.0;
  for (int n = 1; n <= N; ++n) {
    mup *= pb.mu();
    g = poly_add(g, poly_scale(pw[N - n], cplx(mup * pb.kappa()[n - 1])));
  }
  Poly lhs = poly_mul(pw[N], den);
  Poly rhs = poly_scale(poly_mul(num, g), cplx(-pb.p()));
  Poly d = poly_add(lhs, rhs);
  poly_trim(d, 0.0);
  return d;
}

// Newton candidates for the entire (deterministic-arrival) case. Every
// left-half-plane zero satisfies |mu+xi| <= mu since |a(-xi)| <= 1 there, so
// seeds cover that disk.
inline std::vector<cplx> newton_candidates(const CharacteristicProblem& pb) {
  const double mu = pb.mu();
  std::vector<cplx> seeds;
  seeds.emplace_back(-mu, 0.0);
  for (double r : {0.25, 0.55, 0.8, 0.95})
    for (int a = 0; a < 24; ++a) {
      const double th = 2.0 * pi * (a + 0.5) / 24.0;
      seeds.emplace_back(-mu + r * mu * std::cos(th), r * mu * std::sin(th));
    }
  for (int j = 1; j < 16; ++j) seeds.emplace_back(-2.0 * mu * j / 16.0, 0.0);
  std::vector<cplx> out;
  for (cplx s : seeds) {
    bool ok = false;
    for (int it = 0; it < 80; ++it) {
      const cplx fp = pb.charfun_prime(s);
      if (!(std::abs(fp) > 0)) break;
      const cplx step = pb.charfun(s) / fp;
      s -= step;
      if (std::abs(step) < 1e-13 * (mu + std::abs(s))) {
        ok = true;
        break;
      }
    }
    if (ok) out.push_back(s);
  }
  return out;
}

}  // namespace detail

// The N left-half-plane zeros of D, conjugate-closed, sorted by (Re, Im),
// each carrying a residual certificate.
inline std::vector<cplx> find_roots(const CharacteristicProblem& pb,
                                    const GiphOptions& opt = {}) {
  const int N = pb.order();
  const double mu = pb.mu();

  std::vector<cplx> cand;
  if (pb.arrival().is_rational())
    cand = poly_roots(detail::cleared_char_poly(pb));
  else
    cand = detail::newton_candidates(pb);

  // keep the strict left-half-plane zeros; at p=1 the zero at the origin is
  // structural and excluded
  std::vector<cplx> roots;
  for (cplx s : cand) {
    if (std::abs(s) <= 1e-8 * mu) continue;
    if (!(s.real() < 0)) continue;
    bool dup = false;
    for (cplx r : roots)
      if (std::abs(r - s) <= 1e-8 * (mu + std::abs(s))) dup = true;
    if (!dup) roots.push_back(s);
  }

  // polish on D itself and enforce exact conjugate pairing
  for (cplx& s : roots) {
    for (int it = 0; it < 12; ++it) {
      const cplx fp = pb.charfun_prime(s);
      if (!(std::abs(fp) > 0)) break;
      const cplx step = pb.charfun(s) / fp;
      if (std::abs(step) > 0.1 * (mu + std::abs(s))) break;
      s -= step;
      if (std::abs(step) < 1e-15 * (mu + std::abs(s))) break;
    }
  }
  for (cplx& s : roots)
    if (std::abs(s.imag()) <= 1e-9 * (mu + std::abs(s))) s = cplx(s.real(), 0.0);
  std::vector<bool> used(roots.size(), false);
  for (size_t i = 0; i < roots.size(); ++i) {
    if (used[i] || roots[i].imag() == 0.0) continue;
    bool paired = false;
    for (size_t j = 0; j < roots.size(); ++j) {
      if (j == i || used[j]) continue;
      if (std::abs(std::conj(roots[i]) - roots[j]) <=
          1e-7 * (mu + std::abs(roots[i]))) {
        const cplx s = 0.5 * (roots[i] + std::conj(roots[j]));
        roots[i] = s;
        roots[j] = std::conj(s);
        used[i] = used[j] = true;
        paired = true;
        break;
      }
    }
    if (!paired)
      throw RootCountMismatch("characteristic roots are not closed under conjugation");
  }
  std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });

  if (static_cast<int>(roots.size()) != N) {
    std::ostringstream os;
    os << "expected " << N << " left-half-plane characteristic roots, found "
       << roots.size();
    throw RootCountMismatch(os.str());
  }
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      if (std::abs(roots[i] - roots[j]) < opt.near_pair_scale * mu) {
        std::ostringstream os;
        os << "characteristic roots " << roots[i] << " and " << roots[j]
           << " are nearly confluent; use the fixed point engine";
        throw NearMultipleRoots(os.str());
      }
  for (cplx s : roots) {
    const double scale = std::pow(mu + std::abs(s), N);
    if (!(std::abs(pb.charfun(s)) <= opt.root_cert_scale * scale)) {
      std::ostringstream os;
      os << "root certificate failed at " << s << ": |D| = "
         << std::abs(pb.charfun(s)) << " exceeds " << opt.root_cert_scale * scale;
      throw RootCountMismatch(os.str());
    }
  }

  // argument-principle certification over a rectangle holding every
  // left-half-plane zero; the right edge stays off the p=1 zero at the origin
  const double R0 = 10.0 * (mu + 1.0 / pb.arrival().mean());
  const auto f = [&pb](cplx s) { return pb.charfun(s); };
  std::string err;
  for (int attempt = 0; attempt < 5; ++attempt) {
    const double R = R0 * (1.0 + 0.0137 * attempt);
    try {
      const int count = detail::winding_zero_count(f, -R, -1e-9, -R, R);
      if (count != N) {
        std::ostringstream os;
        os << "winding number counts " << count << " left-half-plane zeros, expected "
           << N;
        throw RootCountMismatch(os.str());
      }
      return roots;
    } catch (const RootCountMismatch& e) {
      err = e.what();
      if (err.find("counts") != std::string::npos) throw;  // a true count mismatch
    }
  }
  throw RootCountMismatch(err);
}

namespace detail {

// Certified truncation over the Poisson masses t_k. All tails are geometric
// once the nonincreasing ratio bound drops the growth below 1.
struct SeriesCtx {
  const Interarrival* arr;
  double mu;
  std::vector<double> t;
  double tol;
  int kmax;
};

inline SeriesCtx make_series_ctx(const CharacteristicProblem& pb,
                                 const GiphOptions& opt) {
  SeriesCtx c;
  c.arr = &pb.arrival();
  c.mu = pb.mu();
  c.tol = opt.series_tol;
  c.kmax = opt.series_max_terms;
  c.t = pb.arrival().poisson_mass_table(pb.mu(), c.kmax);
  return c;
}

// sum_{k>=k0} t_k
inline double sum_plain(const SeriesCtx& c, int k0) {
  KahanSum<double> acc;
  for (int k = k0; k <= c.kmax; ++k) {
    acc.add(c.t[k]);
    const double q = c.arr->poisson_mass_ratio_bound(c.mu, k);
    if (q < 1.0 && c.t[k] * q / (1.0 - q) < c.tol) return acc.value();
  }
  throw SeriesNotConverged("mass series tail failed to certify below the term cap");
}

// sum_{k>=k0} t_k w^{k-k0}
inline cplx sum_pow(const SeriesCtx& c, int k0, cplx w) {
  const double m = std::abs(w);
  KahanSumC acc;
  cplx wp = 1.0;
  double b = c.t[k0];  // t_k m^{k-k0}
  for (int k = k0; k <= c.kmax; ++k) {
    acc.add(c.t[k] * wp);
    const double q = c.arr->poisson_mass_ratio_bound(c.mu, k) * m;
    if (q < 1.0 && b * q / (1.0 - q) < c.tol) return acc.value();
    if (k < c.kmax) {
      b *= m * (c.t[k + 1] / std::max(c.t[k], 1e-300));
      wp *= w;
    }
  }
  throw SeriesNotConverged("power-weighted mass series failed to certify below the term cap");
}

// sum_{k>=n+1} t_k P_{k-n} with P_1 = 1, P_{r+1} = w P_r + z^r, i.e. the
// divided difference (w^r - z^r)/(w - z) written stably for w near z.
inline cplx sum_cross(const SeriesCtx& c, int n, cplx w, cplx z) {
  const double m = std::max(std::abs(w), std::abs(z));
  KahanSumC acc;
  cplx P = 1.0, zp = z;
  double b = c.t[n + 1];  // t_k m^{k-n-1}
  for (int k = n + 1; k <= c.kmax; ++k) {
    const int r = k - n;
    acc.add(c.t[k] * P);
    const double q = c.arr->poisson_mass_ratio_bound(c.mu, k) * m;
    if (q < 1.0) {
      // |P_r| <= r m^{r-1} gives tail <= b [r q/(1-q) + q/(1-q)^2]
      const double tail = b * (r * q / (1.0 - q) + q / ((1.0 - q) * (1.0 - q)));
      if (tail < c.tol) return acc.value();
    }
    if (k < c.kmax) {
      b *= m * (c.t[k + 1] / std::max(c.t[k], 1e-300));
      P = w * P + zp;
      zp *= z;
    }
  }
  throw SeriesNotConverged("cross-power mass series failed to certify below the term cap");
}

// Coefficient row of the transform identity at one imaginary point: entry 0
// multiplies c_0, entry j multiplies c_j, and the right-hand side is 1-p.
inline std::vector<cplx> identity_row(const CharacteristicProblem& pb,
                                      const std::vector<cplx>& roots,
                                      const SeriesCtx& sc, cplx s) {
  const int N = pb.order();
  const double mu = pb.mu();
  const double p = pb.p();
  const std::vector<double>& kap = pb.kappa();
  const cplx w = (mu + s) / mu;
  const cplx invw = mu / (mu + s);
  const cplx K = 1.0 - p * pb.arrival().lst(-s) * pb.beta_of_w(w);

  double pba = 0;
  for (int n = 1; n <= N; ++n) pba += kap[n - 1] * sum_plain(sc, n);

  cplx m0 = 0;
  for (int n = 1; n <= N; ++n) m0 += kap[n - 1] * sum_pow(sc, n, w);

  // phi-block: coefficient of c_0 collapses to the masses themselves
  cplx phi0 = 0;
  for (int n = 1; n <= N; ++n) {
    cplx iwp = 1.0;
    for (int i = n - 1; i >= 0; --i) {
      iwp *= invw;  // invw^{n-i}
      phi0 += kap[n - 1] * sc.t[i] * (1.0 - iwp);
    }
  }

  std::vector<cplx> row(N + 1);
  row[0] = K - p * pba + p * m0 + (1.0 - p) * phi0;

  for (int j = 0; j < N; ++j) {
    const cplx xi = roots[j];
    const cplx z = (mu + xi) / mu;
    cplx sj = 0, mj = 0;
    for (int n = 1; n <= N; ++n) {
      sj += kap[n - 1] * sum_cross(sc, n, cplx(1.0), z);
      mj += kap[n - 1] * sum_cross(sc, n, w, z);
    }
    sj /= mu;
    mj /= mu;
    // phi-block for c_j: V_i = sum_{k<=i} u^{k+1} t_{i-k}, u = mu/(mu-xi)
    const cplx u = mu / (mu - xi);
    cplx phij = 0;
    std::vector<cplx> V(N);
    for (int i = 0; i < N; ++i) V[i] = u * (sc.t[i] + (i ? V[i - 1] : cplx(0)));
    for (int n = 1; n <= N; ++n) {
      cplx iwp = 1.0;
      for (int i = n - 1; i >= 0; --i) {
        iwp *= invw;
        phij += kap[n - 1] * (1.0 - iwp) * V[i];
      }
    }
    phij /= mu;
    row[j + 1] = K / (s - xi) - p * sj + p * mj + (1.0 - p) * phij;
  }
  return row;
}

struct DenseSolution {
  std::vector<cplx> x;
  double cond;
};

// Gauss-Jordan with partial pivoting; small systems, so the inverse is
// carried along for the condition estimate.
inline DenseSolution solve_dense(std::vector<std::vector<cplx>> a,
                                 const std::vector<cplx>& b) {
  const int n = static_cast<int>(a.size());
  double anorm = 0;
  for (int i = 0; i < n; ++i) {
    double r = 0;
    for (int j = 0; j < n; ++j) r += std::abs(a[i][j]);
    anorm = std::max(anorm, r);
  }
  for (int i = 0; i < n; ++i) {
    a[i].resize(2 * n + 1, cplx(0));
    a[i][n] = b[i];
    a[i][n + 1 + i] = 1.0;
  }
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (!(std::abs(a[piv][col]) > 0))
      throw SingularSystem("collocation matrix is numerically singular");
    std::swap(a[col], a[piv]);
    const cplx d = a[col][col];
    for (int j = col; j <= 2 * n; ++j) a[col][j] /= d;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const cplx f = a[r][col];
      if (f == cplx(0)) continue;
      for (int j = col; j <= 2 * n; ++j) a[r][j] -= f * a[col][j];
    }
  }
  double invnorm = 0;
  for (int i = 0; i < n; ++i) {
    double r = 0;
    for (int j = 0; j < n; ++j) r += std::abs(a[i][n + 1 + j]);
    invnorm = std::max(invnorm, r);
  }
  DenseSolution out;
  out.x.resize(n);
  for (int i = 0; i < n; ++i) out.x[i] = a[i][n];
  out.cond = anorm * invnorm;
  return out;
}

}  // namespace detail

struct GiphSystem {
  std::vector<std::vector<cplx>> matrix;
  std::vector<cplx> rhs;
  std::vector<cplx> points;  // collocation points for rows 1..N
  double tau = 0;
};

// Row 0 is the normalization c_0 - sum_j c_j/xi_j = 1; rows m = 1..N collocate
// the transform identity at s = i tau m.
inline GiphSystem assemble_system(const CharacteristicProblem& pb,
                                  const std::vector<cplx>& roots, double tau,
                                  const GiphOptions& opt = {}) {
  const int N = pb.order();
  GiphSystem sys;
  sys.tau = tau;
  sys.matrix.assign(N + 1, std::vector<cplx>(N + 1, cplx(0)));
  sys.rhs.assign(N + 1, cplx(0));
  sys.matrix[0][0] = 1.0;
  for (int j = 0; j < N; ++j) sys.matrix[0][j + 1] = -1.0 / roots[j];
  sys.rhs[0] = 1.0;
  const detail::SeriesCtx sc = detail::make_series_ctx(pb, opt);
  for (int m = 1; m <= N; ++m) {
    const cplx s(0.0, tau * m);
    sys.points.push_back(s);
    sys.matrix[m] = detail::identity_row(pb, roots, sc, s);
    sys.rhs[m] = 1.0 - pb.p();
  }
  return sys;
}

namespace detail {

// Relative identity residual at 2N points interleaving the collocation grid.
inline double heldout_residual(const CharacteristicProblem& pb,
                               const std::vector<cplx>& roots,
                               const std::vector<cplx>& c, double tau,
                               const GiphOptions& opt) {
  const int N = pb.order();
  const SeriesCtx sc = make_series_ctx(pb, opt);
  double worst = 0;
  for (int l = 1; l <= 2 * N; ++l) {
    const cplx s(0.0, tau * N * l / (2.0 * N + 1.0));
    const auto row = identity_row(pb, roots, sc, s);
    cplx diff = -cplx(1.0 - pb.p());
    for (int k = 0; k <= N; ++k) diff += row[k] * c[k];
    cplx omega = c[0];
    for (int j = 0; j < N; ++j) omega += c[j + 1] / (s - roots[j]);
    const cplx w = (pb.mu() + s) / pb.mu();
    const cplx K = 1.0 - pb.p() * pb.arrival().lst(-s) * pb.beta_of_w(w);
    worst = std::max(worst, std::abs(diff) / (std::abs(omega * K) + 1.0));
  }
  return worst;
}

// Largest tau keeping the top collocation point safely inside the mass-series
// convergence radius (mu+edge)/mu.
inline double tau_cap(const CharacteristicProblem& pb, const GiphOptions& opt) {
  const double edge = pb.arrival().convergence_edge();
  if (!std::isfinite(edge)) return std::numeric_limits<double>::infinity();
  const double mu = pb.mu();
  const double wmax = 1.0 + opt.colloc_margin * (edge / mu);
  return mu * std::sqrt(wmax * wmax - 1.0) / pb.order();
}

}  // namespace detail

// Atom plus mixed-exponential density: P[W=0] = c_0, f_W(x) = sum c_i e^{xi_i x}.
class GiphSolution {
 public:
  GiphSolution(ModelParams params, double c0, std::vector<cplx> roots,
               std::vector<cplx> coeffs, double residual, double tau, double cond)
      : params_(std::move(params)),
        c0_(c0),
        roots_(std::move(roots)),
        coeffs_(std::move(coeffs)),
        residual_(residual),
        tau_(tau),
        cond_(cond) {}

  const ModelParams& params() const { return params_; }
  double atom() const { return c0_; }
  const std::vector<cplx>& roots() const { return roots_; }
  const std::vector<cplx>& coeffs() const { return coeffs_; }
  double residual() const { return residual_; }
  double tau() const { return tau_; }
  double cond() const { return cond_; }

  double density(double x) const {
    if (x < 0) return 0.0;
    KahanSumC acc;
    for (size_t i = 0; i < roots_.size(); ++i)
      acc.add(coeffs_[i] * std::exp(roots_[i] * x));
    return acc.value().real();
  }

  double cdf(double x) const {
    if (x < 0) return 0.0;
    KahanSumC acc;
    acc.add(cplx(1.0));
    for (size_t i = 0; i < roots_.size(); ++i)
      acc.add(coeffs_[i] / roots_[i] * std::exp(roots_[i] * x));
    const double v = acc.value().real();
    return v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
  }

  double mean() const {
    cplx m = 0;
    for (size_t i = 0; i < roots_.size(); ++i)
      m += coeffs_[i] / (roots_[i] * roots_[i]);
    return m.real();
  }

  // x beyond which 1 - cdf(x) is below ~e^{-40}
  double tail_cut() const {
    double slow = std::numeric_limits<double>::infinity();
    for (cplx r : roots_) slow = std::min(slow, -r.real());
    return 40.0 / slow;
  }

 private:
  ModelParams params_;
  double c0_;
  std::vector<cplx> roots_;
  std::vector<cplx> coeffs_;
  double residual_;
  double tau_;
  double cond_;
};

namespace detail {

// Pair conjugate roots, enforce realness constraints, run the grid
// invariants, and build the value object.
inline GiphSolution finalize_solution(const ModelParams& m,
                                      const CharacteristicProblem& pb,
                                      std::vector<cplx> roots,
                                      std::vector<cplx> coef, double residual,
                                      double tau, double cond) {
  const int N = pb.order();
  if (std::abs(coef[0].imag()) > 1e-10)
    throw IllConditioned("computed atom has a nonreal part");
  double c0 = coef[0].real();

  std::vector<cplx> cs(coef.begin() + 1, coef.end());
  std::vector<int> idx(N);
  for (int i = 0; i < N; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&roots](int a, int b) {
    if (roots[a].real() != roots[b].real()) return roots[a].real() < roots[b].real();
    return roots[a].imag() < roots[b].imag();
  });
  std::vector<cplx> r2(N), c2(N);
  for (int i = 0; i < N; ++i) {
    r2[i] = roots[idx[i]];
    c2[i] = cs[idx[i]];
  }

  std::vector<bool> used(N, false);
  for (int i = 0; i < N; ++i) {
    if (used[i]) continue;
    if (r2[i].imag() == 0.0) {
      if (std::abs(c2[i].imag()) > 1e-9 * (1.0 + std::abs(c2[i])))
        throw IllConditioned("coefficient of a real exponent has a nonreal part");
      c2[i] = cplx(c2[i].real(), 0.0);
      continue;
    }
    int partner = -1;
    for (int j = 0; j < N; ++j)
      if (j != i && !used[j] && std::abs(std::conj(r2[i]) - r2[j]) <
                                    1e-9 * (pb.mu() + std::abs(r2[i])))
        partner = j;
    if (partner < 0)
      throw IllConditioned("solution exponents are not closed under conjugation");
    if (std::abs(std::conj(c2[i]) - c2[partner]) > 1e-9 * (1.0 + std::abs(c2[i])))
      throw IllConditioned("conjugate exponents carry non-conjugate coefficients");
    const cplx cc = 0.5 * (c2[i] + std::conj(c2[partner]));
    c2[i] = cc;
    c2[partner] = std::conj(cc);
    used[i] = used[partner] = true;
  }

  double norm = c0;
  {
    cplx t = 0;
    for (int i = 0; i < N; ++i) t += c2[i] / r2[i];
    norm -= t.real();
  }
  if (std::abs(norm - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "normalization c0 - sum c_i/xi_i = " << norm << " deviates from 1";
    throw IllConditioned(os.str());
  }
  if (!(c0 > 0.0) || c0 > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "atom c0 = " << c0 << " is outside (0, 1]";
    throw IllConditioned(os.str());
  }
  c0 = std::min(c0, 1.0);

  GiphSolution sol(m, c0, std::move(r2), std::move(c2), residual, tau, cond);

  // grid invariants: realness, nonnegative density, monotone cdf
  const double xt = sol.tail_cut();
  double prev = -1.0;
  for (int k = 0; k <= 10000; ++k) {
    const double x = xt * k / 10000.0;
    cplx d = 0, f = 0;
    for (int i = 0; i < N; ++i) {
      const cplx e = std::exp(sol.roots()[i] * x);
      d += sol.coeffs()[i] * e;
      f += sol.coeffs()[i] / sol.roots()[i] * e;
    }
    if (std::abs(d.imag()) > 1e-10 * std::max(1.0, std::abs(d.real())))
      throw IllConditioned("density has a nonreal part on the evaluation grid");
    if (d.real() < -1e-10)
      throw IllConditioned("density is negative on the evaluation grid");
    const double F = 1.0 + f.real();
    if (F < prev - 1e-12)
      throw IllConditioned("cdf is not monotone on the evaluation grid");
    prev = F;
  }
  if (std::abs(sol.cdf(0.0) - sol.atom()) > 1e-9)
    throw IllConditioned("cdf at zero does not match the atom");
  return sol;
}

}  // namespace detail

// Full pipeline: roots, collocation ladder, linear solve, residual gate,
// invariant checks.
inline GiphSolution solve_giph(const ModelParams& m, const GiphOptions& opt = {}) {
  CharacteristicProblem pb(m);
  const auto stab = check_stability(m);
  if (stab.status == Stability::Unstable) throw UnstableP1(stab.note);

  const auto roots = find_roots(pb, opt);

  const double base = 0.5 * pb.mu();
  const double cap = detail::tau_cap(pb, opt);
  std::vector<double> taus;
  for (double f : {1.0, 0.5, 2.0, 4.0, 0.25, 0.125}) {
    const double t = std::min(f * base, cap);
    bool dup = false;
    for (double u : taus)
      if (std::abs(u - t) < 1e-12 * base) dup = true;
    if (!dup) taus.push_back(t);
  }

  double best_cond = std::numeric_limits<double>::infinity();
  double best_res = std::numeric_limits<double>::infinity();
  std::string series_err;
  for (double tau : taus) {
    try {
      const auto sys = assemble_system(pb, roots, tau, opt);
      const auto lin = detail::solve_dense(sys.matrix, sys.rhs);
      best_cond = std::min(best_cond, lin.cond);
      if (lin.cond > opt.cond_limit) continue;
      const double res = detail::heldout_residual(pb, roots, lin.x, tau, opt);
      best_res = std::min(best_res, res);
      if (res > opt.residual_tol) continue;
      return detail::finalize_solution(m, pb, roots, lin.x, res, tau, lin.cond);
    } catch (const SeriesNotConverged& e) {
      series_err = e.what();
    }
  }
  if (std::isfinite(best_res)) {
    std::ostringstream os;
    os << "collocation residual stayed at " << best_res
       << " across the tau ladder (tolerance " << opt.residual_tol << ")";
    throw SingularSystem(os.str());
  }
  if (std::isfinite(best_cond)) {
    std::ostringstream os;
    os << "collocation system condition stayed at " << best_cond
       << " across the tau ladder (limit " << opt.cond_limit << ")";
    throw SingularSystem(os.str());
  }
  throw SeriesNotConverged(series_err.empty()
                               ? "mass series failed to certify at every tau"
                               : series_err);
}

// p = 1 closed form: omega(s) = ((mu+s)/mu)^N prod_i xi_i/(xi_i - s), expanded
// by residues at the simple poles.
inline GiphSolution solve_giph_p1(const ModelParams& m, const GiphOptions& opt = {}) {
  if (m.p != 1.0)
    throw InputError("closed form applies only to p = 1");
  CharacteristicProblem pb(m);
  const int N = pb.order();
  const double mu = pb.mu();
  const auto roots = find_roots(pb, opt);

  cplx C = 1.0;
  for (cplx r : roots) C *= -r / mu;
  std::vector<cplx> coef(N + 1);
  coef[0] = C;
  // residues: c_i = C (mu+xi_i)^N / prod_{j != i} (xi_i - xi_j)
  for (int i = 0; i < N; ++i) {
    cplx v = C;
    for (int k = 0; k < N; ++k) v *= mu + roots[i];
    for (int j = 0; j < N; ++j)
      if (j != i) v /= roots[i] - roots[j];
    coef[i + 1] = v;
  }

  const double tau = std::min(0.5 * mu, detail::tau_cap(pb, opt));
  const double res = detail::heldout_residual(pb, roots, coef, tau, opt);
  return detail::finalize_solution(m, pb, roots, coef, res, tau, 0.0);
}

}  // namespace lq
