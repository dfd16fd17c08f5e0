#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "lq/common.hpp"
#include "lq/dist.hpp"
#include "lq/fft.hpp"

namespace lq {

// Uniform grid on [0, x_max] with n segments; values[k] = F(k h).
struct GridFunction {
  double x_max = 0;
  int n = 0;
  std::vector<double> values;

  double h() const { return x_max / n; }
  double atom() const { return values.front(); }

  // CDF-style evaluation: 0 left of the origin, flat right of x_max.
  double value_at(double x) const {
    if (x < 0) return 0.0;
    if (x >= x_max) return values.back();
    const double t = x / h();
    const int k = static_cast<int>(t);
    const double frac = t - k;
    return values[k] * (1.0 - frac) + values[k + 1] * frac;
  }

  double sup_diff(const GridFunction& o) const {
    double d = 0;
    for (int k = 0; k <= n; ++k) d = std::max(d, std::abs(values[k] - o.values[k]));
    return d;
  }
};

// Law of X = B - A, with closed-form CDF for every supported family pair.
// Building block: E[A^r e^{-mu A}] and E[B^s e^{-lambda B}] come from the
// alternating transform derivatives both laws expose.
class XDistribution {
 public:
  explicit XDistribution(const ModelParams& m) : p_(m.p), arrival_(m.arrival) {
    if (const auto* det = std::get_if<DetService>(&m.service)) {
      det_b_ = det->b;
      service_is_det_ = true;
      if (arrival_.family() == ArrivalFamily::Deterministic)
        throw InputError(
            "deterministic interarrival with deterministic service gives "
            "an atomic increment law; the contraction engine needs a "
            "continuous one (use the simulator)");
    } else {
      me_ = std::get<MixedErlang>(m.service);
      service_is_det_ = false;
      if (arrival_.family() != ArrivalFamily::Deterministic) {
        // right-side polynomial: F_X(y>=0) = 1 - e^{-mu y} sum_d c_d y^d
        const double mu = me_->mu();
        const auto& kappa = me_->kappa();
        const int N = static_cast<int>(kappa.size());
        std::vector<double> alt(N);
        for (int r = 0; r < N; ++r) alt[r] = arrival_.alt_lst_deriv(r, mu);
        right_coef_.assign(N, 0.0);
        for (int d = 0; d < N; ++d) {
          double c = 0;
          for (int n = 1; n <= N; ++n) {
            for (int j = d; j < n; ++j) {
              // (mu^j / j!) C(j, d) alpha-moment_(j-d)
              double w = std::pow(mu, j);
              for (int t = 2; t <= j; ++t) w /= t;
              double binom = 1;
              for (int t = 0; t < d; ++t) binom = binom * (j - t) / (t + 1);
              c += kappa[n - 1] * w * binom * alt[j - d];
            }
          }
          right_coef_[d] = c;
        }
      }
    }
    compute_support();
    if (!(cdf(0.0) > 0.0))
      throw InputError("increment law has no mass below zero; the recursion "
                       "never regenerates");
  }

  double cdf(double y) const {
    double v = cdf_raw(y);
    return v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
  }

  double p() const { return p_; }
  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  bool service_deterministic() const { return service_is_det_; }
  double service_breakpoint() const { return det_b_; }

 private:
  double cdf_raw(double y) const {
    if (service_is_det_) {
      // X = b - A
      if (y >= det_b_) return 1.0;
      return arrival_.survival(det_b_ - y);
    }
    if (arrival_.family() == ArrivalFamily::Deterministic) {
      // X = B - a
      return me_->cdf(y + arrival_.det_value());
    }
    if (y >= 0) {
      double poly = 0;
      for (size_t d = right_coef_.size(); d-- > 0;) poly = poly * y + right_coef_[d];
      return 1.0 - std::exp(-me_->mu() * y) * poly;
    }
    // y < 0: P[A >= B - y] via the arrival survival against the service law
    switch (arrival_.family()) {
      case ArrivalFamily::Exponential: {
        const double lam = arrival_.rate();
        return std::exp(lam * y) * me_->lst(lam).real();
      }
      case ArrivalFamily::HyperExp: {
        double v = 0;
        for (size_t i = 0; i < arrival_.rates().size(); ++i) {
          const double lam = arrival_.rates()[i];
          v += arrival_.weights()[i] * std::exp(lam * y) * me_->lst(lam).real();
        }
        return v;
      }
      case ArrivalFamily::Erlang: {
        const double lam = arrival_.rate();
        const int k0 = arrival_.shape();
        std::vector<double> bmom(k0);
        for (int s = 0; s < k0; ++s) bmom[s] = me_->alt_lst_deriv(s, lam);
        double v = 0;
        for (int r = 0; r < k0; ++r) {
          double lr = 1;  // lambda^r / r!
          for (int t = 1; t <= r; ++t) lr *= lam / t;
          double inner = 0;
          for (int s = 0; s <= r; ++s) {
            double binom = 1;
            for (int t = 0; t < s; ++t) binom = binom * (r - t) / (t + 1);
            inner += binom * std::pow(-y, r - s) * bmom[s];
          }
          v += lr * inner;
        }
        return std::exp(lam * y) * v;
      }
      default: return 0;
    }
  }

  void compute_support() {
    // Left end: lump everything with F_X below ~1e-14.
    if (!service_is_det_ && arrival_.family() == ArrivalFamily::Deterministic) {
      y_min_ = -arrival_.det_value();
    } else {
      const double edge = arrival_.convergence_edge();
      double y = -40.0 / edge;
      int guard = 0;
      while (cdf_raw(y) > 1e-14 && guard++ < 200) y -= 4.0 / edge;
      y_min_ = y;
    }
    // Right end.
    if (service_is_det_) {
      y_max_ = det_b_;
    } else {
      const double mu = me_->mu();
      double y = 40.0 / mu;
      int guard = 0;
      while (1.0 - cdf_raw(y) > 1e-14 && guard++ < 200) y += 4.0 / mu;
      y_max_ = y;
    }
  }

  double p_;
  Interarrival arrival_;
  std::optional<MixedErlang> me_;
  bool service_is_det_ = false;
  double det_b_ = 0;
  std::vector<double> right_coef_;
  double y_min_ = 0, y_max_ = 0;
};

namespace detail {

struct TGrid {
  int j0 = 0;            // y-node j sits at (j0 + j) h
  int m = 0;             // number of y segments
  std::vector<double> seg;   // Stieltjes mass per segment
  double tail_left = 0;  // F_X mass at or below the first y node
  double tail_right = 0; // mass above the last y node
};

inline TGrid make_tgrid(const XDistribution& X, double h) {
  TGrid g;
  g.j0 = static_cast<int>(std::floor(X.y_min() / h + 1e-12));
  const int jtop = static_cast<int>(std::ceil(X.y_max() / h - 1e-12));
  g.m = jtop - g.j0;
  g.seg.resize(g.m);
  double prev = X.cdf(g.j0 * h);
  g.tail_left = prev;
  for (int j = 0; j < g.m; ++j) {
    const double next = X.cdf((g.j0 + j + 1) * h);
    g.seg[j] = next - prev;
    prev = next;
  }
  g.tail_right = 1.0 - prev;
  return g;
}

// F extended flat beyond x_max; index < 0 means F = 0 (handled by callers).
inline double fext(const std::vector<double>& v, int i) {
  if (i < 0) return 0.0;
  const int n = static_cast<int>(v.size()) - 1;
  return v[i > n ? n : i];
}

inline std::vector<double> apply_T_grid_direct(const std::vector<double>& F, const TGrid& g,
                                               double p) {
  const int n = static_cast<int>(F.size()) - 1;
  std::vector<double> out(F.size());
  for (int k = 0; k <= n; ++k) {
    KahanSum<double> i1, i2;
    for (int j = 0; j < g.m; ++j) {
      const int a = k - g.j0 - j;
      i1.add(g.seg[j] * 0.5 * (fext(F, a) + fext(F, a - 1)));
      const int bidx = g.j0 + j - k;
      i2.add(g.seg[j] * 0.5 * (fext(F, bidx) + fext(F, bidx + 1)));
    }
    // drop the two straddling half-segments the zero extension let in
    const int js1 = k - g.j0;
    if (js1 >= 0 && js1 < g.m) i1.add(-0.5 * g.seg[js1] * F[0]);
    const int js2 = k - g.j0 - 1;
    if (js2 >= 0 && js2 < g.m) i2.add(-0.5 * g.seg[js2] * F[0]);
    i1.add(g.tail_left * fext(F, k - g.j0));
    i2.add(g.tail_right * fext(F, g.j0 + g.m - k));
    double v = p * i1.value() + (1.0 - p) * (1.0 - i2.value());
    out[k] = v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
  }
  return out;
}

// Same operator via two FFT correlations against the nodal kernel
// kappa_t = (seg_t + seg_{t-1})/2.
struct TFft {
  TGrid g;
  int n = 0;
  size_t L = 0;
  std::vector<cplx> kernel_hat;

  TFft(const TGrid& grid, int n_) : g(grid), n(n_) {
    // the correlation reads negative lags, so leave a zero pad the full
    // width of F to keep the circular wrap out of the data
    const size_t need = 2 * static_cast<size_t>(n + g.m + 1) + 2;
    L = next_pow2(need);
    std::vector<cplx> ker(L, cplx(0));
    for (int t = 0; t <= g.m; ++t) {
      const double a = (t < g.m) ? g.seg[t] : 0.0;
      const double b = (t > 0) ? g.seg[t - 1] : 0.0;
      ker[t] = 0.5 * (a + b);
    }
    fft_inplace(ker, false);
    kernel_hat = std::move(ker);
  }

  std::vector<double> apply(const std::vector<double>& F, double p) const {
    std::vector<cplx> fx(L, cplx(0));
    for (int i = 0; i <= n + g.m; ++i) fx[i] = fext(F, i);
    fft_inplace(fx, false);
    std::vector<cplx> conv(L), corr(L);
    for (size_t i = 0; i < L; ++i) {
      conv[i] = kernel_hat[i] * fx[i];
      corr[i] = kernel_hat[i] * std::conj(fx[i]);
    }
    fft_inplace(conv, true);
    fft_inplace(corr, true);
    std::vector<double> out(n + 1);
    for (int k = 0; k <= n; ++k) {
      const size_t r = static_cast<size_t>(k - g.j0);  // j0 <= 0 so r >= 0
      double i1 = conv[r].real();
      // corr[q] = sum_t ker[t] Fext[t - q]
      double i2 = corr[r].real();
      const int js1 = k - g.j0;
      if (js1 >= 0 && js1 < g.m) i1 -= 0.5 * g.seg[js1] * F[0];
      const int js2 = k - g.j0 - 1;
      if (js2 >= 0 && js2 < g.m) i2 -= 0.5 * g.seg[js2] * F[0];
      i1 += g.tail_left * fext(F, k - g.j0);
      i2 += g.tail_right * fext(F, g.j0 + g.m - k);
      double v = p * i1 + (1.0 - p) * (1.0 - i2);
      out[k] = v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
    }
    return out;
  }
};

}  // namespace detail

// One application of the contraction operator
//   (T F)(x) = p P[F-arg] + (1-p)(1 - ...), discretized by trapezoidal
// Stieltjes weights on grids sharing the lattice of F.
inline GridFunction apply_T(const GridFunction& F, const XDistribution& X, double p) {
  const auto g = detail::make_tgrid(X, F.h());
  GridFunction out{F.x_max, F.n, {}};
  const double work = static_cast<double>(F.n + 1) * (g.m + 1);
  if (work <= 4e6) {
    out.values = detail::apply_T_grid_direct(F.values, g, p);
  } else {
    detail::TFft op(g, F.n);
    out.values = op.apply(F.values, p);
  }
  return out;
}

struct FixedPointResult {
  GridFunction grid;
  int iterations = 0;
  double contraction = 0;  // modulus used for the stopping rule
  double last_step = 0;
  double residual = 0;  // sup |T F* - F*| via the direct operator
  int domain_doublings = 0;
};

struct FixedPointOptions {
  int n = 2000;
  double x_max = 0;  // 0: start from 20 E[B], double while the tail is heavy
  double tol = 1e-6;
  long max_iterations = 100000;
};

inline FixedPointResult solve_fixed_point_full(const ModelParams& m,
                                               const FixedPointOptions& opt = {}) {
  if (m.p >= 1.0)
    throw NoContraction("p = 1 sign never flips; the operator is not a "
                        "contraction (use the transform or band solvers)");
  const auto stab = check_stability(m);
  if (!stab.passed()) throw InputError("model rejected: " + stab.note);
  if (opt.n < 8) throw InputError("grid resolution too small");
  if (!(opt.tol > 0)) throw InputError("tolerance must be positive");

  XDistribution X(m);
  const double q = m.p > 0 ? std::max(m.p, 1.0 - m.p) : 1.0 - X.cdf(0.0);
  if (!(q < 1.0))
    throw NoContraction("contraction modulus is not below one");

  double x_max = opt.x_max > 0 ? opt.x_max : 20.0 * m.service_mean();
  int n = opt.n;
  const double stop = opt.tol * (1.0 - q) / q;

  FixedPointResult res;
  for (int doubling = 0;; ++doubling) {
    double h = x_max / n;
    int nn = n;
    if (X.service_deterministic()) {
      // keep the service breakpoint on the lattice
      const double b = X.service_breakpoint();
      const int per = std::max(1, static_cast<int>(std::lround(b / h)));
      h = b / per;
      nn = static_cast<int>(std::ceil(x_max / h - 1e-9));
      x_max = nn * h;
    }
    const auto g = detail::make_tgrid(X, h);
    detail::TFft op(g, nn);

    std::vector<double> F(nn + 1, 1.0);
    int it = 0;
    double step = 0;
    for (;; ++it) {
      if (it >= opt.max_iterations)
        throw MaxIterations("fixed-point iteration cap reached before the "
                            "stopping rule was met");
      std::vector<double> next = op.apply(F, m.p);
      step = 0;
      for (int k = 0; k <= nn; ++k) step = std::max(step, std::abs(next[k] - F[k]));
      F = std::move(next);
      if (step <= stop) break;
    }

    res.grid = GridFunction{x_max, nn, F};
    res.iterations = it + 1;
    res.contraction = q;
    res.last_step = step;
    res.domain_doublings = doubling;
    if (1.0 - F.back() < opt.tol) break;
    if (doubling >= 8)
      throw TailNotConverged("tail mass at the grid edge still exceeds the "
                             "tolerance after repeated domain doubling");
    x_max *= 2;
    n = std::min(n * 2, 131072);  // keep h, cap the node count
  }

  const auto tg = detail::make_tgrid(X, res.grid.h());
  auto tf = detail::apply_T_grid_direct(res.grid.values, tg, m.p);
  double r = 0;
  for (size_t k = 0; k < tf.size(); ++k)
    r = std::max(r, std::abs(tf[k] - res.grid.values[k]));
  res.residual = r;
  return res;
}

inline GridFunction solve_fixed_point(const ModelParams& m, int n = 2000, double x_max = 0,
                                      double tol = 1e-6) {
  FixedPointOptions opt;
  opt.n = n;
  opt.x_max = x_max;
  opt.tol = tol;
  return solve_fixed_point_full(m, opt).grid;
}

}  // namespace lq
