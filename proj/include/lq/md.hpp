#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lq/common.hpp"
#include "lq/dist.hpp"

namespace lq {

struct MdParams {
  double lambda;
  double b;
  double p;

  MdParams(double lambda_, double b_, double p_) : lambda(lambda_), b(b_), p(p_) {
    if (!(lambda > 0)) throw InputError("arrival rate lambda must be positive");
    if (!(b > 0)) throw InputError("service time b must be positive");
    if (!(p >= 0 && p <= 1)) throw InputError("p must lie in [0, 1]");
    if (p == 1.0 && !(lambda * b < 1.0)) {
      std::ostringstream os;
      os << "p = 1 with rho = " << lambda * b << " >= 1: no stationary waiting time";
      throw UnstableP1(os.str());
    }
  }
  double rho() const { return lambda * b; }
};

inline ModelParams to_model(const MdParams& m) {
  return ModelParams(m.p, Interarrival::exponential(m.lambda), DetService{m.b});
}

struct MdOptions {
  double eps_tail = 1e-10;
  int max_bands = 200;
};

namespace detail {

// value = a + b * pi0; every band quantity is affine in the atom
struct QAffine {
  quad a{0}, b{0};
  quad at(quad pi0) const { return a + b * pi0; }
  QAffine operator+(const QAffine& o) const { return {a + o.a, b + o.b}; }
  QAffine operator-(const QAffine& o) const { return {a - o.a, b - o.b}; }
  QAffine scaled(quad s) const { return {a * s, b * s}; }
};

inline const quad* qfact() {
  static const std::array<quad, 256> table = [] {
    std::array<quad, 256> f{};
    f[0] = 1;
    for (int i = 1; i < 256; ++i) f[i] = f[i - 1] * quad(i);
    return f;
  }();
  return table.data();
}

// Shared band machinery: the two-exponential constants and the gamma
// recursion, all affine in pi0, all in extended precision because the band
// sums alternate with growth (lambda p/(lambda-r1))^i.
struct MdCore {
  quad lam{}, bb{}, p{};
  quad g{}, r1{}, r2{}, qg1{}, qg2{}, ebr1{};
  QAffine d1, d2;
  std::vector<QAffine> gam;  // gamma_0..; gamma_0 = 0
  // edge[i] = F_{i-1}(ib) as an affine function of pi0, with the largest term
  // magnitude met while summing it; every entry is a candidate closure
  // equation for pi0
  struct Edge {
    QAffine F;
    quad mm{0};
  };
  std::vector<Edge> edge;

  void init(const MdParams& m) {
    lam = quad(m.lambda);
    bb = quad(m.b);
    p = quad(m.p);
    const quad twomp = quad(2) - p;
    g = qsqrt(p * twomp);
    r1 = lam * g;
    r2 = -r1;
    ebr1 = qexp(bb * r1);
    const quad G =
        (ebr1 - 1) * lam * lam * twomp * (1 - p) + ebr1 * r1 * (r1 - lam * twomp);
    const quad Gscale = qabs((ebr1 - 1) * lam * lam * twomp * (1 - p)) +
                        ebr1 * r1 * (r1 + lam * twomp);
    if (qabs(G) <= quad(1e-12) * Gscale)
      throw IllConditioned(
          "the shared denominator of the two-exponential constants vanishes at "
          "these parameters; use the fixed point engine");
    const quad k1 = lam * lam * (1 - p) * r1 / G;
    const quad k2 = ebr1 * lam * r1 * (lam - r1) / G;
    // c(pi0) = (1-p) - (2-p) pi0 multiplies both constants
    d1 = QAffine{(1 - p) * k1, -twomp * k1};
    d2 = QAffine{(1 - p) * k2, -twomp * k2};
    qg1 = lam * p / (lam - r1);
    qg2 = lam * p / (lam + r1);
    gam.assign(1, QAffine{});
  }

  // Emits every x-dependent term of the band-i CDF and returns the constant
  // part 1 - p^i/(2-p). V is quad (fixed pi0) or QAffine. with_own drops the
  // gamma_i e^{lam x} term so the caller can solve for gamma_i itself.
  template <class V, class Emit>
  quad band_terms(const std::vector<V>& gm, const V& D1, const V& D2, int i,
                  quad x, bool with_own, Emit&& emit) const {
    const quad u = x - bb * quad(i);
    emit(D1.scaled(qpow(qg1, quad(i)) * qexp(r1 * u) / r1));
    emit(D2.scaled(qpow(qg2, quad(i)) * qexp(r2 * u) / r2));
    if (i >= 1) {
      const quad* fact = qfact();
      quad ee = qexp(lam * x);
      if (with_own) emit(gm[i].scaled(ee));
      const quad step = qexp(-lam * bb);
      quad ppow = 1;
      for (int j = 1; j <= i - 1; ++j) {
        ee *= step;
        ppow *= lam * p;
        quad co = x * ppow * qpow(x - bb * quad(j), quad(j - 1)) / fact[j] * ee;
        if (j % 2) co = -co;
        emit(gm[i - j].scaled(co));
      }
    }
    return 1 - qpow(p, quad(i)) / (quad(2) - p);
  }

  // gamma_i is whatever makes band i meet band i-1 at x = ib; solving the
  // continuity condition directly sidesteps the fragile explicit recursion.
  // The gamma representation itself grows without bound in i (cancellation
  // does the work in exact arithmetic), so extension stops early when the
  // components approach the quad range; returns the last band reached.
  int extend_gammas(int I) {
    if (edge.empty()) edge.resize(1);
    for (int i = static_cast<int>(gam.size()); i <= I; ++i) {
      const quad x = bb * quad(i);
      KahanSum<quad> pa, pb;
      quad cst = band_terms(gam, d1, d2, i - 1, x, true, [&](const QAffine& t) {
        pa.add(t.a);
        pb.add(t.b);
      });
      pa.add(cst);
      const QAffine prev{pa.value(), pb.value()};
      edge.push_back(Edge{prev, pa.max_mag > pb.max_mag ? pa.max_mag : pb.max_mag});
      KahanSum<quad> qa, qb;
      cst = band_terms(gam, d1, d2, i, x, false, [&](const QAffine& t) {
        qa.add(t.a);
        qb.add(t.b);
      });
      qa.add(cst);
      const QAffine part{qa.value(), qb.value()};
      const QAffine gi = (prev - part).scaled(qexp(-lam * x));
      if (!(qabs(gi.a) < quad(1e280)) || !(qabs(gi.b) < quad(1e280))) {
        edge.pop_back();
        return i - 1;
      }
      gam.push_back(gi);
    }
    return I;
  }
};

// quad is its own "affine" scalar for the fixed-pi0 path
struct QScalar {
  quad v{0};
  QScalar scaled(quad s) const { return {v * s}; }
};

inline quad band_value(const MdCore& c, const std::vector<QScalar>& gv,
                       QScalar d1v, QScalar d2v, int i, quad x, quad* maxmag) {
  KahanSum<quad> acc;
  const quad cst =
      c.band_terms(gv, d1v, d2v, i, x, true, [&acc](QScalar t) { acc.add(t.v); });
  acc.add(cst);
  if (maxmag) *maxmag = acc.max_mag;
  return acc.value();
}

inline QAffine band_affine(const MdCore& c, int i, quad x, quad* maxmag = nullptr) {
  KahanSum<quad> aa, ab;
  const quad cst =
      c.band_terms(c.gam, c.d1, c.d2, i, x, true, [&](const QAffine& t) {
        aa.add(t.a);
        ab.add(t.b);
      });
  aa.add(cst);
  if (maxmag) *maxmag = aa.max_mag > ab.max_mag ? aa.max_mag : ab.max_mag;
  return {aa.value(), ab.value()};
}

// test hook: band CDF at an arbitrary pi0, bypassing normalization
inline double md_band_cdf_at(const MdParams& m, int bands_to, int i, double x,
                             double pi0) {
  MdCore core;
  core.init(m);
  core.extend_gammas(bands_to);
  return to_double(band_affine(core, i, quad(x)).at(quad(pi0)));
}

// Decay rate of the true tail: survival ~ C e^{-eta x} with
// lam p e^{eta b} = lam + eta (p = 1 included).
inline quad solve_tail_rate(quad lam, quad bb, quad p) {
  const auto h = [&](quad e) { return lam * p * qexp(e * bb) - lam - e; };
  quad lo = 0;
  if (p == quad(1)) {
    lo = quad(1e-6) / bb;  // h(0) = 0 at p = 1; the positive root is wanted
    while (!(h(lo) < 0) && lo > quad(1e-30) / bb) lo /= 2;
  }
  quad hi = 1 / bb;
  for (int i = 0; i < 200 && !(h(hi) > 0); ++i) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const quad mid = (lo + hi) / 2;
    (h(mid) > 0 ? hi : lo) = mid;
  }
  return (lo + hi) / 2;
}

constexpr double quad_eps = 1.93e-34;

// Solved 0<p<1 state: pi0 from the far-band closure, scalar gammas, the
// certified band range, and the calibrated exponential tail.
struct MdEngine {
  MdParams prm{1, 1, 0.5};
  MdCore core;
  int bands = 0;
  quad pi0{};
  std::vector<QScalar> gv;
  QScalar d1v, d2v;
  int cert_bands = 0;
  double cert_edge_F = 0;
  quad eta{}, Ct{};
  double tail_bound = 0;
  double max_ratio = 0;  // worst term/|sum| ratio met inside certified bands
  std::vector<std::string> warnings;

  double cdf(double x) const {
    if (x < 0) return 0.0;
    const int i = static_cast<int>(std::floor(x / prm.b));
    if (i <= cert_bands && i <= bands) {
      const quad v = band_value(core, gv, d1v, d2v, i, quad(x), nullptr);
      double dv = to_double(v);
      return dv < 0 ? 0.0 : (dv > 1 ? 1.0 : dv);
    }
    double F = 1.0 - to_double(Ct * qexp(-eta * quad(x)));
    if (F < cert_edge_F) F = cert_edge_F;
    return F > 1 ? 1.0 : F;
  }

  double density(double x) const {
    if (x < 0) return 0.0;
    const int i = x == 0 ? 0 : static_cast<int>(std::floor(x / prm.b));
    if (i == 0) {
      const quad v = d1v.v * qexp(core.r1 * quad(x)) + d2v.v * qexp(core.r2 * quad(x));
      return std::max(0.0, to_double(v));
    }
    if (i <= cert_bands && i <= bands) {
      const quad Fx = band_value(core, gv, d1v, d2v, i, quad(x), nullptr);
      const int ip = i - 1;
      const quad Fp = band_value(core, gv, d1v, d2v, ip, quad(x - prm.b), nullptr);
      const quad f = core.lam * (Fx - 1 + core.p - core.p * Fp);
      return std::max(0.0, to_double(f));
    }
    return std::max(0.0, to_double(eta * Ct * qexp(-eta * quad(x))));
  }
};

}  // namespace detail

class MdSolution {
 public:
  enum class Kind { Bands, Uniform, MD1 };

  Kind kind() const { return kind_; }
  const MdParams& params() const { return prm_; }
  double atom() const { return pi0_; }
  double r1() const { return r1_; }
  double r2() const { return -r1_; }
  double d1() const { return d1_; }
  double d2() const { return d2_; }
  const std::vector<double>& gamma() const { return gamma_; }
  int bands() const { return bands_; }
  int certified_bands() const { return cert_bands_; }
  double tail_bound() const { return tail_bound_; }
  double tail_rate() const { return eta_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double cdf(double x) const {
    switch (kind_) {
      case Kind::Bands:
        return eng_->cdf(x);
      case Kind::Uniform:
        if (x < 0) return 0.0;
        if (x >= prm_.b) return 1.0;
        return pi0_ * (1.0 + prm_.lambda * x);
      case Kind::MD1:
        return md1_cdf(x);
    }
    return 0.0;
  }

  double density(double x) const {
    switch (kind_) {
      case Kind::Bands:
        return eng_->density(x);
      case Kind::Uniform:
        return (x < 0 || x >= prm_.b) ? 0.0 : prm_.lambda * pi0_;
      case Kind::MD1: {
        if (x < 0) return 0.0;
        const double F = md1_cdf(x);
        const double Fp = x < prm_.b ? 0.0 : md1_cdf(x - prm_.b);
        return std::max(0.0, prm_.lambda * (F - Fp));
      }
    }
    return 0.0;
  }

 private:
  friend MdSolution solve_md(const MdParams&, const MdOptions&);
  friend MdSolution solve_md_p0(const MdParams&);
  friend MdSolution solve_md_p1_erlang(const MdParams&, const MdOptions&);
  friend double density_jump_check(const MdSolution&);

  MdSolution() = default;

  double md1_cdf(double x) const {
    if (x < 0) return 0.0;
    const int i = static_cast<int>(std::floor(x / prm_.b));
    const quad lam = quad(prm_.lambda), bb = quad(prm_.b);
    if (i <= 200) {
      KahanSum<quad> acc;
      const quad* fact = detail::qfact();
      quad ee = qexp(lam * quad(x));
      quad sgnpow = 1;
      for (int j = 0; j <= i; ++j) {
        if (j > 0) {
          ee *= qexp(-lam * bb);
          sgnpow *= -lam;
        }
        const quad u = quad(x) - bb * quad(j);
        acc.add(sgnpow * qpow(u, quad(j)) / fact[j] * ee);
      }
      const quad v = (1 - quad(prm_.rho())) * acc.value();
      const quad est = acc.max_mag * (1 - quad(prm_.rho())) * quad(64 * detail::quad_eps);
      if (est < quad(1e-15)) {
        const double dv = to_double(v);
        return dv < 0 ? 0.0 : (dv > 1 ? 1.0 : dv);
      }
    }
    double F = 1.0 - to_double(md1_C_ * qexp(-md1_eta_ * quad(x)));
    if (F < cert_edge_F_) F = cert_edge_F_;
    return F > 1 ? 1.0 : F;
  }

  Kind kind_ = Kind::Uniform;
  MdParams prm_{1, 1, 0};
  double pi0_ = 0, r1_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> gamma_;
  int bands_ = 0, cert_bands_ = 0;
  double tail_bound_ = 0, eta_ = 0;
  std::vector<std::string> warnings_;
  std::shared_ptr<const detail::MdEngine> eng_;
  quad md1_eta_{}, md1_C_{};
  double cert_edge_F_ = 0;
};

// Band solution for 0 < p < 1: gammas and the two-exponential constants kept
// affine in pi0, pi0 fixed by requiring the far band to sit on the constant
// part 1 - p^{I+1}/(2-p) (the divergent homogeneous mode must vanish, which
// pins pi0 to near machine accuracy).
inline MdSolution solve_md(const MdParams& m, const MdOptions& opt = {}) {
  if (!(m.p > 0 && m.p < 1))
    throw InputError(
        "band solver needs 0 < p < 1; the p = 0 and p = 1 closed forms are "
        "separate operations");
  if (!(opt.eps_tail > 0 && opt.eps_tail <= 1e-3))
    throw InputError("eps_tail must lie in (0, 1e-3]");

  auto eng = std::make_shared<detail::MdEngine>();
  eng->prm = m;
  eng->core.init(m);
  if (m.p > 0.95) {
    std::ostringstream os;
    os << "p = " << m.p
       << " is close to 1: the alternating band solution degrades; consider "
          "the fixed point engine";
    eng->warnings.push_back(os.str());
  }

  const double twomp = 2.0 - m.p;
  int I = std::max(3, static_cast<int>(std::ceil(
                          std::log(opt.eps_tail / 2.0 * twomp) / std::log(m.p))));
  I = std::min(I, opt.max_bands);

  eng->eta = detail::solve_tail_rate(eng->core.lam, eng->core.bb, eng->core.p);
  double fit_resid = 0;
  for (int attempt = 0;; ++attempt) {
    const int reached = eng->core.extend_gammas(I);
    const bool capped = reached < I;
    I = reached;
    eng->bands = I;
    if (I < 3)
      throw IllConditioned("gamma components leave the representable range "
                           "within three bands; use the fixed point engine");

    // pi0 and the tail constant are fit jointly: every recorded band edge
    // satisfies 1 - a_i = b_i pi0 + Ct e^{-eta i b} up to summation noise
    // plus the defect of the one-term tail model, so a weighted least
    // squares over all edges determines both at once. The pi0 sensitivity
    // b_i grows geometrically with i, so the deepest clean edges pin pi0;
    // the near edges fix Ct; edges whose sums have blown up get no weight.
    // A second round refreshes the defect budget with the fitted Ct scale.
    quad pi0f = 0, Ctf = 0, s_pi0 = 0, s_Ct = 0;
    quad Ct_scale = 1;
    for (int it = 0; it < 2; ++it) {
      quad M11 = 0, M12 = 0, M22 = 0, v1 = 0, v2 = 0;
      for (int i = 1; i <= I; ++i) {
        const auto& e = eng->core.edge[i];
        const quad E = qexp(-eng->eta * eng->core.bb * quad(i));
        const quad sig = e.mm * quad(64 * detail::quad_eps) +
                         quad(0.5) * Ct_scale * E + quad(1e-300);
        const quad w = 1 / (sig * sig);
        const quad bs = e.F.b, y = 1 - e.F.a;
        M11 += w * bs * bs;
        M12 += w * bs * E;
        M22 += w * E * E;
        v1 += w * bs * y;
        v2 += w * E * y;
      }
      const quad det = M11 * M22 - M12 * M12;
      if (det > quad(1e-24) * M11 * M22) {
        pi0f = (M22 * v1 - M12 * v2) / det;
        Ctf = (M11 * v2 - M12 * v1) / det;
        s_pi0 = qsqrt(M22 / det);
        s_Ct = qsqrt(M11 / det);
      } else {
        // tail term invisible against the noise floor: close without it
        pi0f = v1 / (M11 + quad(1e-300));
        Ctf = 0;
        s_pi0 = 1 / qsqrt(M11 + quad(1e-300));
        s_Ct = 1 / qsqrt(M22 + quad(1e-300));
      }
      Ct_scale = qabs(Ctf) + 2 * s_Ct + quad(1e-30);
    }
    const double pi0d = to_double(pi0f);
    if (!(pi0d > 0 && pi0d < 1)) {
      std::ostringstream os;
      os << "normalization produced pi0 = " << pi0d << " outside (0, 1)";
      throw IllConditioned(os.str());
    }
    eng->pi0 = pi0f;
    eng->Ct = Ctf > 0 ? Ctf : quad(0);
    const quad dpi0 = 4 * s_pi0 + quad(1e-300);

    // weighted residual of the fit: order one when the band data really is
    // band structure plus a single exponential tail
    {
      KahanSum<quad> rss;
      for (int i = 1; i <= I; ++i) {
        const auto& e = eng->core.edge[i];
        const quad E = qexp(-eng->eta * eng->core.bb * quad(i));
        const quad sig = e.mm * quad(64 * detail::quad_eps) +
                         quad(0.5) * Ct_scale * E + quad(1e-300);
        const quad r = (1 - e.F.a - e.F.b * pi0f - Ctf * E) / sig;
        rss.add(r * r);
      }
      fit_resid = to_double(qsqrt(rss.value() / quad(I)));
    }

    eng->gv.assign(I + 1, detail::QScalar{});
    for (int i = 0; i <= I; ++i) eng->gv[i].v = eng->core.gam[i].at(eng->pi0);
    eng->d1v.v = eng->core.d1.at(eng->pi0);
    eng->d2v.v = eng->core.d2.at(eng->pi0);

    // certification sweep: a band stays trusted while its summation noise
    // plus the pi0 uncertainty leaking through the divergent mode stays
    // below the modeled survival there (or an absolute floor); past that
    // point the fitted exponential tail is the better evaluator
    int cert = I;
    double max_ratio = 0;
    for (int i = 0; i <= I && cert == I; ++i) {
      for (double ufrac : {1e-3, 0.25, 0.5, 0.75, 1.0}) {
        const quad x = eng->core.bb * (quad(i) + quad(ufrac));
        quad mm = 0;
        const quad v =
            detail::band_value(eng->core, eng->gv, eng->d1v, eng->d2v, i, x, &mm);
        const detail::QAffine va = detail::band_affine(eng->core, i, x);
        const quad noise = mm * quad(64 * detail::quad_eps);
        const quad leak = qabs(va.b) * dpi0;
        const quad S_model = eng->Ct * qexp(-eng->eta * x);
        const quad allow =
            S_model > quad(2e-14) ? quad(0.05) * S_model : quad(1e-15);
        if (!(noise + leak < allow)) {
          cert = i - 1;
          break;
        }
        const double ratio = to_double(mm / (qabs(v) + quad(1e-300)));
        max_ratio = std::max(max_ratio, ratio);
      }
    }
    if (cert < 0)
      throw IllConditioned("the first band could not be evaluated reliably");
    eng->cert_bands = cert;
    eng->max_ratio = max_ratio;

    const int ce = std::min(cert, I);
    const quad xe = eng->core.bb * quad(ce + 1);
    const quad ve = detail::band_value(eng->core, eng->gv, eng->d1v, eng->d2v,
                                       ce, xe, nullptr);
    eng->cert_edge_F = std::min(1.0, std::max(0.0, to_double(ve)));

    const double tail_model =
        to_double((eng->Ct * quad(1.25) + 2 * s_Ct) *
                  qexp(-eng->eta * eng->core.bb * quad(I)));
    eng->tail_bound = std::min(2.0 * std::pow(m.p, I) / twomp, tail_model);
    if (eng->tail_bound <= opt.eps_tail) break;
    if (capped || I >= opt.max_bands || attempt >= 6) {
      std::ostringstream os;
      os << "tail mass cannot be brought below " << opt.eps_tail << " within "
         << I << " bands; raise eps_tail or use the fixed point engine";
      throw TailNotConverged(os.str());
    }
    I = std::min(opt.max_bands, I * 13 / 10 + 5);
  }
  if (fit_resid > 5.0) {
    std::ostringstream os;
    os << "band data sits " << fit_resid
       << " standard errors from the exponential tail model; far-tail values "
          "are approximate";
    eng->warnings.push_back(os.str());
  }

  if (eng->max_ratio > 1e12) {
    std::ostringstream os;
    os << "alternating band sums reach term/sum ratio " << eng->max_ratio
       << " (loss beyond double precision; extended precision used); the fixed "
          "point engine is the robust alternative";
    eng->warnings.push_back(os.str());
  }

  MdSolution sol;
  sol.kind_ = MdSolution::Kind::Bands;
  sol.prm_ = m;
  sol.pi0_ = to_double(eng->pi0);
  sol.r1_ = to_double(eng->core.r1);
  sol.d1_ = to_double(eng->d1v.v);
  sol.d2_ = to_double(eng->d2v.v);
  sol.gamma_.resize(eng->bands);
  for (int i = 1; i <= eng->bands; ++i) sol.gamma_[i - 1] = to_double(eng->gv[i].v);
  sol.bands_ = eng->bands;
  sol.cert_bands_ = eng->cert_bands;
  sol.tail_bound_ = eng->tail_bound;
  sol.eta_ = to_double(eng->eta);
  sol.warnings_ = eng->warnings;
  sol.eng_ = eng;
  return sol;
}

// p = 0: mass 1/(1+lambda b) at zero, uniform density on (0, b).
inline MdSolution solve_md_p0(const MdParams& m) {
  if (m.p != 0.0) throw InputError("uniform closed form applies only to p = 0");
  MdSolution sol;
  sol.kind_ = MdSolution::Kind::Uniform;
  sol.prm_ = m;
  sol.pi0_ = 1.0 / (1.0 + m.lambda * m.b);
  sol.bands_ = 1;
  sol.cert_bands_ = 1;
  sol.tail_bound_ = 0.0;
  return sol;
}

// p = 1: the M/D/1 waiting time,
// F(x) = (1-rho) sum_{j<=i} (-lambda(x-jb))^j / j! e^{lambda(x-jb)}.
inline MdSolution solve_md_p1_erlang(const MdParams& m, const MdOptions& opt = {}) {
  if (m.p != 1.0) throw InputError("the M/D/1 closed form applies only to p = 1");
  MdSolution sol;
  sol.kind_ = MdSolution::Kind::MD1;
  sol.prm_ = m;
  sol.pi0_ = 1.0 - m.rho();
  if (m.rho() > 0.95) {
    std::ostringstream os;
    os << "rho = " << m.rho()
       << ": the alternating series loses digits under heavy traffic";
    sol.warnings_.push_back(os.str());
  }
  sol.md1_eta_ = detail::solve_tail_rate(quad(m.lambda), quad(m.b), quad(1));
  sol.eta_ = to_double(sol.md1_eta_);

  // walk band edges while the alternating sum stays certified; calibrate the
  // exponential tail at the last edge whose survival is still resolved
  const quad lam = quad(m.lambda), bb = quad(m.b);
  const quad* fact = detail::qfact();
  int cert = 0;
  quad cal_S = 0, cal_x = 0;
  double edge_F = 1.0 - m.rho();
  const int scan_bands = std::min(200, opt.max_bands);
  for (int i = 1; i <= scan_bands; ++i) {
    const quad x = bb * quad(i);
    KahanSum<quad> acc;
    quad ee = qexp(lam * x);
    quad sgnpow = 1;
    for (int j = 0; j <= i; ++j) {
      if (j > 0) {
        ee *= qexp(-lam * bb);
        sgnpow *= -lam;
      }
      acc.add(sgnpow * qpow(x - bb * quad(j), quad(j)) / fact[j] * ee);
    }
    const quad v = (1 - quad(m.rho())) * acc.value();
    const quad est = acc.max_mag * (1 - quad(m.rho())) * quad(64 * detail::quad_eps);
    if (!(est < quad(1e-15))) break;
    cert = i;
    edge_F = std::min(1.0, std::max(0.0, to_double(v)));
    const quad S = 1 - v;
    if (S > 0 && est < quad(0.01) * S) {
      cal_S = S;
      cal_x = x;
    }
  }
  sol.bands_ = cert;
  sol.cert_bands_ = cert;
  if (!(cal_S > 0)) {
    cal_S = quad(1e-30);
    cal_x = bb;
  }
  sol.md1_C_ = cal_S * qexp(sol.md1_eta_ * cal_x);
  sol.cert_edge_F_ = edge_F;
  sol.tail_bound_ = to_double(cal_S);
  return sol;
}

// f(b-) - f(b+) - lambda pi0; the jump identity ties the two band families
// together, so this is a live diagnostic, not a tautology.
inline double density_jump_check(const MdSolution& sol) {
  if (sol.kind() != MdSolution::Kind::Bands)
    throw InputError("jump check applies to the 0 < p < 1 band solution");
  const auto& e = *sol.eng_;
  const quad fm = e.d1v.v * qexp(e.core.r1 * e.core.bb) +
                  e.d2v.v * qexp(e.core.r2 * e.core.bb);
  const quad Fb =
      detail::band_value(e.core, e.gv, e.d1v, e.d2v, 0, e.core.bb, nullptr);
  const quad fp = e.core.lam * (Fb - 1 + e.core.p - e.core.p * e.pi0);
  return to_double(fm - fp - e.core.lam * e.pi0);
}

}  // namespace lq
