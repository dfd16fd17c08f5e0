#pragma once

#include <numeric>
#include <sstream>
#include <variant>
#include <vector>

#include "lq/common.hpp"
#include "lq/poly.hpp"

namespace lq {

// Service law: mixture of Erlang(n, mu) phases with weights kappa[n-1].
// F_B(x) = sum_n kappa_n (1 - e^{-mu x} sum_{j<n} (mu x)^j / j!)
class MixedErlang {
 public:
  MixedErlang(double mu, std::vector<double> kappa) : mu_(mu), kappa_(std::move(kappa)) {
    if (!(mu_ > 0)) throw InputError("service rate mu must be positive");
    if (kappa_.empty()) throw InputError("service mixture needs at least one weight");
    for (double k : kappa_)
      if (k < 0) throw InputError("service mixture weights must be nonnegative");
    const double sum = std::accumulate(kappa_.begin(), kappa_.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "service mixture weights sum to " << sum << ", expected 1";
      throw InputError(os.str());
    }
    if (std::abs(sum - 1.0) > 1e-12)
      for (double& k : kappa_) k /= sum;
    while (kappa_.size() > 1 && kappa_.back() == 0.0) kappa_.pop_back();
    if (kappa_.back() == 0.0) throw InputError("service mixture weights are all zero");
  }

  double mu() const { return mu_; }
  const std::vector<double>& kappa() const { return kappa_; }
  int order() const { return static_cast<int>(kappa_.size()); }

  double mean() const {
    double m = 0;
    for (size_t n = 0; n < kappa_.size(); ++n) m += kappa_[n] * static_cast<double>(n + 1);
    return m / mu_;
  }

  double cdf(double x) const {
    if (x < 0) return 0.0;
    // Erlang(n) survival terms share the Poisson weights e^{-mu x}(mu x)^j/j!
    const double mx = mu_ * x;
    double pois = std::exp(-mx);  // j = 0 term
    double surv_partial = 0;      // sum_{j<n} pois_j, built up as n grows
    KahanSum<double> acc;
    for (size_t n = 0; n < kappa_.size(); ++n) {
      surv_partial += pois;
      acc.add(kappa_[n] * (1.0 - surv_partial));
      pois *= mx / static_cast<double>(n + 1);
    }
    double v = acc.value();
    return v < 0 ? 0.0 : (v > 1 ? 1.0 : v);
  }

  double pdf(double x) const {
    if (x < 0) return 0.0;
    const double mx = mu_ * x;
    double term = mu_ * std::exp(-mx);  // n = 1 density
    double f = 0;
    for (size_t n = 0; n < kappa_.size(); ++n) {
      f += kappa_[n] * term;
      term *= mx / static_cast<double>(n + 1);
    }
    return f;
  }

  // beta(s) = sum_n kappa_n (mu/(mu+s))^n, Re(s) > -mu
  cplx lst(cplx s) const {
    if (s.real() <= -mu_)
      throw InputError("service transform evaluated outside its convergence region");
    const cplx r = mu_ / (mu_ + s);
    cplx rp = r;
    cplx v = 0;
    for (size_t n = 0; n < kappa_.size(); ++n) {
      v += kappa_[n] * rp;
      rp *= r;
    }
    return v;
  }

  // (-1)^k beta^{(k)}(s) = E[B^k e^{-sB}] >= 0, real s > -mu
  double alt_lst_deriv(int k, double s) const {
    if (s <= -mu_)
      throw InputError("service transform derivative outside its convergence region");
    double v = 0;
    for (size_t i = 0; i < kappa_.size(); ++i) {
      const double n = static_cast<double>(i + 1);
      // rising factorial n(n+1)...(n+k-1)
      double rf = 1;
      for (int j = 0; j < k; ++j) rf *= n + j;
      v += kappa_[i] * std::pow(mu_ / (mu_ + s), n) * rf / std::pow(mu_ + s, k);
    }
    return v;
  }

 private:
  double mu_;
  std::vector<double> kappa_;
};

enum class ArrivalFamily { Exponential, Erlang, Deterministic, HyperExp };

// Interarrival law. Four families, each with exact transform, transform
// derivatives at real points, and the Poisson-mass sequence
//   t_k = ((-mu)^k / k!) alpha^{(k)}(mu) = E[e^{-mu A} (mu A)^k / k!],
// which is what the transform solver actually consumes.
class Interarrival {
 public:
  static Interarrival exponential(double lambda) {
    require_pos(lambda, "arrival rate");
    Interarrival a;
    a.family_ = ArrivalFamily::Exponential;
    a.rates_ = {lambda};
    return a;
  }
  static Interarrival erlang(int k, double lambda) {
    require_pos(lambda, "arrival rate");
    if (k < 1) throw InputError("Erlang arrival shape must be >= 1");
    Interarrival a;
    a.family_ = ArrivalFamily::Erlang;
    a.rates_ = {lambda};
    a.shape_ = k;
    return a;
  }
  static Interarrival deterministic(double value) {
    require_pos(value, "deterministic interarrival time");
    Interarrival a;
    a.family_ = ArrivalFamily::Deterministic;
    a.det_ = value;
    return a;
  }
  static Interarrival hyperexp(std::vector<double> weights, std::vector<double> rates) {
    if (weights.size() != rates.size() || weights.empty())
      throw InputError("hyperexponential arrival needs matching weight and rate lists");
    for (double w : weights)
      if (w < 0) throw InputError("hyperexponential weights must be nonnegative");
    for (double r : rates) require_pos(r, "hyperexponential rate");
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "hyperexponential weights sum to " << sum << ", expected 1";
      throw InputError(os.str());
    }
    for (double& w : weights) w /= sum;
    Interarrival a;
    a.family_ = ArrivalFamily::HyperExp;
    a.weights_ = std::move(weights);
    a.rates_ = std::move(rates);
    return a;
  }

  ArrivalFamily family() const { return family_; }
  double rate() const { return rates_.at(0); }
  int shape() const { return shape_; }
  double det_value() const { return det_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& rates() const { return rates_; }

  double mean() const {
    switch (family_) {
      case ArrivalFamily::Exponential: return 1.0 / rates_[0];
      case ArrivalFamily::Erlang: return shape_ / rates_[0];
      case ArrivalFamily::Deterministic: return det_;
      case ArrivalFamily::HyperExp: {
        double m = 0;
        for (size_t i = 0; i < rates_.size(); ++i) m += weights_[i] / rates_[i];
        return m;
      }
    }
    return 0;
  }

  double cdf(double x) const {
    if (x < 0) return 0.0;
    switch (family_) {
      case ArrivalFamily::Exponential: return -std::expm1(-rates_[0] * x);
      case ArrivalFamily::Erlang: {
        const double lx = rates_[0] * x;
        double pois = std::exp(-lx), s = 0;
        for (int j = 0; j < shape_; ++j) {
          s += pois;
          pois *= lx / (j + 1);
        }
        return 1.0 - s;
      }
      case ArrivalFamily::Deterministic: return x >= det_ ? 1.0 : 0.0;
      case ArrivalFamily::HyperExp: {
        double v = 0;
        for (size_t i = 0; i < rates_.size(); ++i)
          v += weights_[i] * -std::expm1(-rates_[i] * x);
        return v;
      }
    }
    return 0;
  }

  double survival(double x) const {
    if (x <= 0) return 1.0;
    switch (family_) {
      case ArrivalFamily::Deterministic: return x >= det_ ? 0.0 : 1.0;
      default: return 1.0 - cdf(x);
    }
  }

  // Smallest singularity of alpha continued to the left: the transform
  // integral converges for Re(s) > -edge.
  double convergence_edge() const {
    switch (family_) {
      case ArrivalFamily::Exponential:
      case ArrivalFamily::Erlang: return rates_[0];
      case ArrivalFamily::Deterministic: return std::numeric_limits<double>::infinity();
      case ArrivalFamily::HyperExp: return *std::min_element(rates_.begin(), rates_.end());
    }
    return 0;
  }

  // alpha(s) = E[e^{-sA}]
  cplx lst(cplx s) const {
    if (s.real() <= -convergence_edge())
      throw InputError("arrival transform evaluated outside its convergence region");
    switch (family_) {
      case ArrivalFamily::Exponential: return rates_[0] / (rates_[0] + s);
      case ArrivalFamily::Erlang:
        return std::pow(rates_[0] / (rates_[0] + s), static_cast<double>(shape_));
      case ArrivalFamily::Deterministic: return std::exp(-s * det_);
      case ArrivalFamily::HyperExp: {
        cplx v = 0;
        for (size_t i = 0; i < rates_.size(); ++i)
          v += weights_[i] * rates_[i] / (rates_[i] + s);
        return v;
      }
    }
    return 0;
  }

  cplx lst_prime(cplx s) const {
    if (s.real() <= -convergence_edge())
      throw InputError("arrival transform evaluated outside its convergence region");
    switch (family_) {
      case ArrivalFamily::Exponential: {
        const cplx d = rates_[0] + s;
        return -rates_[0] / (d * d);
      }
      case ArrivalFamily::Erlang: {
        const cplx d = rates_[0] + s;
        return -static_cast<double>(shape_) *
               std::pow(rates_[0] / d, static_cast<double>(shape_)) / d;
      }
      case ArrivalFamily::Deterministic: return -det_ * std::exp(-s * det_);
      case ArrivalFamily::HyperExp: {
        cplx v = 0;
        for (size_t i = 0; i < rates_.size(); ++i) {
          const cplx d = rates_[i] + s;
          v += -weights_[i] * rates_[i] / (d * d);
        }
        return v;
      }
    }
    return 0;
  }

  // t_k = E[e^{-mu A} (mu A)^k / k!]; each family reduces to a standard
  // discrete law (geometric / negative binomial / Poisson / mixture).
  double poisson_mass(double mu, int k) const {
    switch (family_) {
      case ArrivalFamily::Exponential: {
        const double q = mu / (rates_[0] + mu);
        return (1.0 - q) * std::pow(q, k);
      }
      case ArrivalFamily::Erlang: {
        const double q = mu / (rates_[0] + mu);
        double v = std::pow(1.0 - q, shape_);
        for (int j = 1; j <= k; ++j) v *= q * (shape_ + j - 1) / static_cast<double>(j);
        return v;
      }
      case ArrivalFamily::Deterministic: {
        const double ma = mu * det_;
        double v = std::exp(-ma);
        for (int j = 1; j <= k; ++j) v *= ma / j;
        return v;
      }
      case ArrivalFamily::HyperExp: {
        double v = 0;
        for (size_t i = 0; i < rates_.size(); ++i) {
          const double q = mu / (rates_[i] + mu);
          v += weights_[i] * (1.0 - q) * std::pow(q, k);
        }
        return v;
      }
    }
    return 0;
  }

  // t_0..t_kmax in one pass; same recurrences as poisson_mass.
  std::vector<double> poisson_mass_table(double mu, int kmax) const {
    std::vector<double> t(kmax + 1, 0.0);
    switch (family_) {
      case ArrivalFamily::Exponential: {
        const double q = mu / (rates_[0] + mu);
        double v = 1.0 - q;
        for (int k = 0; k <= kmax; ++k) { t[k] = v; v *= q; }
        break;
      }
      case ArrivalFamily::Erlang: {
        const double q = mu / (rates_[0] + mu);
        double v = std::pow(1.0 - q, shape_);
        for (int k = 0; k <= kmax; ++k) {
          t[k] = v;
          v *= q * (shape_ + k) / static_cast<double>(k + 1);
        }
        break;
      }
      case ArrivalFamily::Deterministic: {
        const double ma = mu * det_;
        double v = std::exp(-ma);
        for (int k = 0; k <= kmax; ++k) { t[k] = v; v *= ma / (k + 1); }
        break;
      }
      case ArrivalFamily::HyperExp: {
        for (size_t i = 0; i < rates_.size(); ++i) {
          const double q = mu / (rates_[i] + mu);
          double v = weights_[i] * (1.0 - q);
          for (int k = 0; k <= kmax; ++k) { t[k] += v; v *= q; }
        }
        break;
      }
    }
    return t;
  }

  // Nonincreasing upper bound on t_{j+1}/t_j valid for all j >= k.
  double poisson_mass_ratio_bound(double mu, int k) const {
    switch (family_) {
      case ArrivalFamily::Exponential: return mu / (rates_[0] + mu);
      case ArrivalFamily::Erlang:
        return mu / (rates_[0] + mu) * (shape_ + k) / static_cast<double>(k + 1);
      case ArrivalFamily::Deterministic: return mu * det_ / (k + 1);
      case ArrivalFamily::HyperExp: {
        double q = 0;
        for (double r : rates_) q = std::max(q, mu / (r + mu));
        return q;
      }
    }
    return 1;
  }

  // alpha^{(k)}(mu), real mu > 0, recovered from the Poisson masses
  double lst_deriv(double mu, int k) const {
    if (mu <= -convergence_edge())
      throw InputError("arrival transform derivative outside its convergence region");
    double v = poisson_mass(mu, k);
    for (int j = 1; j <= k; ++j) v *= j / (-mu);
    return v;
  }

  // (-1)^k alpha^{(k)}(mu) = E[A^k e^{-mu A}] >= 0
  double alt_lst_deriv(int k, double mu) const {
    double v = lst_deriv(mu, k);
    return (k % 2 == 0) ? v : -v;
  }

  bool is_rational() const { return family_ != ArrivalFamily::Deterministic; }

  // alpha(-s) written as num(s)/den(s) with real coefficients; den has all
  // its zeros at s = rate > 0, safely right of the root search region.
  void rational_parts(Poly& num, Poly& den) const {
    switch (family_) {
      case ArrivalFamily::Exponential:
        num = {cplx(rates_[0])};
        den = {cplx(rates_[0]), cplx(-1.0)};
        return;
      case ArrivalFamily::Erlang: {
        num = {cplx(std::pow(rates_[0], shape_))};
        den = {cplx(1.0)};
        const Poly lin = {cplx(rates_[0]), cplx(-1.0)};
        for (int j = 0; j < shape_; ++j) den = poly_mul(den, lin);
        return;
      }
      case ArrivalFamily::HyperExp: {
        den = {cplx(1.0)};
        for (double r : rates_) den = poly_mul(den, Poly{cplx(r), cplx(-1.0)});
        num = {cplx(0.0)};
        for (size_t i = 0; i < rates_.size(); ++i) {
          Poly part = {cplx(weights_[i] * rates_[i])};
          for (size_t j = 0; j < rates_.size(); ++j)
            if (j != i) part = poly_mul(part, Poly{cplx(rates_[j]), cplx(-1.0)});
          num = poly_add(num, part);
        }
        return;
      }
      case ArrivalFamily::Deterministic:
        throw InputError("deterministic interarrival transform is not rational");
    }
  }

 private:
  Interarrival() = default;
  static void require_pos(double v, const char* what) {
    if (!(v > 0)) throw InputError(std::string(what) + " must be positive");
  }

  ArrivalFamily family_ = ArrivalFamily::Exponential;
  std::vector<double> weights_;
  std::vector<double> rates_;
  int shape_ = 1;
  double det_ = 0;
};

struct DetService {
  double b;
};

using ServiceLaw = std::variant<MixedErlang, DetService>;

struct ModelParams {
  double p;  // P[Y = +1]
  Interarrival arrival;
  ServiceLaw service;

  ModelParams(double p_, Interarrival a, ServiceLaw s)
      : p(p_), arrival(std::move(a)), service(std::move(s)) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("p must lie in [0, 1]");
    if (const auto* d = std::get_if<DetService>(&service))
      if (!(d->b > 0)) throw InputError("deterministic service time must be positive");
  }

  double service_mean() const {
    if (const auto* m = std::get_if<MixedErlang>(&service)) return m->mean();
    return std::get<DetService>(service).b;
  }
  double service_cdf(double x) const {
    if (const auto* m = std::get_if<MixedErlang>(&service)) return m->cdf(x);
    return x >= std::get<DetService>(service).b ? 1.0 : 0.0;
  }
  double rho() const { return service_mean() / arrival.mean(); }
};

enum class Stability { Stable, Unstable, Flagged };

struct StabilityReport {
  Stability status;
  double rho;
  std::string note;
  bool passed() const { return status == Stability::Stable; }
};

// For p < 1 the regeneration P[B - A <= 0] > 0 makes the chain stable for any
// load; only the all-deterministic corner can lose that regeneration. p = 1 is
// the classical case, stable iff rho < 1.
inline StabilityReport check_stability(const ModelParams& m) {
  StabilityReport r;
  r.rho = m.rho();
  if (m.p == 1.0) {
    if (r.rho < 1.0) {
      r.status = Stability::Stable;
    } else {
      r.status = Stability::Unstable;
      std::ostringstream os;
      os << "p = 1 with rho = " << r.rho << " >= 1: no stationary waiting time";
      r.note = os.str();
    }
    return r;
  }
  if (m.arrival.family() == ArrivalFamily::Deterministic) {
    const double a = m.arrival.det_value();
    double essinf = 0.0;
    if (const auto* d = std::get_if<DetService>(&m.service)) essinf = d->b;
    if (a <= essinf) {
      r.status = Stability::Flagged;
      r.note = "deterministic interarrival does not exceed the minimum service "
               "time: the zero state may be unreachable";
      return r;
    }
  }
  r.status = Stability::Stable;
  return r;
}

}  // namespace lq
