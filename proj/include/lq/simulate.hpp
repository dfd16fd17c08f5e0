#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lq/common.hpp"
#include "lq/dist.hpp"

namespace lq {

// splitmix64: tiny, fast, and the stream is fully determined by the seed, so
// every run of the same config reproduces the same samples.
struct SplitMix64 {
  uint64_t state;

  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform on (0, 1), never exactly 0 or 1
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1p-53;
  }
};

// Independent stream for replication r of a base seed.
inline uint64_t replication_seed(uint64_t seed, int r) {
  uint64_t z = seed + (static_cast<uint64_t>(r) + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline double sample_arrival(const Interarrival& a, SplitMix64& rng) {
  switch (a.family()) {
    case ArrivalFamily::Exponential: return -std::log(rng.uniform()) / a.rate();
    case ArrivalFamily::Erlang: {
      double s = 0;
      for (int j = 0; j < a.shape(); ++j) s += -std::log(rng.uniform());
      return s / a.rate();
    }
    case ArrivalFamily::Deterministic: return a.det_value();
    case ArrivalFamily::HyperExp: {
      const double u = rng.uniform();
      double acc = 0;
      size_t pick = a.rates().size() - 1;
      for (size_t i = 0; i < a.weights().size(); ++i) {
        acc += a.weights()[i];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
      return -std::log(rng.uniform()) / a.rates()[pick];
    }
  }
  return 0;
}

inline double sample_service(const ServiceLaw& s, SplitMix64& rng) {
  if (const auto* d = std::get_if<DetService>(&s)) return d->b;
  const auto& me = std::get<MixedErlang>(s);
  const double u = rng.uniform();
  double acc = 0;
  size_t n = me.kappa().size();
  for (size_t i = 0; i < me.kappa().size(); ++i) {
    acc += me.kappa()[i];
    if (u <= acc) {
      n = i + 1;
      break;
    }
  }
  if (n > me.kappa().size()) n = me.kappa().size();
  double sum = 0;
  for (size_t j = 0; j < n; ++j) sum += -std::log(rng.uniform());
  return sum / me.mu();
}

}  // namespace detail

struct SimConfig {
  long samples = 1000000;  // per replication
  long burn_in = 10000;
  uint64_t seed = 42;
  int replications = 1;
};

class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> samples) : x_(std::move(samples)) {
    std::sort(x_.begin(), x_.end());
  }

  long size() const { return static_cast<long>(x_.size()); }
  const std::vector<double>& sorted() const { return x_; }

  double ecdf(double x) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return static_cast<double>(it - x_.begin()) / static_cast<double>(x_.size());
  }

  double zero_fraction() const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), 0.0);
    return static_cast<double>(it - x_.begin()) / static_cast<double>(x_.size());
  }

  double quantile(double q) const {
    if (x_.empty()) return 0;
    const double pos = q * static_cast<double>(x_.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, x_.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return x_[lo] * (1 - frac) + x_[hi] * frac;
  }

  double max() const { return x_.empty() ? 0 : x_.back(); }

 private:
  std::vector<double> x_;
};

struct SimResult {
  EmpiricalDistribution merged;
  std::vector<EmpiricalDistribution> replications;
};

// Drive W <- max(0, B - A + Y W) from W = 0, discard the burn-in, then
// record every visited state.
inline SimResult simulate(const ModelParams& m, const SimConfig& cfg = {}) {
  const auto stab = check_stability(m);
  if (stab.status == Stability::Unstable) throw UnstableP1(stab.note);
  if (stab.status == Stability::Flagged) throw InputError("model rejected: " + stab.note);
  if (cfg.samples < 1) throw InputError("sample count must be positive");
  if (cfg.replications < 1) throw InputError("replication count must be positive");
  if (cfg.burn_in < 0) throw InputError("burn-in must be nonnegative");

  std::vector<EmpiricalDistribution> reps;
  reps.reserve(cfg.replications);
  std::vector<double> all;
  all.reserve(static_cast<size_t>(cfg.samples) * cfg.replications);
  for (int r = 0; r < cfg.replications; ++r) {
    SplitMix64 rng(replication_seed(cfg.seed, r));
    double w = 0;
    std::vector<double> xs;
    xs.reserve(cfg.samples);
    for (long i = 0; i < cfg.burn_in + cfg.samples; ++i) {
      const double b = detail::sample_service(m.service, rng);
      const double a = detail::sample_arrival(m.arrival, rng);
      const double y = rng.uniform() < m.p ? 1.0 : -1.0;
      w = std::max(0.0, b - a + y * w);
      if (i >= cfg.burn_in) xs.push_back(w);
    }
    all.insert(all.end(), xs.begin(), xs.end());
    reps.emplace_back(std::move(xs));
  }
  return SimResult{EmpiricalDistribution(std::move(all)), std::move(reps)};
}

// One-sample Kolmogorov-Smirnov distance against a CDF callable. Tied sample
// values (the atom at zero in particular) are compared as one jump.
template <class Cdf>
double ks_statistic(const EmpiricalDistribution& emp, Cdf&& cdf) {
  const auto& x = emp.sorted();
  const double n = static_cast<double>(x.size());
  double d = 0;
  size_t i = 0;
  while (i < x.size()) {
    size_t j = i;
    while (j + 1 < x.size() && x[j + 1] == x[i]) ++j;
    const double f = cdf(x[i]);
    // left edge of a tie group compares against the left limit of F; the
    // waiting time's only atom sits at 0, so F(v-) = F(v) except at v = 0
    const double fleft = x[i] <= 0.0 ? 0.0 : f;
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(j + 1) / n;
    d = std::max(d, std::max(std::abs(fleft - lo), std::abs(hi - f)));
    i = j + 1;
  }
  return d;
}

// Two-sample KS distance between empirical laws.
inline double ks_two_sample(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  const auto& xa = a.sorted();
  const auto& xb = b.sorted();
  const double na = static_cast<double>(xa.size()), nb = static_cast<double>(xb.size());
  double d = 0;
  size_t i = 0, j = 0;
  while (i < xa.size() && j < xb.size()) {
    const double v = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] <= v) ++i;
    while (j < xb.size() && xb[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace lq
