#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lq/fixedpoint.hpp"
#include "lq/md.hpp"

using namespace lq;
using Catch::Approx;

TEST_CASE("increment distribution closed forms") {
  // X = b - A with A ~ Exp(2), b = 1
  ModelParams det(0.5, Interarrival::exponential(2.0), DetService{1.0});
  XDistribution xd(det);
  CHECK(xd.cdf(1.0) == Approx(1.0).margin(1e-14));
  CHECK(xd.cdf(0.0) == Approx(std::exp(-2.0)).epsilon(1e-13));
  CHECK(xd.cdf(0.5) == Approx(std::exp(-1.0)).epsilon(1e-13));
  CHECK(xd.cdf(2.0) == 1.0);

  // X = B - A with B ~ Exp(mu), A ~ Exp(lambda)
  const double lam = 1.0, mu = 2.0;
  ModelParams me(0.5, Interarrival::exponential(lam), MixedErlang(mu, {1.0}));
  XDistribution xm(me);
  for (double y : {-1.0, -0.3, 0.0, 0.5, 2.0}) {
    const double want = y >= 0 ? 1.0 - lam / (lam + mu) * std::exp(-mu * y)
                               : mu / (lam + mu) * std::exp(lam * y);
    CHECK(xm.cdf(y) == Approx(want).margin(1e-13));
  }

  // two point masses give no continuous part to integrate against
  CHECK_THROWS_AS(
      XDistribution(ModelParams(0.5, Interarrival::deterministic(2.0), DetService{1.0})),
      InputError);
}

TEST_CASE("operator identities at the boundary inputs") {
  ModelParams m(0.5, Interarrival::exponential(2.0), DetService{1.0});
  XDistribution X(m);
  const int n = 500;
  const double xm = 5.0;

  // F == 1 means W = 0, so one step lands exactly on F_X over x >= 0
  GridFunction ones{xm, n, std::vector<double>(n + 1, 1.0)};
  auto t1 = apply_T(ones, X, m.p);
  for (int i = 0; i <= n; ++i)
    CHECK(t1.values[i] == Approx(X.cdf(i * xm / n)).margin(1e-12));

  // F == 0 pushes all mass to the right; only the reflected branch survives
  GridFunction zeros{xm, n, std::vector<double>(n + 1, 0.0)};
  auto t0 = apply_T(zeros, X, m.p);
  for (int i = 0; i <= n; ++i) CHECK(t0.values[i] == Approx(1.0 - m.p).margin(1e-12));
}

TEST_CASE("band solution is invariant under the operator") {
  MdParams m(2.0, 1.0, 1.0 / 3.0);
  auto sol = solve_md(m);
  auto mp = to_model(m);
  XDistribution X(mp);
  const int n = 4800;
  const double xm = 12.0;
  GridFunction F{xm, n, std::vector<double>(n + 1)};
  for (int i = 0; i <= n; ++i) F.values[i] = sol.cdf(i * xm / n);
  auto TF = apply_T(F, X, mp.p);
  CHECK(TF.sup_diff(F) < 1e-6);
}

TEST_CASE("operator contracts at the advertised modulus") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {0.3, 0.7}));
  XDistribution X(m);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 2000;
  const double xm = 8.0;
  auto random_cdf = [&] {
    std::vector<double> v(n + 1);
    for (auto& x : v) x = u(gen);
    std::sort(v.begin(), v.end());
    return GridFunction{xm, n, std::move(v)};
  };
  for (int trial = 0; trial < 10; ++trial) {
    for (double p : {0.1, 0.5, 0.9}) {
      auto F = random_cdf(), G = random_cdf();
      auto TF = apply_T(F, X, p), TG = apply_T(G, X, p);
      const double q = std::max(p, 1.0 - p);
      CHECK(TF.sup_diff(TG) <= q * F.sup_diff(G) + 2.0 / n);
    }
  }
}

TEST_CASE("fixed point is unique from both extreme starts") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  XDistribution X(m);
  const int n = 1000;
  const double xm = 12.0;
  GridFunction hi{xm, n, std::vector<double>(n + 1, 1.0)};
  GridFunction lo{xm, n, std::vector<double>(n + 1, 0.0)};
  for (int it = 0; it < 150; ++it) {
    hi = apply_T(hi, X, m.p);
    lo = apply_T(lo, X, m.p);
  }
  CHECK(hi.sup_diff(lo) < 3e-6);
}

TEST_CASE("solver meets its own stopping contract") {
  ModelParams m(0.25, Interarrival::exponential(2.0), DetService{1.0});
  FixedPointOptions opt;
  opt.n = 2000;
  opt.tol = 1e-6;
  auto r = solve_fixed_point_full(m, opt);
  CHECK(r.residual <= 2.0 * opt.tol);
  CHECK(1.0 - r.grid.values.back() < opt.tol);
  CHECK(r.contraction == Approx(0.75).epsilon(1e-14));
  CHECK(r.iterations > 0);

  // values form a CDF: monotone within rounding, clamped to [0, 1]
  for (int i = 1; i <= r.grid.n; ++i)
    CHECK(r.grid.values[i] >= r.grid.values[i - 1] - 1e-12);
  CHECK(r.grid.values.front() >= 0.0);
  CHECK(r.grid.values.back() <= 1.0);
}

TEST_CASE("heavy tail doubles the domain") {
  ModelParams m(0.9, Interarrival::exponential(1.8), DetService{0.5});
  FixedPointOptions opt;
  opt.n = 2000;
  opt.tol = 1e-7;
  auto r = solve_fixed_point_full(m, opt);
  CHECK(r.domain_doublings >= 1);
  CHECK(1.0 - r.grid.values.back() < opt.tol);
  CHECK(r.residual <= 2.0 * opt.tol);
}

TEST_CASE("atom matches the closed form at p = 0") {
  ModelParams m(0.0, Interarrival::exponential(2.0), DetService{1.0});
  auto g = solve_fixed_point(m, 4000);
  CHECK(g.atom() == Approx(1.0 / 3.0).margin(1e-4));
}

TEST_CASE("solver input validation") {
  ModelParams p1(1.0, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  CHECK_THROWS_AS(solve_fixed_point(p1), NoContraction);

  ModelParams ok(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  FixedPointOptions bad;
  bad.n = 4;
  CHECK_THROWS_AS(solve_fixed_point_full(ok, bad), InputError);
  bad.n = 100;
  bad.tol = 0.0;
  CHECK_THROWS_AS(solve_fixed_point_full(ok, bad), InputError);

  ModelParams flagged(0.5, Interarrival::deterministic(1.0), DetService{2.0});
  CHECK_THROWS_AS(solve_fixed_point(flagged), InputError);
}

TEST_CASE("grid interpolation") {
  GridFunction g{2.0, 4, {0.0, 0.25, 0.5, 0.75, 1.0}};
  CHECK(g.h() == Approx(0.5));
  CHECK(g.atom() == 0.0);
  CHECK(g.value_at(0.75) == Approx(0.375).epsilon(1e-14));
  CHECK(g.value_at(-1.0) == 0.0);
  CHECK(g.value_at(5.0) == 1.0);
  GridFunction o{2.0, 4, {0.0, 0.25, 0.5, 0.75, 0.9}};
  CHECK(g.sup_diff(o) == Approx(0.1).epsilon(1e-14));
}
