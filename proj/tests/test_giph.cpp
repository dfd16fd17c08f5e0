#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

#include "lq/fixedpoint.hpp"
#include "lq/giph.hpp"
#include "lq/simulate.hpp"

using namespace lq;
using Catch::Approx;

namespace {

std::vector<cplx> by_real_then_imag(std::vector<cplx> r) {
  std::sort(r.begin(), r.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return r;
}

double ks_against_fixed_point(const GiphSolution& sol, const ModelParams& m) {
  auto g = solve_fixed_point(m, 4000, 0, 1e-8);
  double d = 0;
  for (int i = 0; i <= 4000; ++i) {
    const double x = i * g.x_max / 4000;
    d = std::max(d, std::abs(sol.cdf(x) - g.value_at(x)));
  }
  return d;
}

void check_solution_invariants(const GiphSolution& sol) {
  CHECK(sol.atom() > 0.0);
  CHECK(sol.atom() <= 1.0);
  CHECK(sol.cdf(0.0) == Approx(sol.atom()).margin(1e-15));
  for (cplx r : sol.roots()) CHECK(r.real() < 0.0);

  cplx norm = sol.atom();
  for (size_t i = 0; i < sol.roots().size(); ++i)
    norm -= sol.coeffs()[i] / sol.roots()[i];
  CHECK(std::abs(norm - 1.0) < 1e-9);
  CHECK(sol.residual() < 1e-7);
  CHECK(sol.cdf(sol.tail_cut()) == Approx(1.0).margin(1e-9));

  // monotone CDF and nonnegative real density over 1e4 points
  const double span = sol.tail_cut();
  double prev = 0;
  for (int i = 0; i <= 10000; ++i) {
    const double x = i * span / 10000;
    const double f = sol.cdf(x);
    CHECK(f >= prev - 1e-12);
    prev = f;
    if (i % 20 == 0) CHECK(sol.density(x) >= -1e-10);
  }
}

}  // namespace

TEST_CASE("characteristic roots for first-order service") {
  // p = 1: (mu+s)(lambda-s) - lambda mu = 0 at s = lambda - mu
  ModelParams p1(1.0, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  auto s1 = solve_giph(p1);
  REQUIRE(s1.roots().size() == 1);
  CHECK(std::abs(s1.roots()[0] - cplx(-1.0)) < 1e-9);

  // p = 1/2: negative root of s^2 + (mu-lambda)s - lambda mu (1-p)
  ModelParams ph(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  auto sh = solve_giph(ph);
  REQUIRE(sh.roots().size() == 1);
  CHECK(std::abs(sh.roots()[0] - cplx((-1.0 - std::sqrt(5.0)) / 2.0)) < 1e-9);
}

TEST_CASE("roots agree with the cleared polynomial oracle") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(1.0, {0.0, 1.0}));
  CharacteristicProblem pb(m);
  auto sol = solve_giph(m);

  // all left-half-plane roots of the denominator-cleared polynomial,
  // located independently through companion eigenvalues
  const Poly cp = detail::cleared_char_poly(pb);
  const int deg = static_cast<int>(cp.size()) - 1;
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) C(i, deg - 1) = -cp[i] / cp[deg];
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(C);
  std::vector<cplx> left;
  for (int i = 0; i < deg; ++i)
    if (es.eigenvalues()[i].real() < 0) left.push_back(es.eigenvalues()[i]);

  auto mine = by_real_then_imag(sol.roots());
  auto ref = by_real_then_imag(left);
  REQUIRE(mine.size() == ref.size());
  for (size_t i = 0; i < mine.size(); ++i) CHECK(std::abs(mine[i] - ref[i]) < 1e-9);

  // residual certificate |D(xi)| <= 1e-9 (mu + |xi|)^N
  for (cplx r : sol.roots()) {
    const double scale = std::pow(pb.mu() + std::abs(r), pb.order());
    CHECK(std::abs(pb.charfun(r)) <= 1e-9 * scale);
  }
}

TEST_CASE("service weight generating value") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  CharacteristicProblem pb(m);
  // P[B <= A] for exponential A is beta evaluated at w = (mu+lambda)/mu
  CHECK(pb.beta_of_w(cplx(1.5)).real() == Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(pb.beta_of_w(cplx(1.0)).real() == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("M/M/1 closed form") {
  ModelParams m(1.0, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  for (const auto& sol : {solve_giph(m), solve_giph_p1(m)}) {
    REQUIRE(sol.roots().size() == 1);
    CHECK(sol.atom() == Approx(0.5).margin(1e-10));
    CHECK(sol.roots()[0].real() == Approx(-1.0).margin(1e-10));
    CHECK(std::abs(sol.roots()[0].imag()) < 1e-10);
    CHECK(sol.coeffs()[0].real() == Approx(0.5).margin(1e-10));
    CHECK(sol.cdf(std::log(2.0)) == Approx(0.75).margin(1e-10));
    CHECK(sol.density(1.0) == Approx(0.5 * std::exp(-1.0)).margin(1e-10));
    CHECK(sol.cdf(sol.tail_cut()) == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("mixture instances pass all invariants and match the fixed point") {
  for (double p : {0.25, 0.5, 0.75}) {
    ModelParams m(p, Interarrival::exponential(1.0), MixedErlang(2.0, {0.3, 0.7}));
    auto sol = solve_giph(m);
    check_solution_invariants(sol);
    CHECK(ks_against_fixed_point(sol, m) < 1e-3);
  }
}

TEST_CASE("other arrival families match the fixed point") {
  ModelParams det(0.5, Interarrival::deterministic(2.0), MixedErlang(2.0, {1.0}));
  auto sd = solve_giph(det);
  check_solution_invariants(sd);
  CHECK(ks_against_fixed_point(sd, det) < 1e-3);

  ModelParams hyp(0.5, Interarrival::hyperexp({0.4, 0.6}, {1.0, 3.0}),
                  MixedErlang(2.0, {0.3, 0.7}));
  auto sh = solve_giph(hyp);
  check_solution_invariants(sh);
  CHECK(ks_against_fixed_point(sh, hyp) < 1e-3);

  ModelParams erl(0.5, Interarrival::erlang(2, 2.0), MixedErlang(2.0, {0.5, 0.5}));
  auto se = solve_giph(erl);
  check_solution_invariants(se);
  CHECK(ks_against_fixed_point(se, erl) < 1e-3);
}

TEST_CASE("simulation agrees with the transform solution") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {0.3, 0.7}));
  auto sol = solve_giph(m);
  SimConfig cfg;
  cfg.samples = 1000000;
  auto r = simulate(m, cfg);
  CHECK(ks_statistic(r.merged, [&](double x) { return sol.cdf(x); }) < 5e-3);
}

TEST_CASE("complex roots come in conjugate pairs") {
  ModelParams m(0.5, Interarrival::exponential(1.0), MixedErlang(3.0, {0.0, 0.0, 1.0}));
  auto sol = solve_giph(m);
  check_solution_invariants(sol);

  bool saw_complex = false;
  for (size_t i = 0; i < sol.roots().size(); ++i) {
    const cplx r = sol.roots()[i];
    if (std::abs(r.imag()) < 1e-12) continue;
    saw_complex = true;
    // find the conjugate partner and compare coefficients
    bool paired = false;
    for (size_t j = 0; j < sol.roots().size(); ++j) {
      if (std::abs(sol.roots()[j] - std::conj(r)) < 1e-9) {
        CHECK(std::abs(sol.coeffs()[j] - std::conj(sol.coeffs()[i])) < 1e-9);
        paired = true;
      }
    }
    CHECK(paired);
  }
  CHECK(saw_complex);  // this instance is known to have a complex pair
  CHECK(ks_against_fixed_point(sol, m) < 1e-3);
}

TEST_CASE("argument principle certifies the root count") {
  ModelParams m2(0.5, Interarrival::exponential(1.0), MixedErlang(2.0, {0.3, 0.7}));
  CharacteristicProblem pb2(m2);
  const double R2 = 10.0 * (pb2.mu() + 1.0);
  CHECK(detail::winding_zero_count([&](cplx z) { return pb2.charfun(z); }, -R2, -1e-9,
                                   -R2, R2) == 2);

  ModelParams m3(0.5, Interarrival::exponential(1.0), MixedErlang(3.0, {0.0, 0.0, 1.0}));
  CharacteristicProblem pb3(m3);
  const double R3 = 10.0 * (pb3.mu() + 1.0);
  CHECK(detail::winding_zero_count([&](cplx z) { return pb3.charfun(z); }, -R3, -1e-9,
                                   -R3, R3) == 3);
}

TEST_CASE("closed form at p = 1 matches the generic path") {
  const std::vector<ModelParams> insts = {
      ModelParams(1.0, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0})),
      ModelParams(1.0, Interarrival::exponential(1.0), MixedErlang(4.0, {0.0, 1.0})),
      ModelParams(1.0, Interarrival::exponential(1.0), MixedErlang(6.0, {0.0, 0.0, 1.0})),
  };
  for (const auto& m : insts) {
    auto a = solve_giph(m);
    auto b = solve_giph_p1(m);
    CHECK(std::abs(a.atom() - b.atom()) < 1e-8);
    auto ra = by_real_then_imag(a.roots());
    auto rb = by_real_then_imag(b.roots());
    REQUIRE(ra.size() == rb.size());
    for (size_t i = 0; i < ra.size(); ++i) CHECK(std::abs(ra[i] - rb[i]) < 1e-8);

    // P[W = 0] = 1 - rho in the classical regime, and the LST normalizes
    CHECK(a.atom() == Approx(0.5).margin(1e-8));
    cplx w0 = b.atom();
    for (size_t i = 0; i < rb.size(); ++i) w0 -= b.coeffs()[i] / b.roots()[i];
    CHECK(std::abs(w0 - 1.0) < 1e-9);
  }
}

TEST_CASE("transform engine input rejection") {
  ModelParams p0(0.0, Interarrival::exponential(1.0), MixedErlang(2.0, {1.0}));
  CHECK_THROWS_AS(solve_giph(p0), InputError);

  ModelParams det(0.5, Interarrival::exponential(1.0), DetService{1.0});
  CHECK_THROWS_AS(solve_giph(det), InputError);

  ModelParams heavy(1.0, Interarrival::exponential(2.0), MixedErlang(1.0, {1.0}));
  CHECK_THROWS_AS(solve_giph(heavy), UnstableP1);
}
