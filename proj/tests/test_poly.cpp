#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "lq/poly.hpp"

using namespace lq;
using Catch::Approx;

namespace {

std::vector<cplx> sorted_roots(std::vector<cplx> r) {
  std::sort(r.begin(), r.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return r;
}

// companion-matrix eigenvalues, the standard reference
std::vector<cplx> eigen_roots(const Poly& p) {
  const int n = static_cast<int>(p.size()) - 1;
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) C(i, n - 1) = -p[i] / p[n];
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(C);
  std::vector<cplx> r(n);
  for (int i = 0; i < n; ++i) r[i] = es.eigenvalues()[i];
  return r;
}

}  // namespace

TEST_CASE("polynomial evaluation") {
  Poly p = {1.0, 2.0, 3.0};  // 1 + 2x + 3x^2
  CHECK(poly_eval(p, cplx(2.0)).real() == Approx(17.0).epsilon(1e-15));
  CHECK(poly_eval(p, cplx(0.0)).real() == Approx(1.0).epsilon(1e-15));
  const cplx v = poly_eval(p, cplx(0.0, 1.0));  // 1 + 2i - 3
  CHECK(v.real() == Approx(-2.0).margin(1e-15));
  CHECK(v.imag() == Approx(2.0).margin(1e-15));
}

TEST_CASE("polynomial arithmetic") {
  Poly a = {1.0, 1.0};   // 1 + x
  Poly b = {1.0, -1.0};  // 1 - x
  const Poly prod = poly_mul(a, b);
  REQUIRE(prod.size() == 3);
  CHECK(prod[0].real() == Approx(1.0));
  CHECK(std::abs(prod[1]) < 1e-15);
  CHECK(prod[2].real() == Approx(-1.0));

  const Poly sum = poly_add({1.0, 2.0, 3.0}, {5.0});
  REQUIRE(sum.size() == 3);
  CHECK(sum[0].real() == Approx(6.0));
  CHECK(sum[2].real() == Approx(3.0));

  const Poly sc = poly_scale({1.0, 2.0}, cplx(3.0));
  CHECK(sc[1].real() == Approx(6.0));

  Poly t = {1.0, 2.0, 1e-18, 0.0};
  poly_trim(t, 1e-12);
  CHECK(t.size() == 2);
}

TEST_CASE("roots of small factored polynomials") {
  // (x - 1)(x - 2) = 2 - 3x + x^2
  auto r = sorted_roots(poly_roots({2.0, -3.0, 1.0}));
  REQUIRE(r.size() == 2);
  CHECK(std::abs(r[0] - cplx(1.0)) < 1e-12);
  CHECK(std::abs(r[1] - cplx(2.0)) < 1e-12);

  // (x - 1)(x^2 + 1) = -1 + x - x^2 + x^3
  auto c = sorted_roots(poly_roots({-1.0, 1.0, -1.0, 1.0}));
  REQUIRE(c.size() == 3);
  CHECK(std::abs(c[0] - cplx(0.0, -1.0)) < 1e-12);
  CHECK(std::abs(c[1] - cplx(0.0, 1.0)) < 1e-12);
  CHECK(std::abs(c[2] - cplx(1.0)) < 1e-12);
}

TEST_CASE("roots of products of linear factors") {
  // roots 1..6 by expanding the factors
  Poly p = {1.0};
  for (int k = 1; k <= 6; ++k) p = poly_mul(p, {-static_cast<double>(k), 1.0});
  auto r = sorted_roots(poly_roots(p));
  REQUIRE(r.size() == 6);
  for (int k = 0; k < 6; ++k) CHECK(std::abs(r[k] - cplx(k + 1.0)) < 1e-8);
}

TEST_CASE("roots agree with companion eigenvalues") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    Poly p(9);
    for (auto& c : p) c = cplx(u(gen), u(gen));
    p.back() += 3.0;  // keep the leading coefficient well away from zero
    auto mine = sorted_roots(poly_roots(p));
    auto ref = sorted_roots(eigen_roots(p));
    REQUIRE(mine.size() == ref.size());
    for (size_t i = 0; i < mine.size(); ++i) CHECK(std::abs(mine[i] - ref[i]) < 1e-7);
  }
}

TEST_CASE("computed roots annihilate the polynomial") {
  Poly p = {4.0, -2.0, 0.5, 1.0, 2.0};
  double scale = 0;
  for (cplx c : p) scale = std::max(scale, std::abs(c));
  for (cplx r : poly_roots(p)) {
    CHECK(std::abs(poly_eval(p, r)) < 1e-10 * scale * std::pow(1.0 + std::abs(r), 4));
  }
}
