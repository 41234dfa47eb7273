#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "surfpde/special_functions.hpp"

using namespace surfpde;

namespace {

// Tensor Gauss-Legendre on the Duffy-collapsed square, used as an independent
// integration oracle on T0 here and in the quadrature tests.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = 0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
      }
      double dp = n * (t * p0 - p1) / (t * t - 1);
      double dt = p0 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[i] = t;
    double p0 = 1, p1 = 0;
    for (int j = 0; j < n; ++j) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
    }
    double dp = n * (t * p0 - p1) / (t * t - 1);
    w[i] = 2 / ((1 - t * t) * dp * dp);
  }
}

template <class F>
double integrate_T0(F f, int n = 40) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    double s = (x[i] + 1) / 2, ws = w[i] / 2;
    for (int j = 0; j < n; ++j) {
      double t = (x[j] + 1) / 2, wt = w[j] / 2;
      sum += ws * wt * (1 - t) * f(s * (1 - t), t);
    }
  }
  return sum;
}

double rel_err(Cplx got, Cplx want) {
  return std::abs(got - want) / std::abs(want);
}

}  // namespace

TEST_CASE("hankel matches the golden table") {
  std::ifstream in(std::string(SURFPDE_DATA_DIR) + "/hankel_golden.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);  // header
  int rows = 0;
  double worst = 0;
  Cplx worst_z;
  while (std::getline(in, line)) {
    for (auto& c : line)
      if (c == ',') c = ' ';
    std::istringstream ss(line);
    double d[8];
    for (double& v : d) ss >> v;
    Cplx z(d[0], d[1]);
    HankelTriple h = hankel(z);
    double e = std::max({rel_err(h.h0, {d[2], d[3]}), rel_err(h.h1, {d[4], d[5]}),
                         rel_err(h.h2, {d[6], d[7]})});
    if (e > worst) {
      worst = e;
      worst_z = z;
    }
    ++rows;
  }
  CHECK(rows > 600);
  INFO("worst rel err ", worst, " at z = ", worst_z.real(), " + ", worst_z.imag(), "i");
  CHECK(worst <= 1e-12);
}

TEST_CASE("hankel(1) reference value") {
  HankelTriple h = hankel(1.0);
  CHECK(std::abs(h.h0 - Cplx(0.76519768656, 0.08825696421)) < 1e-10);
}

TEST_CASE("hankel log behaviour near zero") {
  // h0 - (2i/pi) log z stays bounded as z -> 0
  for (double az : {1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
    Cplx z(az * 0.8, az * 0.6);
    Cplx rem = hankel(z).h0 - Cplx(0, M_2_PI) * std::log(z);
    CHECK(std::abs(rem) < 2.0);
  }
}

TEST_CASE("hankel recurrence residual on random arguments") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logr(std::log(1e-6), std::log(50.0));
  std::uniform_real_distribution<double> arg(0.0, M_PI / 2);
  for (int i = 0; i < 100; ++i) {
    Cplx z = std::polar(std::exp(logr(rng)), arg(rng));
    HankelTriple h = hankel(z);
    Cplx resid = h.h2 - (2.0 / z * h.h1 - h.h0);
    double scale = std::max({std::abs(h.h0), std::abs(h.h1), std::abs(h.h2)});
    CHECK(std::abs(resid) / scale <= 1e-12);
  }
}

TEST_CASE("hankel rejects zero") {
  CHECK_THROWS_AS(hankel(Cplx(0, 0)), std::domain_error);
}

TEST_CASE("sqrt_up branch") {
  CHECK(std::abs(sqrt_up(Cplx(4, 0)) - Cplx(2, 0)) < 1e-15);
  CHECK(std::abs(sqrt_up(Cplx(-4, 0)) - Cplx(0, 2)) < 1e-15);
  Cplx s = sqrt_up(Cplx(0, -4));  // both roots off-axis; take the upper one
  CHECK(s.imag() > 0);
  CHECK(std::abs(s * s - Cplx(0, -4)) < 1e-14);
}

TEST_CASE("koornwinder constant and count") {
  auto vals = koornwinder(16, 0.21, 0.37);
  CHECK(vals.size() == 136);
  CHECK(vals[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  auto vals1 = koornwinder(1, 0.9, 0.05);
  CHECK(vals1.size() == 1);
  CHECK(vals1[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("koornwinder orthonormality (p = 8) against the oracle quadrature") {
  const int p = 8, n = p * (p + 1) / 2;
  double worst = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a; b < n; ++b) {
      double g = integrate_T0([&](double u, double v) {
        auto k = koornwinder(p, u, v);
        return k[a] * k[b];
      });
      worst = std::max(worst, std::abs(g - (a == b ? 1.0 : 0.0)));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("koornwinder partial sums reproduce low-degree polynomials") {
  // project u^2 v and (u+v)^3 onto the basis with the oracle, then compare
  // the expansion against direct evaluation at random points
  const int p = 8, n = p * (p + 1) / 2;
  auto check_poly = [&](auto f) {
    std::vector<double> coef(n);
    for (int a = 0; a < n; ++a)
      coef[a] = integrate_T0([&](double u, double v) {
        return f(u, v) * koornwinder(p, u, v)[a];
      });
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      double u = uni(rng), v = uni(rng) * (1 - u);
      auto k = koornwinder(p, u, v);
      double s = 0;
      for (int a = 0; a < n; ++a) s += coef[a] * k[a];
      CHECK(std::abs(s - f(u, v)) <= 1e-10);
    }
  };
  check_poly([](double u, double v) { return u * u * v; });
  check_poly([](double u, double v) { return std::pow(u + v, 3.0); });
}

TEST_CASE("koornwinder stable at the collapsed edge v near 1") {
  auto vals = koornwinder(16, 1e-9, 1 - 2e-9);
  for (double x : vals) CHECK(std::isfinite(x));
}
