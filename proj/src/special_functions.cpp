#include "surfpde/special_functions.hpp"

#include <cmath>
#include <stdexcept>

namespace surfpde {

namespace {

// ---------------------------------------------------------------------------
// Double-double kernel (Dekker/Knuth error-free transforms).  The ascending
// Hankel series cancels by up to e^{|z|+Im z}; between the plain-double zone
// and the asymptotic crossover that ratio reaches ~e^31, which eats 14 of the
// 16 double digits.  Two doubles (~32 digits) leave the result at ~1e-18.

struct dd {
  double hi = 0, lo = 0;
};

inline dd quick_two_sum(double a, double b) {
  double s = a + b;
  return {s, b - (s - a)};
}

inline dd two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

inline dd two_prod(double a, double b) {
  double p = a * b;
  return {p, std::fma(a, b, -p)};
}

inline dd dadd(dd a, dd b) {
  dd s = two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  return quick_two_sum(s.hi, s.lo);
}

inline dd dadd(dd a, double b) {
  dd s = two_sum(a.hi, b);
  s.lo += a.lo;
  return quick_two_sum(s.hi, s.lo);
}

inline dd dneg(dd a) { return {-a.hi, -a.lo}; }
inline dd dsub(dd a, dd b) { return dadd(a, dneg(b)); }

inline dd dmul(dd a, dd b) {
  dd p = two_prod(a.hi, b.hi);
  p.lo += a.hi * b.lo + a.lo * b.hi;
  return quick_two_sum(p.hi, p.lo);
}

inline dd dmul(dd a, double b) {
  dd p = two_prod(a.hi, b);
  p.lo += a.lo * b;
  return quick_two_sum(p.hi, p.lo);
}

inline dd ddiv(dd a, dd b) {
  double q1 = a.hi / b.hi;
  dd r = dsub(a, dmul(b, q1));
  double q2 = r.hi / b.hi;
  r = dsub(r, dmul(b, q2));
  double q3 = r.hi / b.hi;
  return dadd(quick_two_sum(q1, q2), q3);
}

inline dd ddiv(dd a, double b) { return ddiv(a, dd{b, 0}); }
inline dd dinv(double b) { return ddiv(dd{1, 0}, dd{b, 0}); }

inline dd dsqrt(dd a) {
  if (a.hi == 0) return {0, 0};
  double y = std::sqrt(a.hi);
  dd r = dsub(a, two_prod(y, y));
  return dadd(dd{y, 0}, r.hi / (2 * y));
}

const dd DD_PI = {3.141592653589793, 1.2246467991473532e-16};
const dd DD_LN2 = {0.6931471805599453, 2.3190468138462996e-17};
const dd DD_GAMMA = {0.5772156649015329, -4.942915152430645e-18};

inline dd dln(dd a) {
  int e;
  double mh = std::frexp(a.hi, &e);
  if (mh < 0.7071067811865476) {
    mh *= 2;
    e -= 1;
  }
  dd m = {mh, std::ldexp(a.lo, -e)};
  dd u = ddiv(dadd(m, -1.0), dadd(m, 1.0));  // |u| <= 0.172
  dd u2 = dmul(u, u);
  dd s = {0, 0}, t = u;
  for (int k = 0; k < 25; ++k) {
    s = dadd(s, ddiv(t, double(2 * k + 1)));
    t = dmul(t, u2);
  }
  return dadd(dmul(s, 2.0), dmul(DD_LN2, double(e)));
}

inline dd datan(dd t) {
  dd x = t;
  for (int i = 0; i < 3; ++i) {  // angle-halving: atan(x) = 2 atan(x/(1+sqrt(1+x^2)))
    dd s = dsqrt(dadd(dmul(x, x), 1.0));
    x = ddiv(x, dadd(s, 1.0));
  }
  dd x2 = dmul(x, x);
  dd sum = {0, 0}, term = x;
  for (int k = 0; k < 18; ++k) {
    dd c = ddiv(term, double(2 * k + 1));
    sum = (k % 2 == 0) ? dadd(sum, c) : dsub(sum, c);
    term = dmul(term, x2);
  }
  return dmul(sum, 8.0);
}

inline dd datan2(dd y, dd x) {
  if (y.hi == 0 && x.hi >= 0) return {0, 0};
  dd hpi = dmul(DD_PI, 0.5);
  if (std::abs(y.hi) <= std::abs(x.hi)) {
    dd base = datan(ddiv(y, x));
    if (x.hi > 0) return base;
    return (y.hi >= 0) ? dadd(base, DD_PI) : dsub(base, DD_PI);
  }
  dd base = datan(ddiv(x, y));
  return (y.hi > 0) ? dsub(hpi, base) : dsub(dneg(hpi), base);
}

struct ddc {
  dd re, im;
};

inline ddc cadd(ddc a, ddc b) { return {dadd(a.re, b.re), dadd(a.im, b.im)}; }
inline ddc csub(ddc a, ddc b) { return {dsub(a.re, b.re), dsub(a.im, b.im)}; }
inline ddc cmul(ddc a, ddc b) {
  return {dsub(dmul(a.re, b.re), dmul(a.im, b.im)),
          dadd(dmul(a.re, b.im), dmul(a.im, b.re))};
}
inline ddc cmul(ddc a, dd s) { return {dmul(a.re, s), dmul(a.im, s)}; }
inline ddc cmul(ddc a, double s) { return {dmul(a.re, s), dmul(a.im, s)}; }
inline ddc cdiv(ddc a, double s) { return {ddiv(a.re, s), ddiv(a.im, s)}; }
inline ddc mul_i(ddc a) { return {dneg(a.im), a.re}; }

// ---------------------------------------------------------------------------
// Ascending series, J/Y form (DLMF 10.2.2, 10.8.1):
//   J0 = sum t0_k,                      t0_k = (-z^2/4)^k / (k!)^2
//   Y0 = (2/pi) [ L J0 - sum_{k>=1} H_k t0_k ],        L = ln(z/2) + gamma
//   J1 = (z/2) sum t1_k,                t1_k = (-z^2/4)^k / (k! (k+1)!)
//   Y1 = (2/pi) [ L J1 - 1/z - (z/4) sum (H_k + H_{k+1}) t1_k ]
// H2 from the recurrence (2/z)H1 - H0, harmless here: the 1/z^2 pole of H2
// dominates at small z and (2/z)H1 is a small correction at large z.

HankelTriple hankel_series_dd(Cplx zc) {
  ddc z = {dd{zc.real(), 0}, dd{zc.imag(), 0}};
  ddc mq = cmul(cmul(z, z), -0.25);  // -z^2/4
  ddc t0 = {dd{1, 0}, dd{0, 0}};
  ddc t1 = t0;
  ddc J0 = t0, S0 = {dd{0, 0}, dd{0, 0}};
  ddc T1 = t0, S1 = t0;  // k = 0: H_0 + H_1 = 1
  dd Hk = {0, 0};
  double maxmag = 1;
  for (int k = 1; k <= 200; ++k) {
    t0 = cdiv(cmul(t0, mq), double(k) * k);
    t1 = cdiv(cmul(t1, mq), double(k) * (k + 1));
    Hk = dadd(Hk, dinv(k));
    dd Hk1 = dadd(Hk, dinv(k + 1));
    J0 = cadd(J0, t0);
    S0 = cadd(S0, cmul(t0, Hk));
    T1 = cadd(T1, t1);
    S1 = cadd(S1, cmul(t1, dadd(Hk, Hk1)));
    double m = std::abs(t0.re.hi) + std::abs(t0.im.hi);
    maxmag = std::max(maxmag, m);
    if (m < 1e-38 * maxmag) break;
  }
  dd r2 = dadd(dmul(z.re, z.re), dmul(z.im, z.im));
  ddc L = {dadd(dsub(dmul(dln(r2), 0.5), DD_LN2), DD_GAMMA), datan2(z.im, z.re)};
  ddc inv_z = {ddiv(z.re, r2), dneg(ddiv(z.im, r2))};
  dd two_over_pi = ddiv(dd{2, 0}, DD_PI);

  ddc J1 = cmul(cmul(z, T1), 0.5);
  ddc Y0 = cmul(csub(cmul(L, J0), S0), two_over_pi);
  ddc Y1 = cmul(csub(csub(cmul(L, J1), inv_z), cmul(cmul(z, S1), 0.25)), two_over_pi);
  ddc H0 = cadd(J0, mul_i(Y0));
  ddc H1 = cadd(J1, mul_i(Y1));
  ddc H2 = csub(cmul(cmul(inv_z, H1), 2.0), H0);
  auto fold = [](ddc w) { return Cplx(w.re.hi + w.re.lo, w.im.hi + w.im.lo); };
  return {fold(H0), fold(H1), fold(H2)};
}

// Same series in plain doubles; valid while the cancellation stays under ~1e3,
// i.e. |z| + max(Im z, 0) <= 7.
HankelTriple hankel_series_double(Cplx z) {
  const double gamma = 0.5772156649015329;
  Cplx mq = -0.25 * z * z;
  Cplx t0 = 1, t1 = 1, J0 = 1, S0 = 0, T1 = 1, S1 = 1;
  double Hk = 0, maxmag = 1;
  for (int k = 1; k <= 60; ++k) {
    t0 *= mq / (double(k) * k);
    t1 *= mq / (double(k) * (k + 1));
    Hk += 1.0 / k;
    double Hk1 = Hk + 1.0 / (k + 1);
    J0 += t0;
    S0 += t0 * Hk;
    T1 += t1;
    S1 += t1 * (Hk + Hk1);
    double m = std::abs(t0);
    maxmag = std::max(maxmag, m);
    if (m < 1e-20 * maxmag) break;
  }
  Cplx L = std::log(z) - std::log(2.0) + gamma;
  Cplx J1 = 0.5 * z * T1;
  Cplx Y0 = M_2_PI * (L * J0 - S0);
  Cplx Y1 = M_2_PI * (L * J1 - 1.0 / z - 0.25 * z * S1);
  Cplx H0 = J0 + Cplx(0, 1) * Y0;
  Cplx H1 = J1 + Cplx(0, 1) * Y1;
  return {H0, H1, 2.0 / z * H1 - H0};
}

// Poincare expansion H_nu ~ sqrt(2/(pi z)) e^{i(z-(2nu+1)pi/4)} sum i^k a_k/z^k
// with a_k = a_{k-1} (4nu^2-(2k-1)^2)/(8k); truncated at the smallest term,
// whose size ~e^{-2|z|} sets the crossover radius.
HankelTriple hankel_asymptotic(Cplx z) {
  Cplx pref = std::sqrt(2.0 / (M_PI * z));
  Cplx eiz = std::exp(Cplx(-z.imag(), z.real()));
  Cplx i_over_z = Cplx(0, 1) / z;
  auto S = [&](double nu) {
    double fournu2 = 4 * nu * nu;
    Cplx sum = 1, term = 1;
    double prev = 1e300;
    for (int k = 1; k <= 80; ++k) {
      term *= i_over_z * ((fournu2 - (2.0 * k - 1) * (2.0 * k - 1)) / (8.0 * k));
      double m = std::abs(term);
      if (m > prev) break;
      sum += term;
      prev = m;
      if (m < 1e-18) break;
    }
    return sum;
  };
  const Cplx e0(M_SQRT1_2, -M_SQRT1_2);   // e^{-i pi/4}
  const Cplx e1(-M_SQRT1_2, -M_SQRT1_2);  // e^{-3i pi/4}
  Cplx h0 = pref * eiz * e0 * S(0);
  Cplx h1 = pref * eiz * e1 * S(1);
  return {h0, h1, 2.0 / z * h1 - h0};
}

}  // namespace

HankelTriple hankel(Cplx z) {
  double az = std::abs(z);
  if (!(az > 0)) throw std::domain_error("hankel: argument must be nonzero");
  if (az >= 15.5) return hankel_asymptotic(z);
  if (az + std::max(z.imag(), 0.0) <= 7.0) return hankel_series_double(z);
  return hankel_series_dd(z);
}

Cplx sqrt_up(Cplx w) {
  Cplx s = std::sqrt(w);
  if (s.imag() < 0 || (s.imag() == 0 && s.real() < 0)) s = -s;
  return s;
}

void koornwinder(int p, double u, double v, double* out) {
  if (p < 1) throw std::domain_error("koornwinder: p >= 1 required");
  // q_j = P_j(xi) (1-v)^j with xi = 2u/(1-v) - 1, via the singularity-free
  // recurrence (j+1) q_{j+1} = (2j+1)(2u-(1-v)) q_j - j (1-v)^2 q_{j-1}.
  const double w = 1 - v, w2 = w * w, r = 2 * u - w, eta = 2 * v - 1;
  double qprev = 0, q = 1;
  for (int j = 0; j < p; ++j) {
    const double a = 2 * j + 1;
    // P_m^{(a,0)}(eta) ascending in m; out index is (k)(k+1)/2 + j, k = j+m
    double pm1 = 0, pm = 1;
    for (int m = 0; m + j < p; ++m) {
      if (m == 1) {
        pm1 = pm;
        pm = (a + 2) * eta / 2 + a / 2;
      } else if (m >= 2) {
        const double c1 = 2.0 * m * (m + a) * (2 * m + a - 2);
        const double c2 = (2 * m + a - 1) * ((2 * m + a) * (2 * m + a - 2) * eta + a * a);
        const double c3 = 2.0 * (m + a - 1) * (m - 1) * (2 * m + a);
        const double cur = (c2 * pm - c3 * pm1) / c1;
        pm1 = pm;
        pm = cur;
      }
      const int k = j + m;
      out[k * (k + 1) / 2 + j] = std::sqrt(2 * a * (m + j + 1)) * q * pm;
    }
    const double qnext = ((2 * j + 1) * r * q - j * w2 * qprev) / (j + 1);
    qprev = q;
    q = qnext;
  }
}

std::vector<double> koornwinder(int p, double u, double v) {
  std::vector<double> out(p * (p + 1) / 2);
  koornwinder(p, u, v, out.data());
  return out;
}

}  // namespace surfpde
