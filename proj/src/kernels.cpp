#include "surfpde/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace surfpde {

namespace {

constexpr double kGamma = 0.5772156649015329;
constexpr Cplx kI{0, 1};

Vec3 tangential(const Vec3& v, const Vec3& n) { return v - v.dot(n) * n; }

}  // namespace

Coefficients Coefficients::laplace_beltrami() {
  Coefficients co;
  co.a = [](const Vec3&) { return 1.0; };
  co.a_constant = true;
  co.a0 = 1;
  co.b_zero = true;
  co.c_zero = true;
  co.c_constant = true;
  return co;
}

Coefficients Coefficients::helmholtz(Cplx c0, double a0) {
  Coefficients co;
  co.a = [a0](const Vec3&) { return a0; };
  co.c = [c0](const Vec3&) { return c0; };
  co.a_constant = true;
  co.a0 = a0;
  co.b_zero = true;
  co.c_constant = true;
  co.c_zero = (c0 == Cplx(0));
  co.c0 = c0;
  return co;
}

GreenTriple green(double r, double a, Cplx c) {
  if (!(r > 0)) throw std::domain_error("green: r must be positive");
  if (c == Cplx(0)) {
    const double s = 1 / (2 * M_PI * a);
    return {std::log(r) * s, s / r, -s / (r * r)};
  }
  const Cplx kappa = sqrt_up(c / a);
  const Cplx z = kappa * r;
  GreenTriple out;
  if (std::abs(z) < 1e-6) {
    // log-singular expansion through z^2; the next order is z^4 log z and
    // falls below double rounding over this whole range
    const Cplx L = std::log(z / 2.0) + kGamma;
    const Cplx z2 = z * z;
    out.G = (L * (1.0 - z2 / 4.0) + z2 / 4.0) / (2 * M_PI * a) -
            kI * (1.0 - z2 / 4.0) / (4 * a);
    out.Gp = 1.0 / (2 * M_PI * a * r) - kappa * kappa * r * L / (4 * M_PI * a) +
             kappa * kappa * r * (1 / (8 * M_PI) + kI / 8.0) / a;
  } else {
    const HankelTriple h = hankel(z);
    out.G = -kI / (4 * a) * h.h0;
    out.Gp = kI * kappa / (4 * a) * h.h1;
  }
  out.Gpp = -out.Gp / r - (c / a) * out.G;
  return out;
}

// ---------------------------------------------------------------------------
// GreenTable

namespace {

// Chebyshev points of the first kind on [-1, 1] and the matching transform.
void cheb_coeffs(const Cplx* vals, int n, Cplx* coef) {
  for (int j = 0; j < n; ++j) {
    Cplx s = 0;
    for (int k = 0; k < n; ++k)
      s += vals[k] * std::cos(j * M_PI * (k + 0.5) / n);
    coef[j] = s * (2.0 / n);
  }
  coef[0] *= 0.5;
}

Cplx clenshaw(const Cplx* coef, int n, double t) {
  Cplx b1 = 0, b2 = 0;
  for (int j = n - 1; j >= 1; --j) {
    Cplx b0 = 2 * t * b1 - b2 + coef[j];
    b2 = b1;
    b1 = b0;
  }
  return t * b1 - b2 + coef[0];
}

}  // namespace

GreenTable::GreenTable(double a0, Cplx c0, double r_min, double r_max)
    : a0_(a0), c0_(c0) {
  if (!(a0 > 0) || !(r_min > 0) || !(r_max > r_min))
    throw std::invalid_argument("GreenTable: bad range");
  if (c0 == Cplx(0)) {
    trivial_ = true;
    return;
  }
  kappa_ = sqrt_up(c0 / a0);
  r_min_ = r_min;
  r_max_ = r_max;
  const double cap = 1.5 / std::abs(kappa_);
  double lo = r_min;
  while (lo < r_max) {
    double hi = std::min(r_max, std::min(2 * lo, lo + cap));
    Panel pa;
    pa.lo = lo;
    pa.hi = hi;
    Cplx vg[kPts], vgp[kPts], vgpp[kPts];
    for (int k = 0; k < kPts; ++k) {
      const double t = std::cos(M_PI * (k + 0.5) / kPts);
      const double r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
      GreenTriple g = green(r, a0, c0);
      vg[k] = g.G;
      vgp[k] = g.Gp;
      vgpp[k] = g.Gpp;
    }
    cheb_coeffs(vg, kPts, pa.cg);
    cheb_coeffs(vgp, kPts, pa.cgp);
    cheb_coeffs(vgpp, kPts, pa.cgpp);
    starts_.push_back(lo);
    panels_.push_back(pa);
    lo = hi;
  }
}

int GreenTable::find_panel(double r) const {
  if (!(r >= r_min_ && r <= r_max_))
    throw std::out_of_range("GreenTable: r outside tabulated range");
  int i = int(std::upper_bound(starts_.begin(), starts_.end(), r) -
              starts_.begin()) -
          1;
  return std::max(i, 0);
}

GreenTriple GreenTable::eval(double r) const {
  if (trivial_) return green(r, a0_, 0);
  const Panel& pa = panels_[find_panel(r)];
  const double t = (2 * r - pa.lo - pa.hi) / (pa.hi - pa.lo);
  return {clenshaw(pa.cg, kPts, t), clenshaw(pa.cgp, kPts, t),
          clenshaw(pa.cgpp, kPts, t)};
}

Cplx GreenTable::eval_G(double r) const {
  if (trivial_) return std::log(r) / (2 * M_PI * a0_);
  const Panel& pa = panels_[find_panel(r)];
  const double t = (2 * r - pa.lo - pa.hi) / (pa.hi - pa.lo);
  return clenshaw(pa.cg, kPts, t);
}

Cplx GreenTable::eval_Gp(double r) const {
  if (trivial_) return 1.0 / (2 * M_PI * a0_ * r);
  const Panel& pa = panels_[find_panel(r)];
  const double t = (2 * r - pa.lo - pa.hi) / (pa.hi - pa.lo);
  return clenshaw(pa.cgp, kPts, t);
}

ChebTable::ChebTable(const std::function<Cplx(double)>& f, double r_min,
                     double r_max, double max_panel) {
  if (!(r_min > 0) || !(r_max > r_min) || !(max_panel > 0))
    throw std::invalid_argument("ChebTable: bad range");
  lo_ = r_min;
  hi_ = r_max;
  double lo = r_min;
  while (lo < r_max) {
    double hi = std::min(r_max, std::min(2 * lo, lo + max_panel));
    Panel pa;
    pa.lo = lo;
    pa.hi = hi;
    Cplx vals[kPts];
    for (int k = 0; k < kPts; ++k) {
      const double t = std::cos(M_PI * (k + 0.5) / kPts);
      vals[k] = f(0.5 * (lo + hi) + 0.5 * (hi - lo) * t);
    }
    cheb_coeffs(vals, kPts, pa.c);
    starts_.push_back(lo);
    panels_.push_back(pa);
    lo = hi;
  }
}

Cplx ChebTable::eval(double r) const {
  if (!(r >= lo_ && r <= hi_))
    throw std::out_of_range("ChebTable: r outside tabulated range");
  int i = int(std::upper_bound(starts_.begin(), starts_.end(), r) -
              starts_.begin()) -
          1;
  const Panel& pa = panels_[std::max(i, 0)];
  const double t = (2 * r - pa.lo - pa.hi) / (pa.hi - pa.lo);
  return clenshaw(pa.c, kPts, t);
}

// ---------------------------------------------------------------------------
// parametrix and remainder

TargetSide make_target(const SurfaceSample& s, const Coefficients& co) {
  TargetSide t;
  t.x = s.x;
  t.n = s.n;
  t.H = s.H;
  t.a = co.eval_a(s.x);
  t.c = co.eval_c(s.x);
  if (!co.a_constant) t.grad_a_t = tangential(co.grad_a(s.x), s.n);
  if (!co.b_zero) t.b_t = tangential(co.b(s.x), s.n);
  return t;
}

Cplx remainder_lb(const Vec3& x, const Vec3& n, double H, const Vec3& xp) {
  const Vec3 rv = x - xp;
  const double r2 = rv.squaredNorm();
  if (r2 == 0) throw std::domain_error("remainder: coincident points");
  const double nr = n.dot(rv);
  return Cplx((nr * nr / r2 - H * nr) / (M_PI * r2));
}

Cplx remainder_general(const TargetSide& t, const Vec3& xp, double src_a,
                       Cplx src_c, const GreenTriple& g) {
  const Vec3 rv = t.x - xp;
  const double r = rv.norm();
  if (r == 0) throw std::domain_error("remainder: coincident points");
  const Vec3 rhat = rv / r;
  const double nr = t.n.dot(rv);
  Cplx R = -t.a * g.Gpp * (nr * nr) / (r * r) +
           t.a * g.Gp * (nr * nr) / (r * r * r) -
           2 * t.a * t.H * (nr / r) * g.Gp + (t.c - t.a * src_c / src_a) * g.G;
  if (t.grad_a_t != Vec3::Zero()) R += t.grad_a_t.dot(rhat) * g.Gp;
  if (t.b_t != Vec3::Zero()) R += g.Gp * t.b_t.dot(rhat);
  return R;
}

namespace {

// constant-coefficient Helmholtz remainder via the Hankel recombination of
// the second and third terms; equals the general path to rounding
Cplx remainder_helm(const Vec3& x, const Vec3& n, double H, const Vec3& xp,
                    double a0, Cplx c0) {
  const Vec3 rv = x - xp;
  const double r = rv.norm();
  if (r == 0) throw std::domain_error("remainder: coincident points");
  const Cplx kappa = sqrt_up(c0 / a0);
  const HankelTriple h = hankel(kappa * r);
  const double nr = n.dot(rv);
  return kI * c0 / (4 * a0) * h.h2 * (nr * nr) / (r * r) -
         kI * kappa * 0.5 * h.h1 * H * nr / r;
}

Cplx grad_source_r(const SurfaceSample& x, const Vec3& xp,
                   const Coefficients& co, const Vec3& nu) {
  const Vec3 rv = x.x - xp;
  const double r2 = rv.squaredNorm();
  if (r2 == 0) throw std::domain_error("kernel_eval: coincident points");
  const double nr = x.n.dot(rv);
  const double vn = nu.dot(x.n);
  const double vr = nu.dot(rv);
  const double H = x.H;
  if (co.c_zero) {
    const double r4 = r2 * r2;
    return Cplx((-2 * nr * vn / r4 + 4 * nr * nr * vr / (r4 * r2) +
                 H * vn / r2 - 2 * H * nr * vr / r4) /
                M_PI);
  }
  const double r = std::sqrt(r2);
  const Cplx kappa = sqrt_up(co.c0 / co.a0);
  const Cplx z = kappa * r;
  const HankelTriple h = hankel(z);
  const Cplx pre1 = kI * co.c0 / (4 * co.a0);
  const Cplx p1 = pre1 * h.h2 / r2;
  const Cplx p1p = pre1 * (kappa * (h.h1 - 2.0 / z * h.h2) / r2 -
                           2.0 * h.h2 / (r2 * r));
  const Cplx pre2 = -kI * kappa * 0.5;
  const Cplx p2 = pre2 * h.h1 / r;
  const Cplx p2p = pre2 * (kappa * (h.h0 - h.h1 / z) / r - h.h1 / r2);
  // source gradient through rv = x - xp only: d(nr)/dxp = -n, d r/dxp = -rhat
  return -p1p * (vr / r) * nr * nr - 2.0 * p1 * nr * vn -
         p2p * (vr / r) * H * nr - p2 * H * vn;
}

}  // namespace

Cplx parametrix(const SurfaceSample& x, const SurfaceSample& xp,
                const Coefficients& co) {
  return parametrix(x.x, xp, co);
}

Cplx parametrix(const Vec3& x, const SurfaceSample& xp,
                const Coefficients& co) {
  const double r = (x - xp.x).norm();
  if (r == 0) throw std::domain_error("parametrix: coincident points");
  return green(r, co.eval_a(xp.x), co.eval_c(xp.x)).G;
}

Cplx remainder(const SurfaceSample& x, const SurfaceSample& xp,
               const Coefficients& co) {
  if (co.a_constant && co.b_zero && co.c_zero)
    return remainder_lb(x.x, x.n, x.H, xp.x);
  if (co.a_constant && co.b_zero && co.c_constant)
    return remainder_helm(x.x, x.n, x.H, xp.x, co.a0, co.c0);
  const TargetSide t = make_target(x, co);
  const double sa = co.eval_a(xp.x);
  const Cplx sc = co.eval_c(xp.x);
  const double r = (x.x - xp.x).norm();
  if (r == 0) throw std::domain_error("remainder: coincident points");
  return remainder_general(t, xp.x, sa, sc, green(r, sa, sc));
}

Cplx kernel_eval(KernelId id, const SurfaceSample& x, const SurfaceSample& xp,
                 const Coefficients& co, const Vec3* direction) {
  return kernel_eval_src(id, x, xp.x, co, direction);
}

Cplx kernel_eval_src(KernelId id, const SurfaceSample& x, const Vec3& xp,
                     const Coefficients& co, const Vec3* direction) {
  switch (id) {
    case KernelId::K: {
      const double r = (x.x - xp).norm();
      if (r == 0) throw std::domain_error("kernel_eval: coincident points");
      return green(r, co.eval_a(xp), co.eval_c(xp)).G;
    }
    case KernelId::R: {
      if (co.a_constant && co.b_zero && co.c_zero)
        return remainder_lb(x.x, x.n, x.H, xp);
      if (co.a_constant && co.b_zero && co.c_constant)
        return remainder_helm(x.x, x.n, x.H, xp, co.a0, co.c0);
      const TargetSide t = make_target(x, co);
      const double sa = co.eval_a(xp);
      const Cplx sc = co.eval_c(xp);
      const double r = (x.x - xp).norm();
      if (r == 0) throw std::domain_error("remainder: coincident points");
      return remainder_general(t, xp, sa, sc, green(r, sa, sc));
    }
    case KernelId::GradTargetK:
    case KernelId::GradSourceK: {
      if (!direction)
        throw std::invalid_argument("kernel_eval: gradient kernel needs nu");
      const Vec3 rv = x.x - xp;
      const double r = rv.norm();
      if (r == 0) throw std::domain_error("kernel_eval: coincident points");
      const Cplx gp = green(r, co.eval_a(xp), co.eval_c(xp)).Gp;
      const double proj = direction->dot(rv) / r;
      return id == KernelId::GradTargetK ? gp * proj : -gp * proj;
    }
    case KernelId::GradSourceR: {
      if (!direction)
        throw std::invalid_argument("kernel_eval: gradient kernel needs nu");
      if (!(co.a_constant && co.b_zero && (co.c_zero || co.c_constant)))
        throw std::invalid_argument(
            "kernel_eval: GradSourceR needs constant a, b = 0, constant c");
      return grad_source_r(x, xp, co, *direction);
    }
  }
  throw std::invalid_argument("kernel_eval: unknown kernel");
}

Cplx kernel_eval_point(KernelId id, const Vec3& x, const SurfaceSample& xp,
                       const Coefficients& co, const Vec3* direction) {
  switch (id) {
    case KernelId::K:
      return parametrix(x, xp, co);
    case KernelId::GradTargetK:
    case KernelId::GradSourceK: {
      if (!direction)
        throw std::invalid_argument("kernel_eval: gradient kernel needs nu");
      const Vec3 rv = x - xp.x;
      const double r = rv.norm();
      if (r == 0) throw std::domain_error("kernel_eval: coincident points");
      const Cplx gp = green(r, co.eval_a(xp.x), co.eval_c(xp.x)).Gp;
      const double proj = direction->dot(rv) / r;
      return id == KernelId::GradTargetK ? gp * proj : -gp * proj;
    }
    default:
      throw std::invalid_argument(
          "kernel_eval_point: kernel needs target surface data");
  }
}

}  // namespace surfpde
