#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "surfpde/geometry.hpp"
#include "surfpde/special_functions.hpp"

namespace surfpde {

// PDE data for  div_G(a grad_G u) + b . grad_G u + c u = f.  Coefficient
// functions take ambient positions; b and grad_a may have normal components,
// they are projected onto the tangent plane at the evaluation point.  The
// flags let kernel routines pick exact specializations and let the solver
// decide on mean-zero handling, so set them whenever they hold.
struct Coefficients {
  std::function<double(const Vec3&)> a;
  std::function<Vec3(const Vec3&)> grad_a;
  std::function<Vec3(const Vec3&)> b;
  std::function<Cplx(const Vec3&)> c;
  bool a_constant = false;
  bool b_zero = false;
  bool c_constant = false;
  bool c_zero = false;
  double a0 = 1;  // valid when a_constant
  Cplx c0 = 0;    // valid when c_constant

  static Coefficients laplace_beltrami();
  static Coefficients helmholtz(Cplx c0, double a0 = 1);

  double eval_a(const Vec3& x) const { return a_constant ? a0 : a(x); }
  Cplx eval_c(const Vec3& x) const {
    return c_zero ? Cplx(0) : (c_constant ? c0 : c(x));
  }
  bool lb_type() const { return b_zero && c_zero; }
};

enum class KernelId { K, R, GradTargetK, GradSourceK, GradSourceR };

struct GreenTriple {
  Cplx G, Gp, Gpp;
};

// Radial Green function for (a d2 + c) in the plane with constant data:
// c = 0 gives the log kernel, otherwise a Hankel function of kappa r with
// kappa = sqrt_up(c/a).  Values below |kappa r| = 1e-6 come from the
// log-singular expansion so the triple stays accurate through the crossover.
GreenTriple green(double r, double a, Cplx c);

// Piecewise-Chebyshev interpolant of green(., a0, c0) on [r_min, r_max].
// Panels double in width but never exceed 1.5/|kappa|, which bounds both the
// phase change and the exponential decay seen by a single panel.  c0 = 0
// bypasses the table entirely (the closed forms are cheaper than Clenshaw).
class GreenTable {
 public:
  GreenTable(double a0, Cplx c0, double r_min, double r_max);

  bool covers(double r) const {
    return trivial_ ? r > 0 : (r >= r_min_ && r <= r_max_);
  }
  GreenTriple eval(double r) const;
  Cplx eval_G(double r) const;
  Cplx eval_Gp(double r) const;

 private:
  static constexpr int kPts = 24;
  struct Panel {
    double lo, hi;
    Cplx cg[kPts], cgp[kPts], cgpp[kPts];
  };
  int find_panel(double r) const;

  double a0_;
  Cplx c0_, kappa_;
  double r_min_ = 0, r_max_ = 0;
  bool trivial_ = false;  // c0 == 0
  std::vector<Panel> panels_;
  std::vector<double> starts_;
};

// Same panel scheme for an arbitrary scalar radial function, for kernels
// that are not a Green triple (e.g. the constant-coefficient remainder's two
// Hankel factors).  max_panel plays the 1.5/|kappa| role.
class ChebTable {
 public:
  ChebTable() = default;
  ChebTable(const std::function<Cplx(double)>& f, double r_min, double r_max,
            double max_panel = std::numeric_limits<double>::infinity());
  Cplx eval(double r) const;
  bool covers(double r) const { return r >= lo_ && r <= hi_; }
  static constexpr int kPts = 24;

 private:
  struct Panel {
    double lo, hi;
    Cplx c[kPts];
  };
  double lo_ = 0, hi_ = 0;
  std::vector<double> starts_;
  std::vector<Panel> panels_;
};

// Target-side data the remainder formula consumes; cache these per node when
// filling a matrix so coefficient closures stay out of the O(N^2) loop.
struct TargetSide {
  Vec3 x, n;
  double a = 1, H = 0;
  Cplx c = 0;
  Vec3 grad_a_t = Vec3::Zero();  // tangential part of grad a, zero if constant
  Vec3 b_t = Vec3::Zero();       // tangential advection field, zero if absent
};
TargetSide make_target(const SurfaceSample& s, const Coefficients& co);

// Laplace-Beltrami remainder, exact closed form (constant a, b = 0, c = 0).
Cplx remainder_lb(const Vec3& x, const Vec3& n, double H, const Vec3& xp);

// Five-term remainder given Green values frozen at the source coefficients
// (src_a, src_c); includes the advection term when t.b_t is nonzero.
Cplx remainder_general(const TargetSide& t, const Vec3& xp, double src_a,
                       Cplx src_c, const GreenTriple& g);

Cplx parametrix(const SurfaceSample& x, const SurfaceSample& xp,
                const Coefficients& co);
Cplx parametrix(const Vec3& x, const SurfaceSample& xp, const Coefficients& co);
Cplx remainder(const SurfaceSample& x, const SurfaceSample& xp,
               const Coefficients& co);

// direction is the binormal nu at the target (GradTargetK) or at the source
// (GradSourceK, GradSourceR); it must be tangent to the surface there.
// GradSourceR requires constant a, b = 0, and constant or zero c.
Cplx kernel_eval(KernelId id, const SurfaceSample& x, const SurfaceSample& xp,
                 const Coefficients& co, const Vec3* direction = nullptr);

// Same kernels from a bare target point (off-surface potential evaluation).
// Only K, GradTargetK, GradSourceK make sense without target curvature data.
Cplx kernel_eval_point(KernelId id, const Vec3& x, const SurfaceSample& xp,
                       const Coefficients& co, const Vec3* direction = nullptr);

// Same kernels from a bare source point.  Curve sources carry no surface
// metric, only a position, so edge quadrature comes through here; source
// coefficients are evaluated at xp.  All five kernels work, the target sample
// supplies whatever curvature data R and GradSourceR need.
Cplx kernel_eval_src(KernelId id, const SurfaceSample& x, const Vec3& xp,
                     const Coefficients& co, const Vec3* direction = nullptr);

}  // namespace surfpde
