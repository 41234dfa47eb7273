#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace surfpde {

using Vec3 = Eigen::Vector3d;

enum class SurfaceKind { sphere, ellipsoid, wavy_torus, open_wavy_torus, custom };

// Chart evaluation: position and first/second parameter derivatives.  All
// surface kinds supply analytic second derivatives; curvature accuracy
// directly limits remainder-kernel accuracy, so there is no finite-difference
// fallback.
struct ChartJet {
  Vec3 r, rs, rt, rss, rst, rtt;
};

struct SurfaceDef {
  SurfaceKind kind = SurfaceKind::custom;
  std::vector<double> params;
  std::function<ChartJet(double, double)> chart;
  double s0 = 0, s1 = 1, t0 = 0, t1 = 1;  // parameter rectangle
  int base_s = 1, base_t = 1;             // base grid of rectangles
  bool periodic_s = false, periodic_t = false;
};

SurfaceDef make_sphere(double radius = 1.0, int base_s = 2, int base_t = 4);
SurfaceDef make_ellipsoid(double ax, double ay, double az, int base_s = 2, int base_t = 4);
SurfaceDef make_wavy_torus(int base_s = 9, int base_t = 6);
// The open variant keeps u in [u_lo, u_hi]; the excluded interval is the
// complement in [0, 2pi) and must be nonempty.
SurfaceDef make_open_wavy_torus(double u_lo = 4 * M_PI / 3, double u_hi = 2 * M_PI,
                                int base_s = 3, int base_t = 6);
SurfaceDef make_custom(std::function<ChartJet(double, double)> chart, double s0, double s1,
                       double t0, double t1, int base_s, int base_t, bool periodic_s,
                       bool periodic_t);

// Curvilinear triangle: affine map from T0 = {(u,v): u,v >= 0, u+v <= 1} into
// the parameter rectangle, composed with the surface chart.
struct Patch {
  int id = 0;
  double s0 = 0, t0 = 0;        // image of (0,0)
  double jsu = 0, jtu = 0;      // d(s,t)/du
  double jsv = 0, jtv = 0;      // d(s,t)/dv
  bool flipped = false;         // affine determinant sign (always + here)
  std::shared_ptr<const SurfaceDef> def;
};

struct SurfaceSample {
  Vec3 x;
  Vec3 ys, yt;       // derivatives with respect to the T0 coordinates
  double g[2][2];    // metric
  double detg = 0;
  double sqrtg = 0;
  Vec3 n;            // outward unit normal
  double H = 0;      // mean curvature; +1 on the unit sphere (outward normal)
  double kG = 0;     // Gaussian curvature
  double u = 0, v = 0;
};

// Uniform parameter-space refinement: the base grid of rectangles, each split
// into two triangles, with every level quadrisecting every triangle.
std::vector<Patch> triangulate(const SurfaceDef& def, int level);

SurfaceSample sample_patch(const Patch& patch, double u, double v);

// false where the metric degenerates (pole edges of closed charts) instead
// of throwing; quadrature loops skip such points, whose Jacobian vanishes
bool sample_patch_maybe(const Patch& patch, double u, double v,
                        SurfaceSample& out);

// Position only; usable on the closed T0 even where the metric degenerates
// (sphere pole edges).
Vec3 patch_position(const Patch& patch, double u, double v);

// [ys yt] g^{-1} (fs, ft)^T, tangent to the surface.
Vec3 surface_gradient(const SurfaceSample& sample, double fs, double ft);

}  // namespace surfpde
