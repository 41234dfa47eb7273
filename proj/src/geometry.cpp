#include "surfpde/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace surfpde {

namespace {

ChartJet sphere_jet(double R, double s, double t) {
  double cs = std::cos(s), ss = std::sin(s), ct = std::cos(t), st = std::sin(t);
  ChartJet j;
  j.r = R * Vec3(ss * ct, ss * st, cs);
  j.rs = R * Vec3(cs * ct, cs * st, -ss);
  j.rt = R * Vec3(-ss * st, ss * ct, 0);
  j.rss = -j.r;
  j.rst = R * Vec3(-cs * st, cs * ct, 0);
  j.rtt = R * Vec3(-ss * ct, -ss * st, 0);
  return j;
}

ChartJet torus_jet(double R0, double amp, double freq, double s, double t) {
  // r = (rho cos u, rho sin u, sin v), rho = R0 + cos v + amp cos(freq u)
  double cu = std::cos(s), su = std::sin(s), cv = std::cos(t), sv = std::sin(t);
  double rho = R0 + cv + amp * std::cos(freq * s);
  double rho_u = -amp * freq * std::sin(freq * s);
  double rho_uu = -amp * freq * freq * std::cos(freq * s);
  double rho_v = -sv, rho_vv = -cv;
  ChartJet j;
  j.r = Vec3(rho * cu, rho * su, sv);
  j.rs = Vec3(rho_u * cu - rho * su, rho_u * su + rho * cu, 0);
  j.rt = Vec3(rho_v * cu, rho_v * su, cv);
  j.rss = Vec3(rho_uu * cu - 2 * rho_u * su - rho * cu,
               rho_uu * su + 2 * rho_u * cu - rho * su, 0);
  j.rst = Vec3(-rho_v * su, rho_v * cu, 0);
  j.rtt = Vec3(rho_vv * cu, rho_vv * su, -sv);
  return j;
}

}  // namespace

SurfaceDef make_sphere(double radius, int base_s, int base_t) {
  SurfaceDef d;
  d.kind = SurfaceKind::sphere;
  d.params = {radius};
  d.chart = [radius](double s, double t) { return sphere_jet(radius, s, t); };
  d.s0 = 0;
  d.s1 = M_PI;
  d.t0 = 0;
  d.t1 = 2 * M_PI;
  d.base_s = base_s;
  d.base_t = base_t;
  d.periodic_t = true;
  return d;
}

SurfaceDef make_ellipsoid(double ax, double ay, double az, int base_s, int base_t) {
  SurfaceDef d = make_sphere(1.0, base_s, base_t);
  d.kind = SurfaceKind::ellipsoid;
  d.params = {ax, ay, az};
  d.chart = [ax, ay, az](double s, double t) {
    ChartJet j = sphere_jet(1.0, s, t);
    for (Vec3* v : {&j.r, &j.rs, &j.rt, &j.rss, &j.rst, &j.rtt}) {
      (*v)[0] *= ax;
      (*v)[1] *= ay;
      (*v)[2] *= az;
    }
    return j;
  };
  return d;
}

SurfaceDef make_wavy_torus(int base_s, int base_t) {
  SurfaceDef d;
  d.kind = SurfaceKind::wavy_torus;
  d.params = {3.0, 0.6, 5.0};
  d.chart = [](double s, double t) { return torus_jet(3.0, 0.6, 5.0, s, t); };
  d.s0 = 0;
  d.s1 = 2 * M_PI;
  d.t0 = 0;
  d.t1 = 2 * M_PI;
  d.base_s = base_s;
  d.base_t = base_t;
  d.periodic_s = true;
  d.periodic_t = true;
  return d;
}

SurfaceDef make_open_wavy_torus(double u_lo, double u_hi, int base_s, int base_t) {
  if (!(u_hi - u_lo > 0) || u_hi - u_lo >= 2 * M_PI)
    throw std::invalid_argument("open_wavy_torus: excluded u-interval must be nonempty");
  SurfaceDef d = make_wavy_torus(base_s, base_t);
  d.kind = SurfaceKind::open_wavy_torus;
  d.params = {3.0, 0.6, 5.0, u_lo, u_hi};
  d.s0 = u_lo;
  d.s1 = u_hi;
  d.periodic_s = false;
  return d;
}

SurfaceDef make_custom(std::function<ChartJet(double, double)> chart, double s0, double s1,
                       double t0, double t1, int base_s, int base_t, bool periodic_s,
                       bool periodic_t) {
  SurfaceDef d;
  d.kind = SurfaceKind::custom;
  d.chart = std::move(chart);
  d.s0 = s0;
  d.s1 = s1;
  d.t0 = t0;
  d.t1 = t1;
  d.base_s = base_s;
  d.base_t = base_t;
  d.periodic_s = periodic_s;
  d.periodic_t = periodic_t;
  return d;
}

std::vector<Patch> triangulate(const SurfaceDef& def, int level) {
  if (level < 0) throw std::invalid_argument("triangulate: level must be nonnegative");
  auto shared = std::make_shared<const SurfaceDef>(def);
  const int ns = def.base_s << level, nt = def.base_t << level;
  const double ds = (def.s1 - def.s0) / ns, dt = (def.t1 - def.t0) / nt;
  std::vector<Patch> patches;
  patches.reserve(2 * ns * nt);
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nt; ++j) {
      const double s = def.s0 + i * ds, t = def.t0 + j * dt;
      Patch lo;
      lo.id = int(patches.size());
      lo.s0 = s;
      lo.t0 = t;
      lo.jsu = ds;
      lo.jtu = 0;
      lo.jsv = 0;
      lo.jtv = dt;
      lo.def = shared;
      patches.push_back(lo);
      Patch hi;  // opposite corner, both affine determinants positive
      hi.id = int(patches.size());
      hi.s0 = s + ds;
      hi.t0 = t + dt;
      hi.jsu = -ds;
      hi.jtu = 0;
      hi.jsv = 0;
      hi.jtv = -dt;
      hi.def = shared;
      patches.push_back(hi);
    }
  }
  return patches;
}

Vec3 patch_position(const Patch& patch, double u, double v) {
  const double s = patch.s0 + patch.jsu * u + patch.jsv * v;
  const double t = patch.t0 + patch.jtu * u + patch.jtv * v;
  return patch.def->chart(s, t).r;
}

bool sample_patch_maybe(const Patch& patch, double u, double v,
                        SurfaceSample& out) {
  const double s = patch.s0 + patch.jsu * u + patch.jsv * v;
  const double t = patch.t0 + patch.jtu * u + patch.jtv * v;
  const ChartJet j = patch.def->chart(s, t);
  const double a = patch.jsu, c = patch.jtu, b = patch.jsv, d = patch.jtv;
  out.x = j.r;
  out.u = u;
  out.v = v;
  out.ys = j.rs * a + j.rt * c;
  out.yt = j.rs * b + j.rt * d;
  const Vec3 yuu = j.rss * (a * a) + j.rst * (2 * a * c) + j.rtt * (c * c);
  const Vec3 yuv = j.rss * (a * b) + j.rst * (a * d + b * c) + j.rtt * (c * d);
  const Vec3 yvv = j.rss * (b * b) + j.rst * (2 * b * d) + j.rtt * (d * d);

  out.g[0][0] = out.ys.dot(out.ys);
  out.g[0][1] = out.g[1][0] = out.ys.dot(out.yt);
  out.g[1][1] = out.yt.dot(out.yt);
  out.detg = out.g[0][0] * out.g[1][1] - out.g[0][1] * out.g[0][1];
  const double tr = out.g[0][0] + out.g[1][1];
  if (!(out.detg > 1e-15 * tr * tr)) return false;
  out.sqrtg = std::sqrt(out.detg);
  out.n = out.ys.cross(out.yt) / out.sqrtg;

  // second fundamental form; H sign fixed by H = +1 on the unit sphere
  const double m00 = out.n.dot(yuu), m01 = out.n.dot(yuv), m11 = out.n.dot(yvv);
  out.H = -(out.g[1][1] * m00 - 2 * out.g[0][1] * m01 + out.g[0][0] * m11) / (2 * out.detg);
  out.kG = (m00 * m11 - m01 * m01) / out.detg;
  return true;
}

SurfaceSample sample_patch(const Patch& patch, double u, double v) {
  SurfaceSample out;
  if (!sample_patch_maybe(patch, u, v, out))
    throw std::runtime_error("sample_patch: degenerate metric");
  return out;
}

Vec3 surface_gradient(const SurfaceSample& sample, double fs, double ft) {
  const double a = (sample.g[1][1] * fs - sample.g[0][1] * ft) / sample.detg;
  const double b = (-sample.g[0][1] * fs + sample.g[0][0] * ft) / sample.detg;
  return sample.ys * a + sample.yt * b;
}

}  // namespace surfpde
