#include "surfpde/boundary.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "surfpde/fastapply.hpp"

namespace surfpde {

namespace {

struct GL16 {
  double x[16], w[16];
  GL16() {
    const int n = 16;
    for (int i = 0; i < n / 2; ++i) {
      double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double pp = 0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1, p1 = 0;
        for (int j = 0; j < n; ++j) {
          double p2 = p1;
          p1 = p0;
          p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
        }
        pp = n * (t * p0 - p1) / (t * t - 1);
        double dt = p0 / pp;
        t -= dt;
        if (std::abs(dt) < 1e-15) break;
      }
      x[i] = -t;
      x[n - 1 - i] = t;
      w[i] = w[n - 1 - i] = 2 / ((1 - t * t) * pp * pp);
    }
  }
};

const GL16& gl16() {
  static GL16 g;
  return g;
}

Eigen::RowVectorXcd times_U(const Eigen::VectorXcd& m,
                            const Eigen::MatrixXd& U) {
  Eigen::RowVectorXd re = m.real().transpose() * U;
  Eigen::RowVectorXd im = m.imag().transpose() * U;
  Eigen::RowVectorXcd out(m.size());
  for (int i = 0; i < m.size(); ++i) out[i] = Cplx(re[i], im[i]);
  return out;
}

using MomentSet = std::vector<Eigen::VectorXcd>;

MomentSet zero_moments(int nk, int np) {
  return MomentSet(nk, Eigen::VectorXcd::Zero(np));
}

void add_to(MomentSet& acc, const MomentSet& d) {
  for (size_t k = 0; k < acc.size(); ++k) acc[k] += d[k];
}

// closest point of the closed triangle {u >= 0, v >= 0, u + v <= 1}
void clamp_to_t0(double& u, double& v) {
  if (u >= 0 && v >= 0 && u + v <= 1) return;
  const double pu = u, pv = v;
  double bu = std::clamp(pu, 0.0, 1.0), bv = 0.0;
  double bd = (pu - bu) * (pu - bu) + pv * pv;
  {
    const double cv = std::clamp(pv, 0.0, 1.0);
    const double d = pu * pu + (pv - cv) * (pv - cv);
    if (d < bd) {
      bu = 0;
      bv = cv;
      bd = d;
    }
  }
  {
    const double tau = std::clamp(0.5 * (pv - pu + 1), 0.0, 1.0);
    const double d =
        (pu - (1 - tau)) * (pu - (1 - tau)) + (pv - tau) * (pv - tau);
    if (d < bd) {
      bu = 1 - tau;
      bv = tau;
    }
  }
  u = bu;
  v = bv;
}

}  // namespace

std::vector<EdgeSpec> boundary_specs(const SurfaceDef& def) {
  const bool open_s = !def.periodic_s, open_t = !def.periodic_t;
  if (!open_s && !open_t)
    throw std::invalid_argument("boundary_specs: closed surface has no boundary");
  if (open_s && open_t)
    throw std::invalid_argument(
        "boundary_specs: chart open in both directions; its boundary is not a "
        "union of coordinate circles");

  std::vector<EdgeSpec> specs;
  const SurfaceDef dd = def;
  if (open_s) {
    for (double se : {def.s0, def.s1})
      specs.push_back({[dd, se](double phi) {
        return dd.chart(se, dd.t0 + (dd.t1 - dd.t0) * phi / (2 * M_PI)).r;
      }});
  } else {
    for (double te : {def.t0, def.t1})
      specs.push_back({[dd, te](double phi) {
        return dd.chart(dd.s0 + (dd.s1 - dd.s0) * phi / (2 * M_PI), te).r;
      }});
  }
  for (const EdgeSpec& s : specs) {
    double diam = 0;
    for (double phi : {0.0, M_PI / 2, M_PI, 3 * M_PI / 2})
      diam = std::max(diam, (s.gamma(phi) - s.gamma(0)).norm());
    if (diam < 1e-10)
      throw std::invalid_argument(
          "boundary_specs: degenerate boundary circle (chart pole)");
  }
  return specs;
}

PatchProject project_to_patch(const Patch& pa, const Vec3& X) {
  static const double su[7] = {1.0 / 3, 0.05, 0.9, 0.05, 0.475, 0.05, 0.475};
  static const double sv[7] = {1.0 / 3, 0.05, 0.05, 0.9, 0.05, 0.475, 0.475};

  PatchProject best;
  best.dist = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 7 && best.dist > 1e-13; ++s) {
    double u = su[s], v = sv[s];
    SurfaceSample smp;
    if (!sample_patch_maybe(pa, u, v, smp)) continue;
    double res = (smp.x - X).norm();
    for (int it = 0; it < 60 && res > 1e-14; ++it) {
      const Vec3 r = smp.x - X;
      const double g00 = smp.g[0][0], g01 = smp.g[0][1], g11 = smp.g[1][1];
      const double lam = 1e-12 * (g00 + g11);
      const double det = (g00 + lam) * (g11 + lam) - g01 * g01;
      if (!(det > 0)) break;
      const double b0 = -smp.ys.dot(r), b1 = -smp.yt.dot(r);
      double du = ((g11 + lam) * b0 - g01 * b1) / det;
      double dv = ((g00 + lam) * b1 - g01 * b0) / det;
      bool moved = false;
      for (int half = 0; half < 25 && !moved; ++half) {
        double uu = u + du, vv = v + dv;
        clamp_to_t0(uu, vv);
        if (std::abs(uu - u) + std::abs(vv - v) < 1e-15) break;
        SurfaceSample s2;
        if (sample_patch_maybe(pa, uu, vv, s2)) {
          const double r2 = (s2.x - X).norm();
          if (r2 <= res) {
            u = uu;
            v = vv;
            smp = s2;
            res = r2;
            moved = true;
          }
        }
        du *= 0.5;
        dv *= 0.5;
      }
      if (!moved) break;
    }
    if (res < best.dist) {
      best.u = u;
      best.v = v;
      best.dist = res;
    }
  }
  if (!std::isfinite(best.dist))
    throw std::runtime_error("project_to_patch: degenerate patch");
  return best;
}

EdgeCurve discretize_edge(const EdgeSpec& spec, int n_phi,
                          const std::vector<Patch>& patches,
                          const Coefficients& co, int oversample) {
  if (!spec.gamma) throw std::invalid_argument("discretize_edge: empty curve");
  if (n_phi < 16 || n_phi % 2 != 0)
    throw std::invalid_argument(
        "discretize_edge: n_phi must be even and at least 16");
  if (oversample < 1)
    throw std::invalid_argument("discretize_edge: oversample must be positive");
  if (patches.empty())
    throw std::invalid_argument("discretize_edge: no patches");
  if ((spec.gamma(0) - spec.gamma(2 * M_PI)).norm() > 1e-10)
    throw std::invalid_argument("discretize_edge: gamma(0) != gamma(2 pi)");

  EdgeCurve e;
  e.n = n_phi;
  e.m = oversample;
  const int n = n_phi, nf = n * oversample;
  const double h = 2 * M_PI / n;

  e.x.resize(n);
  Eigen::MatrixXd X(n, 3);
  for (int k = 0; k < n; ++k) {
    e.x[k] = spec.gamma(k * h);
    X.row(k) = e.x[k].transpose();
  }

  // spectral differentiation on the periodic grid (even n)
  Eigen::MatrixXd D1 = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      if (j == k) continue;
      const int d = j - k;
      const double sgn = (std::abs(d) % 2 == 0) ? 1.0 : -1.0;
      D1(j, k) = 0.5 * sgn / std::tan(0.5 * d * h);
    }
  const Eigen::MatrixXd Xp = D1 * X, Xpp = D1 * Xp;

  e.tang.resize(n);
  e.w.resize(n);
  e.spacing = 0;
  for (int k = 0; k < n; ++k) {
    const Vec3 gp = Xp.row(k).transpose();
    const double sp = gp.norm();
    if (!(sp > 0))
      throw std::runtime_error("discretize_edge: vanishing curve speed");
    e.tang[k] = gp / sp;
    e.w[k] = sp * h;
    e.spacing = std::max(e.spacing, e.w[k]);
  }

  e.nu.resize(n);
  e.kappa_nu.resize(n);
  e.a.resize(n);
  e.c.resize(n);
  e.samp.resize(n);
  e.host.resize(n);
  e.pre_u.resize(n);
  e.pre_v.resize(n);
  const auto near = classify_targets(patches, e.x);
  for (int k = 0; k < n; ++k) {
    int host = -1;
    PatchProject best;
    best.dist = std::numeric_limits<double>::infinity();
    auto consider = [&](int m) {
      const PatchProject pr = project_to_patch(patches[m], e.x[k]);
      if (pr.dist < best.dist) {
        best = pr;
        host = m;
      }
    };
    for (int m : near[k]) consider(m);
    for (int m = 0; m < int(patches.size()) && best.dist > 1e-10; ++m)
      consider(m);
    if (best.dist > 1e-10)
      throw std::runtime_error("discretize_edge: curve node " +
                               std::to_string(k) +
                               " is off the surface (distance " +
                               std::to_string(best.dist) + ")");
    e.host[k] = host;
    e.pre_u[k] = best.u;
    e.pre_v[k] = best.v;
    e.samp[k] = sample_patch(patches[host], best.u, best.v);

    Vec3 nu = e.tang[k].cross(e.samp[k].n);
    const double nn = nu.norm();
    if (!(nn > 0.1))
      throw std::runtime_error(
          "discretize_edge: curve tangent parallel to the surface normal");
    nu /= nn;
    // which side of the curve the surface lies on, probed inside the host
    // patch; nu points away from it
    bool oriented = false;
    for (double step : {0.05, 0.2, 0.5}) {
      const double uu = best.u + step * (1.0 / 3 - best.u);
      const double vv = best.v + step * (1.0 / 3 - best.v);
      const Vec3 dq = patch_position(patches[host], uu, vv) - e.x[k];
      const double dn = dq.norm();
      if (dn < 1e-14 || std::abs(nu.dot(dq)) < 0.05 * dn) continue;
      if (nu.dot(dq) > 0) nu = -nu;
      oriented = true;
      break;
    }
    if (!oriented)
      throw std::runtime_error("discretize_edge: cannot orient nu at node " +
                               std::to_string(k));
    e.nu[k] = nu;
    const Vec3 gpp = Xpp.row(k).transpose();
    const double sp2 = Xp.row(k).squaredNorm();
    e.kappa_nu[k] = nu.dot(gpp) / sp2;
    e.a[k] = co.eval_a(e.x[k]);
    e.c[k] = co.eval_c(e.x[k]);
  }

  // fine grid: positions from the curve itself, speeds and nu by Fourier
  // interpolation of the coarse data
  e.cardinal.resize(nf);
  e.cardinal[0] = 1;
  for (int i = 1; i < nf; ++i) {
    const double tau = 2 * M_PI * i / nf;
    e.cardinal[i] = std::sin(0.5 * n * tau) / (n * std::tan(0.5 * tau));
  }
  std::vector<Vec3> gpc(n);
  for (int k = 0; k < n; ++k) gpc[k] = Xp.row(k).transpose();
  e.xf.resize(nf);
  e.nuf.resize(nf);
  e.wf.resize(nf);
  const double hf = 2 * M_PI / nf;
  for (int f = 0; f < nf; ++f) e.xf[f] = spec.gamma(f * hf);
  for (int f = 0; f < nf; ++f) {
    if (f % oversample == 0) {
      e.wf[f] = gpc[f / oversample].norm() * hf;
      e.nuf[f] = e.nu[f / oversample];
      continue;
    }
    Vec3 gp = Vec3::Zero(), nu = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
      int idx = (f - k * oversample) % nf;
      if (idx < 0) idx += nf;
      const double c = e.cardinal[idx];
      gp += c * gpc[k];
      nu += c * e.nu[k];
    }
    e.wf[f] = gp.norm() * hf;
    e.nuf[f] = nu.normalized();
  }
  return e;
}

namespace {

Cplx edge_kernel(KernelId id, const SurfaceSample& target, const Vec3& xp,
                 const Coefficients& co, const Vec3& nu_src,
                 const Vec3& nu_tgt) {
  switch (id) {
    case KernelId::K:
    case KernelId::R:
      return kernel_eval_src(id, target, xp, co);
    case KernelId::GradTargetK:
      return kernel_eval_src(id, target, xp, co, &nu_tgt);
    case KernelId::GradSourceK:
    case KernelId::GradSourceR:
      return kernel_eval_src(id, target, xp, co, &nu_src);
  }
  throw std::invalid_argument("edge_row: unknown kernel");
}

double dist_to_curve(const EdgeCurve& e, const Vec3& X) {
  double d = std::numeric_limits<double>::infinity();
  for (const Vec3& p : e.x) d = std::min(d, (p - X).norm());
  return d;
}

// contract a fine-grid row with the cardinal weights back onto coarse nodes
Eigen::RowVectorXcd fold_fine(const EdgeCurve& e,
                              const Eigen::RowVectorXcd& rowf) {
  const int n = e.n, nf = e.n * e.m;
  Eigen::RowVectorXcd row(n);
  for (int k = 0; k < n; ++k) {
    Cplx acc = 0;
    const int km = k * e.m;
    for (int f = 0; f < nf; ++f) {
      int idx = f - km;
      if (idx < 0) idx += nf;
      acc += rowf[f] * e.cardinal[idx];
    }
    row[k] = acc;
  }
  return row;
}

}  // namespace

Eigen::RowVectorXcd edge_row(KernelId id, const EdgeCurve& e,
                             const SurfaceSample& target,
                             const Coefficients& co, const Vec3& nu_target) {
  if (id == KernelId::GradTargetK && nu_target.norm() == 0)
    throw std::invalid_argument("edge_row: GradTargetK needs nu_target");
  if (dist_to_curve(e, target.x) < 4 * e.spacing) {
    const int nf = e.n * e.m;
    Eigen::RowVectorXcd rowf(nf);
    for (int f = 0; f < nf; ++f)
      rowf[f] =
          e.wf[f] * edge_kernel(id, target, e.xf[f], co, e.nuf[f], nu_target);
    return fold_fine(e, rowf);
  }
  Eigen::RowVectorXcd row(e.n);
  for (int j = 0; j < e.n; ++j)
    row[j] = e.w[j] * edge_kernel(id, target, e.x[j], co, e.nu[j], nu_target);
  return row;
}

Eigen::RowVectorXcd edge_row_point(KernelId id, const EdgeCurve& e,
                                   const Vec3& target, const Coefficients& co,
                                   const Vec3& nu_target) {
  if (id != KernelId::K && id != KernelId::GradTargetK &&
      id != KernelId::GradSourceK)
    throw std::invalid_argument(
        "edge_row_point: a bare point target supports only K, GradTargetK, "
        "and GradSourceK");
  if (id == KernelId::GradTargetK && nu_target.norm() == 0)
    throw std::invalid_argument("edge_row_point: GradTargetK needs nu_target");
  auto kern = [&](const Vec3& xp, const Vec3& nu_src) -> Cplx {
    const Vec3 rv = target - xp;
    const double r = rv.norm();
    if (r == 0) throw std::domain_error("edge_row_point: target on the curve");
    const GreenTriple g = green(r, co.eval_a(xp), co.eval_c(xp));
    if (id == KernelId::K) return g.G;
    if (id == KernelId::GradTargetK) return g.Gp * (nu_target.dot(rv) / r);
    return -g.Gp * (nu_src.dot(rv) / r);
  };
  if (dist_to_curve(e, target) < 4 * e.spacing) {
    const int nf = e.n * e.m;
    Eigen::RowVectorXcd rowf(nf);
    for (int f = 0; f < nf; ++f)
      rowf[f] = e.wf[f] * kern(e.xf[f], e.nuf[f]);
    return fold_fine(e, rowf);
  }
  Eigen::RowVectorXcd row(e.n);
  for (int j = 0; j < e.n; ++j) row[j] = e.w[j] * kern(e.x[j], e.nu[j]);
  return row;
}

Eigen::RowVectorXcd edge_row_at_node(KernelId id, const EdgeCurve& e, int k,
                                     const Coefficients& co) {
  if (id != KernelId::GradTargetK && id != KernelId::GradSourceK)
    throw std::invalid_argument(
        "edge_row_at_node: only GradTargetK and GradSourceK stay smooth on "
        "the curve");
  if (k < 0 || k >= e.n)
    throw std::invalid_argument("edge_row_at_node: node index out of range");
  Eigen::RowVectorXcd row(e.n);
  const Vec3 xk = e.x[k];
  for (int j = 0; j < e.n; ++j) {
    if (j == k) continue;
    const Vec3 rv = xk - e.x[j];
    const double r = rv.norm();
    const Cplx gp = green(r, co.eval_a(e.x[j]), co.eval_c(e.x[j])).Gp;
    const Vec3& nu = id == KernelId::GradTargetK ? e.nu[k] : e.nu[j];
    const Cplx val = gp * (nu.dot(rv) / r);
    row[j] = e.w[j] * (id == KernelId::GradTargetK ? val : -val);
  }
  row[k] = e.w[k] * Cplx(-e.kappa_nu[k] / (4 * M_PI * e.a[k]));
  return row;
}

std::vector<Eigen::RowVectorXcd> fan_quad_rows(
    const Patch& pa, const NodeBasis& basis, double u0, double v0,
    const std::vector<SrcKernel>& kernels, double tol) {
  if (!(u0 >= -1e-10 && v0 >= -1e-10 && u0 + v0 <= 1 + 1e-10))
    throw std::domain_error(
        "fan_quad_rows: preimage outside the closed triangle");
  u0 = std::max(u0, 0.0);
  v0 = std::max(v0, 0.0);
  if (u0 + v0 > 1) {
    const double s = u0 + v0;
    u0 /= s;
    v0 /= s;
  }

  const int np = basis.n, nk = int(kernels.size());
  const GL16& g = gl16();
  using P2 = std::array<double, 2>;

  // fan about the preimage; x(s, t) = P + s ((1 - t) e1 + t e2) carries a
  // Jacobian factor jac * s that cancels a 1/r kernel singularity at P
  struct Fan {
    P2 e1, e2;
    double jac;
  };
  const std::array<P2, 3> corner{P2{0, 0}, P2{1, 0}, P2{0, 1}};
  std::vector<Fan> fans;
  for (int c = 0; c < 3; ++c) {
    const P2 e1{corner[c][0] - u0, corner[c][1] - v0};
    const P2 e2{corner[(c + 1) % 3][0] - u0, corner[(c + 1) % 3][1] - v0};
    const double det = e1[0] * e2[1] - e1[1] * e2[0];
    if (std::abs(det) < 1e-13) continue;
    fans.push_back({e1, e2, std::abs(det)});
  }

  std::vector<double> kv(np);
  auto rule = [&](const Fan& F, double sa, double sb, double ta, double tb) {
    MomentSet mom = zero_moments(nk, np);
    for (int iq = 0; iq < 16; ++iq) {
      const double s = 0.5 * ((sb - sa) * g.x[iq] + sb + sa);
      const double ws = 0.5 * (sb - sa) * g.w[iq];
      for (int jq = 0; jq < 16; ++jq) {
        const double t = 0.5 * ((tb - ta) * g.x[jq] + tb + ta);
        const double wt = 0.5 * (tb - ta) * g.w[jq];
        const double u = u0 + s * ((1 - t) * F.e1[0] + t * F.e2[0]);
        const double v = v0 + s * ((1 - t) * F.e1[1] + t * F.e2[1]);
        SurfaceSample smp;
        if (!sample_patch_maybe(pa, u, v, smp))
          continue;  // pole edge: the Jacobian kills the contribution
        koornwinder(basis.p, u, v, kv.data());
        const double meas = ws * wt * F.jac * s * smp.sqrtg;
        for (int k = 0; k < nk; ++k) {
          const Cplx cfac = kernels[k](smp) * meas;
          for (int nn = 0; nn < np; ++nn) mom[k][nn] += cfac * kv[nn];
        }
      }
    }
    return mom;
  };

  MomentSet total = zero_moments(nk, np);
  std::function<void(const Fan&, double, double, double, double,
                     const MomentSet&, int)>
      rec = [&](const Fan& F, double sa, double sb, double ta, double tb,
                const MomentSet& whole, int depth) {
        const double sm = 0.5 * (sa + sb), tm = 0.5 * (ta + tb);
        MomentSet r0 = rule(F, sa, sm, ta, tm), r1 = rule(F, sm, sb, ta, tm),
                  r2 = rule(F, sa, sm, tm, tb), r3 = rule(F, sm, sb, tm, tb);
        MomentSet sum = r0;
        for (int k = 0; k < nk; ++k) sum[k] += r1[k] + r2[k] + r3[k];
        double diff = 0;
        for (int k = 0; k < nk; ++k)
          diff = std::max(diff, (whole[k] - sum[k]).cwiseAbs().maxCoeff());
        if (diff <= tol * std::pow(0.5, depth)) {
          add_to(total, sum);
          return;
        }
        if (depth >= 30)
          throw QuadratureError("fan_quad_rows: refinement stalled", diff);
        rec(F, sa, sm, ta, tm, r0, depth + 1);
        rec(F, sm, sb, ta, tm, r1, depth + 1);
        rec(F, sa, sm, tm, tb, r2, depth + 1);
        rec(F, sm, sb, tm, tb, r3, depth + 1);
      };
  for (const Fan& F : fans) rec(F, 0, 1, 0, 1, rule(F, 0, 1, 0, 1), 0);

  std::vector<Eigen::RowVectorXcd> rows(nk);
  for (int k = 0; k < nk; ++k) rows[k] = times_U(total[k], basis.U);
  return rows;
}

namespace {

SrcKernel trace_kernel(TraceKind kind, const SurfaceSample& smp,
                       const Coefficients& co, const Vec3& nu) {
  switch (kind) {
    case TraceKind::conormal:
      return kernel_fn(KernelId::GradTargetK, smp, co, nu);
    case TraceKind::value:
      return kernel_fn(KernelId::K, smp, co);
    case TraceKind::normal:
      return kernel_fn(KernelId::GradTargetK, smp, co, smp.n);
  }
  throw std::invalid_argument("surface_to_edge_row: unknown trace kind");
}

}  // namespace

Eigen::RowVectorXcd surface_to_edge_row(TraceKind kind, const EdgeCurve& e,
                                        int k, const Patch& pa,
                                        const NodeBasis& basis,
                                        const Coefficients& co, double tol) {
  if (k < 0 || k >= e.n)
    throw std::invalid_argument("surface_to_edge_row: node index out of range");
  const SrcKernel kern = trace_kernel(kind, e.samp[k], co, e.nu[k]);
  const Vec3 c0 = patch_position(pa, 0, 0), c1 = patch_position(pa, 1, 0),
             c2 = patch_position(pa, 0, 1);
  const Vec3 cen = (c0 + c1 + c2) / 3;
  const double radius = std::max(
      {(c0 - cen).norm(), (c1 - cen).norm(), (c2 - cen).norm()});
  if ((e.x[k] - cen).norm() > 1.5 * radius)
    return smooth_quad_rows(pa, basis, {kern})[0];
  const PatchProject pr = project_to_patch(pa, e.x[k]);
  if (pr.dist <= 1e-6 * radius)
    return fan_quad_rows(pa, basis, pr.u, pr.v, {kern}, tol)[0];
  return near_quad_rows(pa, basis, e.x[k], {kern}, tol)[0];
}

Eigen::VectorXcd BlockSystem::apply(const Eigen::VectorXcd& z) const {
  const int n = N(), m = M();
  if (z.size() != n + m)
    throw std::invalid_argument("BlockSystem::apply: size mismatch");
  const Eigen::VectorXcd sigma = z.head(n), mu = z.tail(m);
  Eigen::VectorXcd out(n + m);
  out.head(n) = opR->apply(sigma) + B * mu;
  out.tail(m) = C * sigma + D * mu;
  return out;
}

BlockSystem build_block_system(const Discretization& d,
                               const DiscreteOperator& opR,
                               const std::vector<EdgeCurve>& edges,
                               BvpKind kind, double tol) {
  if (kind == BvpKind::none)
    throw std::invalid_argument("build_block_system: bvp kind is none");
  if (edges.empty())
    throw std::invalid_argument("build_block_system: no edges");
  if (kind == BvpKind::dirichlet &&
      !(d.co.a_constant && d.co.b_zero && (d.co.c_zero || d.co.c_constant)))
    throw std::invalid_argument(
        "build_block_system: the Dirichlet coupling differentiates the "
        "remainder at the source, which needs constant a, b = 0, and "
        "constant or zero c");

  BlockSystem sys;
  sys.kind = kind;
  sys.disc = &d;
  sys.opR = &opR;
  const int N = d.N, np = d.basis->n;
  int M = 0;
  for (const EdgeCurve& e : edges) M += e.n;
  sys.B.resize(N, M);
  sys.C.resize(M, N);
  sys.D.resize(M, M);

  const KernelId bid =
      kind == BvpKind::neumann ? KernelId::R : KernelId::GradSourceR;
  const KernelId did =
      kind == BvpKind::neumann ? KernelId::GradTargetK : KernelId::GradSourceK;
  const TraceKind ck =
      kind == BvpKind::neumann ? TraceKind::conormal : TraceKind::value;
  const double jump_sign = kind == BvpKind::neumann ? -1.0 : 1.0;

  std::atomic<bool> failed{false};
  std::exception_ptr err;

  // edge layers at the surface nodes
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < N; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      int off = 0;
      for (const EdgeCurve& e : edges) {
        sys.B.row(i).segment(off, e.n) = edge_row(bid, e, d.nodes[i], d.co);
        off += e.n;
      }
    } catch (...) {
#pragma omp critical(surfpde_boundary_err)
      if (!failed.exchange(true)) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  // surface layer traced on the edge nodes; far patches reuse the stored
  // node samples, so only near and host patches pay for adaptive quadrature
  std::vector<const EdgeCurve*> row_edge(M);
  std::vector<int> row_local(M);
  std::vector<Vec3> exs(M);
  {
    int r = 0;
    for (const EdgeCurve& e : edges)
      for (int k = 0; k < e.n; ++k, ++r) {
        row_edge[r] = &e;
        row_local[r] = k;
        exs[r] = e.x[k];
      }
  }
  const auto geo = patch_geometry(d.patches);
  const auto near = classify_targets(d.patches, exs);
#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < M; ++r) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      const EdgeCurve& e = *row_edge[r];
      const int k = row_local[r];
      const SrcKernel kern = trace_kernel(ck, e.samp[k], d.co, e.nu[k]);
      Eigen::RowVectorXcd row(N);
      for (int j = 0; j < N; ++j) row[j] = kern(d.nodes[j]) * d.wsg[j];
      for (int m : near[r]) {
        Eigen::RowVectorXcd acc;
        try {
          const PatchProject pr = project_to_patch(d.patches[m], e.x[k]);
          acc = pr.dist <= 1e-6 * geo[m].radius
                    ? fan_quad_rows(d.patches[m], *d.basis, pr.u, pr.v, {kern},
                                    tol)[0]
                    : near_quad_rows(d.patches[m], *d.basis, e.x[k], {kern},
                                     tol)[0];
        } catch (const QuadratureError& qe) {
          throw QuadratureError("edge node " + std::to_string(r) +
                                    " against patch " + std::to_string(m) +
                                    ": " + qe.what(),
                                qe.estimate);
        }
        row.segment(m * np, np) = acc;
      }
      sys.C.row(r) = row;
    } catch (...) {
#pragma omp critical(surfpde_boundary_err)
      if (!failed.exchange(true)) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  // edge-to-edge block, with the one-sided jump on the diagonal
  for (int r = 0; r < M; ++r) {
    const EdgeCurve& et = *row_edge[r];
    const int k = row_local[r];
    int off = 0;
    for (const EdgeCurve& es : edges) {
      sys.D.row(r).segment(off, es.n) =
          &es == &et ? edge_row_at_node(did, es, k, d.co)
                     : edge_row(did, es, et.samp[k], d.co, et.nu[k]);
      off += es.n;
    }
    sys.D(r, r) += jump_sign / (2 * et.a[k]);
  }
  return sys;
}

Solution solve_bvp_with(const Discretization& d, const DiscreteOperator& opR,
                        const DiscreteOperator& opK,
                        const std::vector<EdgeCurve>& edges,
                        const Eigen::VectorXcd& f,
                        const Eigen::VectorXcd& f_edge, const Problem& pr) {
  BlockSystem sys = build_block_system(d, opR, edges, pr.bvp, pr.quad_tol);
  const int N = sys.N(), M = sys.M();
  if (f.size() != N || f_edge.size() != M)
    throw std::invalid_argument("solve_bvp_with: data size mismatch");
  Eigen::VectorXcd rhs(N + M);
  rhs.head(N) = f;
  rhs.tail(M) = f_edge;

  Solution sol;
  const Eigen::VectorXcd z =
      gmres([&](const Eigen::VectorXcd& v) { return sys.apply(v); }, rhs,
            pr.gmres_tol, pr.maxit, &sol.stats);
  if (!sol.stats.converged)
    throw std::runtime_error(
        "gmres stalled at relative residual " +
        std::to_string(sol.stats.residuals.empty()
                           ? 1.0
                           : sol.stats.residuals.back()) +
        " after " + std::to_string(sol.stats.iterations) + " iterations");
  sol.sigma = z.head(N);
  sol.mu = z.tail(M);

  sol.u = opK.apply(Eigen::VectorXcd(sol.sigma));
  const KernelId rep =
      pr.bvp == BvpKind::neumann ? KernelId::K : KernelId::GradSourceK;
  std::atomic<bool> failed{false};
  std::exception_ptr errp;
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < N; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      Cplx add = 0;
      int off = 0;
      for (const EdgeCurve& e : edges) {
        add += (edge_row(rep, e, d.nodes[i], d.co) *
                sol.mu.segment(off, e.n))
                   .value();
        off += e.n;
      }
      sol.u[i] += add;
    } catch (...) {
#pragma omp critical(surfpde_boundary_err)
      if (!failed.exchange(true)) errp = std::current_exception();
    }
  }
  if (errp) std::rethrow_exception(errp);
  return sol;
}

Solution solve_bvp(const Problem& pr) {
  if (pr.bvp == BvpKind::none)
    throw std::invalid_argument("solve_bvp: set bvp to neumann or dirichlet");
  if (!pr.f || !pr.f_edge)
    throw std::invalid_argument("solve_bvp: f and f_edge must be set");
  if (pr.bvp == BvpKind::dirichlet &&
      !(pr.co.a_constant && pr.co.b_zero &&
        (pr.co.c_zero || pr.co.c_constant)))
    throw std::invalid_argument(
        "solve_bvp: the Dirichlet coupling differentiates the remainder at "
        "the source, which needs constant a, b = 0, and constant or zero c");

  Discretization d = build_discretization(pr.surface, pr.level, pr.p, pr.co);
  OperatorOptions opt = pr.op_options();
  opt.rank_one = false;
  auto ops = build_operators(d, {KernelId::R, KernelId::K}, opt);
  if (pr.use_fmm) {
    auto tables = build_entry_tables(d, opt.use_tables, opt.table_bytes);
    ops[0].far =
        make_fast_far(d, KernelId::R, tables, pr.fmm_tol, pr.k_s, pr.seed);
  }

  std::vector<EdgeCurve> edges;
  for (const EdgeSpec& s : boundary_specs(pr.surface))
    edges.push_back(
        discretize_edge(s, pr.n_phi, d.patches, pr.co, pr.oversample));

  int M = 0;
  for (const EdgeCurve& e : edges) M += e.n;
  Eigen::VectorXcd f(d.N), fe(M);
  for (int i = 0; i < d.N; ++i) f[i] = pr.f(d.x[i]);
  int off = 0;
  for (const EdgeCurve& e : edges) {
    for (int k = 0; k < e.n; ++k) fe[off + k] = pr.f_edge(e.x[k]);
    off += e.n;
  }
  return solve_bvp_with(d, ops[0], ops[1], edges, f, fe, pr);
}

}  // namespace surfpde
