#include "surfpde/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>

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

double max_diff(const MomentSet& a, const MomentSet& b, const MomentSet& c) {
  double m = 0;
  for (size_t k = 0; k < a.size(); ++k)
    m = std::max(m, (a[k] - b[k] - c[k]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

double l_theta(double u0, double v0, double theta) {
  if (!(u0 > 0 && v0 > 0 && u0 + v0 < 1))
    throw std::domain_error("l_theta: preimage must be interior to T0");
  const double cu = std::cos(theta), sv = std::sin(theta);
  double best = std::numeric_limits<double>::infinity();
  if (cu < 0) best = std::min(best, -u0 / cu);          // edge u = 0
  if (sv < 0) best = std::min(best, -v0 / sv);          // edge v = 0
  if (cu + sv > 0) best = std::min(best, (1 - u0 - v0) / (cu + sv));
  return best;
}

SrcKernel kernel_fn(KernelId id, const SurfaceSample& target,
                    const Coefficients& co, const Vec3& nu) {
  if (id == KernelId::GradSourceK || id == KernelId::GradSourceR)
    throw std::invalid_argument(
        "kernel_fn: source-gradient kernels vary with the integration point");
  return [id, target, co, nu](const SurfaceSample& s) {
    return kernel_eval(id, target, s, co,
                       id == KernelId::GradTargetK ? &nu : nullptr);
  };
}

SrcKernel kernel_fn(KernelId id, const Vec3& target, const Coefficients& co,
                    const Vec3& nu) {
  if (id != KernelId::K && id != KernelId::GradTargetK)
    throw std::invalid_argument(
        "kernel_fn: a bare point target supports only K and GradTargetK");
  return [id, target, co, nu](const SurfaceSample& s) {
    return kernel_eval_point(id, target, s, co,
                             id == KernelId::GradTargetK ? &nu : nullptr);
  };
}

std::vector<Eigen::RowVectorXcd> self_quad_rows(
    const Patch& pa, const NodeBasis& basis, int node_index,
    const std::vector<SrcKernel>& kernels, double tol) {
  return self_quad_rows(pa, basis, basis.u[node_index], basis.v[node_index],
                        kernels, tol);
}

std::vector<Eigen::RowVectorXcd> self_quad_rows(
    const Patch& pa, const NodeBasis& basis, double u0, double v0,
    const std::vector<SrcKernel>& kernels, double tol) {
  const int np = basis.n, nk = int(kernels.size());
  const GL16& g = gl16();

  // theta panels: seed at the corner directions where L(theta) has kinks,
  // then bisect until L^2 is integrated to a length-proportional share of tol
  std::array<double, 3> corner = {std::atan2(-v0, -u0), std::atan2(-v0, 1 - u0),
                                  std::atan2(1 - v0, -u0)};
  std::sort(corner.begin(), corner.end());
  auto l2_int = [&](double a, double b) {
    double s = 0;
    for (int q = 0; q < 16; ++q) {
      double th = 0.5 * (a + b) + 0.5 * (b - a) * g.x[q];
      double L = l_theta(u0, v0, th);
      s += 0.5 * (b - a) * g.w[q] * L * L;
    }
    return s;
  };
  std::vector<std::pair<double, double>> panels;
  {
    struct Item {
      double a, b, I;
      int depth;
    };
    std::vector<Item> stack;
    for (int i = 0; i < 3; ++i) {
      double a = corner[i], b = (i == 2 ? corner[0] + 2 * M_PI : corner[i + 1]);
      stack.push_back({a, b, l2_int(a, b), 0});
    }
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      double mid = 0.5 * (it.a + it.b);
      double Il = l2_int(it.a, mid), Ir = l2_int(mid, it.b);
      if (std::abs(it.I - Il - Ir) <= tol * (it.b - it.a) / (2 * M_PI)) {
        panels.emplace_back(it.a, it.b);
        continue;
      }
      if (it.depth >= 30)
        throw QuadratureError("self_quad_rows: theta refinement stalled",
                              std::abs(it.I - Il - Ir));
      stack.push_back({it.a, mid, Il, it.depth + 1});
      stack.push_back({mid, it.b, Ir, it.depth + 1});
    }
  }

  std::vector<double> kv(np);
  auto radial_rule = [&](double th, double ra, double rb) {
    MomentSet mom = zero_moments(nk, np);
    const double ct = std::cos(th), st = std::sin(th);
    for (int q = 0; q < 16; ++q) {
      const double rho = 0.5 * (ra + rb) + 0.5 * (rb - ra) * g.x[q];
      const double wq = 0.5 * (rb - ra) * g.w[q];
      SurfaceSample s;
      if (!sample_patch_maybe(pa, u0 + rho * ct, v0 + rho * st, s))
        continue;  // pole edge: the Jacobian kills the contribution
      koornwinder(basis.p, u0 + rho * ct, v0 + rho * st, kv.data());
      for (int k = 0; k < nk; ++k) {
        const Cplx cfac = kernels[k](s) * (s.sqrtg * rho * wq);
        for (int n = 0; n < np; ++n) mom[k][n] += cfac * kv[n];
      }
    }
    return mom;
  };

  MomentSet total = zero_moments(nk, np);
  const double tol_r = tol / (2 * M_PI);
  // two-level adaptive radial panels; the rho drho measure keeps every PDE
  // kernel bounded here, the subdivision just chases the endpoint where the
  // integrand loses smoothness
  std::function<void(double, double, double, const MomentSet&, MomentSet&, int,
                     double, double)>
      refine = [&](double th, double ra, double rb, const MomentSet& whole,
                   MomentSet& acc, int depth, double L, double wth) {
        const double mid = 0.5 * (ra + rb);
        MomentSet left = radial_rule(th, ra, mid);
        MomentSet right = radial_rule(th, mid, rb);
        const double diff = max_diff(whole, left, right);
        if (diff <= tol_r * (rb - ra) / L) {
          for (int k = 0; k < nk; ++k) acc[k] += wth * (left[k] + right[k]);
          return;
        }
        if (depth >= 30)
          throw QuadratureError("self_quad_rows: radial refinement stalled",
                                diff);
        refine(th, ra, mid, left, acc, depth + 1, L, wth);
        refine(th, mid, rb, right, acc, depth + 1, L, wth);
      };

  for (auto [a, b] : panels) {
    for (int q = 0; q < 16; ++q) {
      const double th = 0.5 * (a + b) + 0.5 * (b - a) * g.x[q];
      const double wth = 0.5 * (b - a) * g.w[q];
      const double L = l_theta(u0, v0, th);
      MomentSet whole = radial_rule(th, 0, L);
      refine(th, 0, L, whole, total, 0, L, wth);
    }
  }

  std::vector<Eigen::RowVectorXcd> rows(nk);
  for (int k = 0; k < nk; ++k) rows[k] = times_U(total[k], basis.U);
  return rows;
}

std::vector<Eigen::RowVectorXcd> near_quad_rows(
    const Patch& pa, const NodeBasis& basis, const Vec3& target,
    const std::vector<SrcKernel>& kernels, double tol) {
  const int np = basis.n, nk = int(kernels.size());
  const Vec3 c0 = patch_position(pa, 0, 0), c1 = patch_position(pa, 1, 0),
             c2 = patch_position(pa, 0, 1);
  const Vec3 cen = (c0 + c1 + c2) / 3;
  const double radius = std::max({(c0 - cen).norm(), (c1 - cen).norm(),
                                  (c2 - cen).norm()});
  const double guard = 1e-12 * radius;

  using P2 = std::array<double, 2>;
  std::vector<double> kv(np);
  auto rule = [&](const P2& A, const P2& B, const P2& C) {
    MomentSet mom = zero_moments(nk, np);
    const double det =
        (B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0]);
    for (int j = 0; j < np; ++j) {
      const double u =
          A[0] + (B[0] - A[0]) * basis.u[j] + (C[0] - A[0]) * basis.v[j];
      const double v =
          A[1] + (B[1] - A[1]) * basis.u[j] + (C[1] - A[1]) * basis.v[j];
      SurfaceSample s;
      if (!sample_patch_maybe(pa, u, v, s))
        continue;  // pole edge: the Jacobian kills the contribution
      if ((s.x - target).norm() < guard)
        throw QuadratureError("near_quad_rows: target lies on the patch", 0);
      koornwinder(basis.p, u, v, kv.data());
      for (int k = 0; k < nk; ++k) {
        const Cplx cfac = kernels[k](s) * (basis.w[j] * det * s.sqrtg);
        for (int n = 0; n < np; ++n) mom[k][n] += cfac * kv[n];
      }
    }
    return mom;
  };

  MomentSet total = zero_moments(nk, np);
  // per-depth error share 2^-depth: geometric, so the whole tree still sums
  // to O(tol) while boxes crowding a nearby singularity keep a workable
  // budget
  std::function<void(const P2&, const P2&, const P2&, const MomentSet&, int)>
      rec = [&](const P2& A, const P2& B, const P2& C, const MomentSet& whole,
                int depth) {
        const P2 ab{0.5 * (A[0] + B[0]), 0.5 * (A[1] + B[1])};
        const P2 ac{0.5 * (A[0] + C[0]), 0.5 * (A[1] + C[1])};
        const P2 bc{0.5 * (B[0] + C[0]), 0.5 * (B[1] + C[1])};
        MomentSet r0 = rule(A, ab, ac), r1 = rule(ab, B, bc),
                  r2 = rule(ac, bc, C), r3 = rule(ab, bc, ac);
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
          throw QuadratureError("near_quad_rows: refinement stalled", diff);
        rec(A, ab, ac, r0, depth + 1);
        rec(ab, B, bc, r1, depth + 1);
        rec(ac, bc, C, r2, depth + 1);
        rec(ab, bc, ac, r3, depth + 1);
      };

  const P2 A{0, 0}, B{1, 0}, C{0, 1};
  rec(A, B, C, rule(A, B, C), 0);

  std::vector<Eigen::RowVectorXcd> rows(nk);
  for (int k = 0; k < nk; ++k) rows[k] = times_U(total[k], basis.U);
  return rows;
}

std::vector<Eigen::RowVectorXcd> smooth_quad_rows(
    const Patch& pa, const NodeBasis& basis,
    const std::vector<SrcKernel>& kernels) {
  const int np = basis.n, nk = int(kernels.size());
  std::vector<Eigen::RowVectorXcd> rows(nk, Eigen::RowVectorXcd(np));
  for (int j = 0; j < np; ++j) {
    SurfaceSample s = sample_patch(pa, basis.u[j], basis.v[j]);
    for (int k = 0; k < nk; ++k)
      rows[k][j] = kernels[k](s) * (basis.w[j] * s.sqrtg);
  }
  return rows;
}

Eigen::RowVectorXcd self_quad_row(const Patch& pa, const NodeBasis& basis,
                                  int node_index, KernelId id,
                                  const Coefficients& co, double tol) {
  SurfaceSample t = sample_patch(pa, basis.u[node_index], basis.v[node_index]);
  return self_quad_rows(pa, basis, node_index, {kernel_fn(id, t, co)},
                        tol)[0];
}

Eigen::RowVectorXcd near_quad_row(const Patch& pa, const NodeBasis& basis,
                                  const SurfaceSample& target, KernelId id,
                                  const Coefficients& co, double tol) {
  return near_quad_rows(pa, basis, target.x, {kernel_fn(id, target, co)},
                        tol)[0];
}

Eigen::RowVectorXcd smooth_quad_row(const Patch& pa, const NodeBasis& basis,
                                    const SurfaceSample& target, KernelId id,
                                    const Coefficients& co) {
  return smooth_quad_rows(pa, basis, {kernel_fn(id, target, co)})[0];
}

std::vector<PatchGeo> patch_geometry(const std::vector<Patch>& patches) {
  std::vector<PatchGeo> geo(patches.size());
  for (size_t i = 0; i < patches.size(); ++i) {
    const Vec3 c0 = patch_position(patches[i], 0, 0),
               c1 = patch_position(patches[i], 1, 0),
               c2 = patch_position(patches[i], 0, 1);
    geo[i].centroid = (c0 + c1 + c2) / 3;
    geo[i].radius = std::max({(c0 - geo[i].centroid).norm(),
                              (c1 - geo[i].centroid).norm(),
                              (c2 - geo[i].centroid).norm()});
  }
  return geo;
}

std::vector<std::vector<int>> classify_targets(
    const std::vector<Patch>& patches, const std::vector<Vec3>& targets,
    const std::vector<int>& owner_patch) {
  auto geo = patch_geometry(patches);
  std::vector<std::vector<int>> near(targets.size());
  for (size_t t = 0; t < targets.size(); ++t) {
    for (size_t m = 0; m < patches.size(); ++m)
      if ((targets[t] - geo[m].centroid).norm() <= 1.5 * geo[m].radius)
        near[t].push_back(int(m));
    if (!owner_patch.empty()) {
      int own = owner_patch[t];
      if (std::find(near[t].begin(), near[t].end(), own) == near[t].end())
        near[t].insert(
            std::lower_bound(near[t].begin(), near[t].end(), own), own);
    }
  }
  return near;
}

}  // namespace surfpde
