#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "surfpde/quadrature.hpp"
#include "surfpde/solve.hpp"

namespace surfpde {

// A closed curve gamma : [0, 2pi] -> R^3 lying on the surface, with
// gamma(0) = gamma(2pi).  Any smooth parameterization works; speed need not
// be constant.
struct EdgeSpec {
  std::function<Vec3(double)> gamma;
};

// Boundary circles of an open chart, one spec per open coordinate end.
// Closed surfaces (both directions periodic) have no boundary and throw, as
// do charts with two open directions, whose boundary is not a union of
// closed coordinate circles.
std::vector<EdgeSpec> boundary_specs(const SurfaceDef& def);

// Closest point of the closed parameter triangle to X under the patch map,
// by damped Gauss-Newton from several starts.  dist is |F(u,v) - X|.
struct PatchProject {
  double u = 0, v = 0;
  double dist = 0;
};
PatchProject project_to_patch(const Patch& pa, const Vec3& X);

// Periodic trapezoid discretization of one edge, plus everything the edge
// operators need at the nodes: spectral tangents and curvature, the binormal
// nu (tangent to the surface, normal to the curve, pointing away from the
// surface side detected through the host patch; the patch list passed in
// decides which side that is), trapezoid weights |gamma'| 2pi/n, PDE
// coefficients, and the host-chart sample.  Fine arrays hold the same data
// on the oversampled grid for targets close to the curve, with the periodic
// cardinal function tabulated so rows can fold the Fourier interpolation of
// the density back onto the coarse nodes.
struct EdgeCurve {
  int n = 0;           // coarse nodes, t_k = 2 pi k / n
  int m = 0;           // oversampling factor
  double spacing = 0;  // largest arclength step between coarse nodes

  std::vector<Vec3> x, tang, nu;
  std::vector<double> w;
  std::vector<double> kappa_nu;  // nu . gamma'' / |gamma'|^2
  std::vector<double> a;
  std::vector<Cplx> c;
  std::vector<SurfaceSample> samp;
  std::vector<int> host;
  std::vector<double> pre_u, pre_v;

  std::vector<Vec3> xf, nuf;
  std::vector<double> wf;
  // cardinal[(f - k*m) mod n*m] weights coarse node k at fine node f
  std::vector<double> cardinal;
};

// n_phi must be even and at least 16.  Every node must land on some patch in
// the list (distance above 1e-10 is a geometry error).
EdgeCurve discretize_edge(const EdgeSpec& spec, int n_phi,
                          const std::vector<Patch>& patches,
                          const Coefficients& co, int oversample = 64);

// Row of an edge operator at an arbitrary target, entries against the coarse
// density values.  Source position comes off the curve, so all five kernels
// reduce to point evaluations: GradSourceK and GradSourceR take the stored
// source nu as direction, GradTargetK takes nu_target.  Within four coarse
// spacings of the curve the trapezoid rule runs on the oversampled nodes
// with the interpolation folded into the row; farther away the coarse nodes
// already resolve the kernel.
Eigen::RowVectorXcd edge_row(KernelId id, const EdgeCurve& e,
                             const SurfaceSample& target,
                             const Coefficients& co,
                             const Vec3& nu_target = Vec3::Zero());

// Bare-point variant for off-surface evaluation; K and GradTargetK only.
Eigen::RowVectorXcd edge_row_point(KernelId id, const EdgeCurve& e,
                                   const Vec3& target, const Coefficients& co,
                                   const Vec3& nu_target = Vec3::Zero());

// Row at coarse node k of the same edge.  On the curve GradTargetK (with
// nu_target = nu_k) and GradSourceK are smooth and share the finite
// coincidence limit -kappa_nu / (4 pi a), so the plain trapezoid rule keeps
// spectral accuracy; the other kernels are singular there and are rejected.
Eigen::RowVectorXcd edge_row_at_node(KernelId id, const EdgeCurve& e, int k,
                                     const Coefficients& co);

// Accurate patch rows for a target sitting on the closure of the parameter
// triangle, where the interior-only self rule and the off-patch near rule
// both give up.  The triangle is fanned about the preimage (u0, v0), so the
// target is a vertex of every integrated panel, and each fan triangle maps
// to a Duffy square whose Jacobian factor cancels a 1/r kernel singularity.
// Adaptive quadrisection of the squares under the same 2^-depth budget as
// the near rule.  Kernels receive source samples as usual; targets a small
// distance off the patch (up to about 1e-6 of its radius) are fine.
std::vector<Eigen::RowVectorXcd> fan_quad_rows(
    const Patch& pa, const NodeBasis& basis, double u0, double v0,
    const std::vector<SrcKernel>& kernels, double tol);

// Trace kinds of the single layer over a patch, evaluated at edge node k:
// conormal is nu_k . grad_x K, value the restriction of K, normal
// n(x) . grad_x K.  The node's projection into the patch picks the scheme
// (fan rule on the closure, adaptive near rule nearby, smooth rule far).
enum class TraceKind { conormal, value, normal };

Eigen::RowVectorXcd surface_to_edge_row(TraceKind kind, const EdgeCurve& e,
                                        int k, const Patch& pa,
                                        const NodeBasis& basis,
                                        const Coefficients& co, double tol);

// Coupled discretization of a boundary value problem over (sigma, mu).  The
// surface block is the prebuilt I + R operator (rank-one disabled); B maps
// edge densities to surface nodes, C restricts the surface layer to the edge
// nodes, D is the edge-to-edge block with the one-sided jump +-1/(2a) folded
// into its diagonal.  Neumann couples through the conormal derivative
// (B = R from the edge, C = conormal trace, D from GradTargetK, jump
// -1/(2a)); Dirichlet through values (B = GradSourceR, C = value trace,
// D from GradSourceK, jump +1/(2a)).
struct BlockSystem {
  BvpKind kind = BvpKind::neumann;
  const Discretization* disc = nullptr;
  const DiscreteOperator* opR = nullptr;
  Eigen::MatrixXcd B, C, D;

  int N() const { return int(C.cols()); }
  int M() const { return int(C.rows()); }
  Eigen::VectorXcd apply(const Eigen::VectorXcd& z) const;
};

BlockSystem build_block_system(const Discretization& d,
                               const DiscreteOperator& opR,
                               const std::vector<EdgeCurve>& edges,
                               BvpKind kind, double tol);

// GMRES on the block system, then u = K sigma plus the edge layer (K for
// Neumann, GradSourceK for Dirichlet) at the surface nodes.  No mean is
// subtracted: Dirichlet data pins the solution, and the Neumann constant
// (for coefficients with a null space) is the caller's to fix.  Reuses
// prebuilt surface parts so several boundary conditions can share one
// operator build.
Solution solve_bvp_with(const Discretization& d, const DiscreteOperator& opR,
                        const DiscreteOperator& opK,
                        const std::vector<EdgeCurve>& edges,
                        const Eigen::VectorXcd& f,
                        const Eigen::VectorXcd& f_edge, const Problem& pr);

// Full pipeline from a Problem with bvp != none: discretize the surface,
// discretize every boundary circle, build I + R and K (honoring use_fmm for
// the iterated far field), sample f and f_edge, and hand off.  Dirichlet
// requires constant a, b = 0, and constant or zero c.
Solution solve_bvp(const Problem& pr);

}  // namespace surfpde
