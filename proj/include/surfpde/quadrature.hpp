#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "surfpde/geometry.hpp"
#include "surfpde/kernels.hpp"
#include "surfpde/simplex_basis.hpp"

namespace surfpde {

struct QuadratureError : std::runtime_error {
  double estimate;
  QuadratureError(const std::string& what, double est)
      : std::runtime_error(what), estimate(est) {}
};

// Ray length from an interior preimage to the boundary of T0; piecewise
// smooth in theta with kinks at the three corner directions, bounded by
// sqrt(2).
double l_theta(double u0, double v0, double theta);

// Per-row integration works against a kernel of the source point only (the
// target is frozen into the closure).  This keeps the machinery reusable for
// diagnostic kernels that are not part of the PDE set.
using SrcKernel = std::function<Cplx(const SurfaceSample&)>;

// Standard kernels bound to a fixed target.  nu is required for the gradient
// kernels and ignored otherwise.
SrcKernel kernel_fn(KernelId id, const SurfaceSample& target,
                    const Coefficients& co, const Vec3& nu = Vec3::Zero());
SrcKernel kernel_fn(KernelId id, const Vec3& target, const Coefficients& co,
                    const Vec3& nu = Vec3::Zero());

// Row weights r such that r . sigma_nodes ~ integral over the patch of
// kernel * (interpolant of sigma) dA.
//
// self: polar coordinates about the node preimage; theta panels refined
// until L^2(theta) is integrated to tol, then adaptive Gauss-Legendre in the
// radial variable, whose r dr measure cancels the kernel singularity.
//
// near: Koornwinder moments by recursive quadrisection with the smooth rule
// on each subtriangle, two-level agreement against a per-depth share of tol.
//
// All kernels in one call share geometry samples and adaptivity decisions.
std::vector<Eigen::RowVectorXcd> self_quad_rows(
    const Patch& pa, const NodeBasis& basis, int node_index,
    const std::vector<SrcKernel>& kernels, double tol);
// same machinery about an arbitrary interior preimage (on-patch targets that
// are not nodes, e.g. potential evaluation near an edge)
std::vector<Eigen::RowVectorXcd> self_quad_rows(
    const Patch& pa, const NodeBasis& basis, double u0, double v0,
    const std::vector<SrcKernel>& kernels, double tol);
std::vector<Eigen::RowVectorXcd> near_quad_rows(
    const Patch& pa, const NodeBasis& basis, const Vec3& target,
    const std::vector<SrcKernel>& kernels, double tol);
std::vector<Eigen::RowVectorXcd> smooth_quad_rows(
    const Patch& pa, const NodeBasis& basis,
    const std::vector<SrcKernel>& kernels);

// Single-kernel conveniences.
Eigen::RowVectorXcd self_quad_row(const Patch& pa, const NodeBasis& basis,
                                  int node_index, KernelId id,
                                  const Coefficients& co, double tol);
Eigen::RowVectorXcd near_quad_row(const Patch& pa, const NodeBasis& basis,
                                  const SurfaceSample& target, KernelId id,
                                  const Coefficients& co, double tol);
Eigen::RowVectorXcd smooth_quad_row(const Patch& pa, const NodeBasis& basis,
                                    const SurfaceSample& target, KernelId id,
                                    const Coefficients& co);

// Near-field classification: target is near a patch when it lies within 1.5
// patch radii of the centroid (radius = max vertex distance).  owner_patch
// forces each node's own patch into its list even if the metric test misses
// it on a strongly curved patch; pass an empty vector for free targets.
struct PatchGeo {
  Vec3 centroid;
  double radius;
};
std::vector<PatchGeo> patch_geometry(const std::vector<Patch>& patches);
std::vector<std::vector<int>> classify_targets(
    const std::vector<Patch>& patches, const std::vector<Vec3>& targets,
    const std::vector<int>& owner_patch = {});

}  // namespace surfpde
