#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "surfpde/assembly.hpp"

namespace surfpde {

struct GmresStats {
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;  // relative residual after each iteration
};

// Non-restarted GMRES with modified Gram-Schmidt and complex Givens
// rotations.  The multi right-hand-side variant runs one Arnoldi process per
// column but hands the operator all current basis vectors as a block, so a
// streamed or fast backend pays for its pass over the matrix once per
// iteration instead of once per column.
Eigen::MatrixXcd gmres(
    const std::function<Eigen::MatrixXcd(const Eigen::MatrixXcd&)>& apply,
    const Eigen::MatrixXcd& rhs, double tol, int maxit,
    std::vector<GmresStats>* stats = nullptr);

Eigen::VectorXcd gmres(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
    const Eigen::VectorXcd& rhs, double tol, int maxit,
    GmresStats* stats = nullptr);

enum class BvpKind { none, neumann, dirichlet };

struct Problem {
  SurfaceDef surface;
  Coefficients co;
  std::function<Cplx(const Vec3&)> f;

  // boundary data; interpreted by the BVP solver when kind != none
  BvpKind bvp = BvpKind::none;
  std::function<Cplx(const Vec3&)> f_edge;
  int n_phi = 200;
  int oversample = 64;

  int level = 1;
  int p = 8;
  double quad_tol = 1e-7;
  double gmres_tol = 1e-9;
  int maxit = 500;

  // fast-backend knobs, consumed by callers that wire one in
  bool use_fmm = false;
  double fmm_tol = 1e-9;
  int k_s = 10000;
  unsigned long long seed = 1;

  OperatorOptions op_options() const {
    OperatorOptions o;
    o.tol = quad_tol;
    return o;
  }
};

struct Solution {
  Eigen::VectorXcd sigma;
  Eigen::VectorXcd mu;  // edge density, empty without a BVP
  Eigen::VectorXcd u;   // at the surface nodes
  GmresStats stats;
  Cplx u_mean = 0;      // subtracted from u for LB-type problems
  std::string warning;
};

// Core orchestration over prebuilt operators (callers may have swapped the
// far backend): solve (I + R [+ rank-one]) sigma = f, evaluate u = K sigma,
// subtract the mean for LB-type coefficients.
Solution solve_with(const Discretization& d, const DiscreteOperator& opR,
                    const DiscreteOperator& opK, const Eigen::VectorXcd& f,
                    const Problem& pr);

// Builds discretization and operators, samples f, runs solve_with.
Solution solve_pde(const Problem& pr);

}  // namespace surfpde
