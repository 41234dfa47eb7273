#pragma once

#include <vector>

#include <Eigen/Dense>

namespace surfpde {

struct NodeBasis {
  int p = 0;
  int n = 0;              // n_p = p(p+1)/2
  std::vector<double> u;  // node preimages, strictly interior to T0
  std::vector<double> v;
  std::vector<double> w;  // smooth weights, sum = |T0| = 1/2
  Eigen::MatrixXd V;      // V(j, m) = K_m(u_j, v_j)
  Eigen::MatrixXd U;      // V^{-1}
  double cond = 0;        // 2-norm condition number of V
};

// Load the committed node table for p in {4, 8, 16} and assemble the
// Vandermonde machinery.  Node sets are approximate Fekete points generated
// offline; build-time checks re-verify interiority, positive weights summing
// to 1/2, V U = I, and the conditioning bound.
const NodeBasis& build_basis(int p);

// Row r with r . (node values of f) = (degree-<p interpolant of f)(u, v),
// computed as koornwinder(u, v) . U.
void interp_row(const NodeBasis& basis, double u, double v, double* out);
std::vector<double> interp_row(const NodeBasis& basis, double u, double v);

}  // namespace surfpde
