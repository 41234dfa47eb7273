#include "surfpde/solve.hpp"

#include <cmath>
#include <stdexcept>

namespace surfpde {

namespace {

struct Givens {
  double c = 0;
  Cplx s = 0;
};

// zrotg-style rotation zeroing b against a; returns the rotated diagonal r
Givens make_givens(Cplx a, Cplx b, Cplx& r) {
  Givens g;
  const double na = std::abs(a), nb = std::abs(b);
  if (nb == 0) {
    g.c = 1;
    g.s = 0;
    r = a;
  } else if (na == 0) {
    g.c = 0;
    g.s = std::conj(b) / nb;
    r = nb;
  } else {
    const double n = std::hypot(na, nb);
    const Cplx alpha = a / na;
    g.c = na / n;
    g.s = alpha * std::conj(b) / n;
    r = alpha * n;
  }
  return g;
}

}  // namespace

Eigen::MatrixXcd gmres(
    const std::function<Eigen::MatrixXcd(const Eigen::MatrixXcd&)>& apply,
    const Eigen::MatrixXcd& rhs, double tol, int maxit,
    std::vector<GmresStats>* stats_out) {
  const int N = int(rhs.rows()), K = int(rhs.cols());
  maxit = std::min(maxit, N);
  std::vector<GmresStats> stats(K);
  Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(N, K);

  std::vector<std::vector<Eigen::VectorXcd>> V(K);
  std::vector<Eigen::MatrixXcd> H(K);
  std::vector<std::vector<Givens>> rot(K);
  std::vector<Eigen::VectorXcd> g(K);
  std::vector<double> bnorm(K);
  std::vector<int> depth(K, 0);  // accepted Arnoldi steps per column
  std::vector<char> active(K, 1);

  for (int k = 0; k < K; ++k) {
    bnorm[k] = rhs.col(k).norm();
    if (bnorm[k] == 0) {
      active[k] = 0;
      stats[k].converged = true;
      continue;
    }
    V[k].push_back(rhs.col(k) / bnorm[k]);
    H[k].setZero(maxit + 1, maxit);
    g[k].setZero(maxit + 1);
    g[k][0] = bnorm[k];
    rot[k].reserve(maxit);
  }

  for (int it = 0; it < maxit; ++it) {
    std::vector<int> cols;
    for (int k = 0; k < K; ++k)
      if (active[k]) cols.push_back(k);
    if (cols.empty()) break;

    Eigen::MatrixXcd Win(N, int(cols.size()));
    for (int q = 0; q < int(cols.size()); ++q) Win.col(q) = V[cols[q]].back();
    Eigen::MatrixXcd Wout = apply(Win);

    for (int q = 0; q < int(cols.size()); ++q) {
      const int k = cols[q];
      Eigen::VectorXcd w = Wout.col(q);
      const double wn0 = w.norm();
      for (int j = 0; j <= it; ++j) {
        const Cplx h = V[k][j].dot(w);
        H[k](j, it) += h;
        w -= h * V[k][j];
      }
      if (w.norm() < 0.1 * wn0) {  // one reorthogonalization pass
        for (int j = 0; j <= it; ++j) {
          const Cplx h = V[k][j].dot(w);
          H[k](j, it) += h;
          w -= h * V[k][j];
        }
      }
      const double hnext = w.norm();
      H[k](it + 1, it) = hnext;

      for (int j = 0; j < it; ++j) {
        const Cplx hj = H[k](j, it), hj1 = H[k](j + 1, it);
        H[k](j, it) = rot[k][j].c * hj + rot[k][j].s * hj1;
        H[k](j + 1, it) = -std::conj(rot[k][j].s) * hj + rot[k][j].c * hj1;
      }
      Cplx r;
      rot[k].push_back(make_givens(H[k](it, it), H[k](it + 1, it), r));
      H[k](it, it) = r;
      H[k](it + 1, it) = 0;
      const Givens& gi = rot[k].back();
      const Cplx gt = g[k][it];
      g[k][it] = gi.c * gt + gi.s * g[k][it + 1];
      g[k][it + 1] = -std::conj(gi.s) * gt;

      depth[k] = it + 1;
      const double res = std::abs(g[k][it + 1]) / bnorm[k];
      stats[k].residuals.push_back(res);
      stats[k].iterations = it + 1;
      if (res <= tol) {
        stats[k].converged = true;
        active[k] = 0;
      } else if (hnext <= 1e-14 * wn0) {
        // invariant subspace; the residual cannot improve further
        active[k] = 0;
      } else {
        V[k].push_back(w / hnext);
      }
    }
  }

  for (int k = 0; k < K; ++k) {
    const int m = depth[k];
    if (m == 0) continue;
    Eigen::VectorXcd y(m);
    for (int i = m - 1; i >= 0; --i) {
      Cplx s = g[k][i];
      for (int j = i + 1; j < m; ++j) s -= H[k](i, j) * y[j];
      y[i] = s / H[k](i, i);
    }
    for (int j = 0; j < m; ++j) X.col(k) += y[j] * V[k][j];
  }

  if (stats_out) *stats_out = std::move(stats);
  return X;
}

Eigen::VectorXcd gmres(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
    const Eigen::VectorXcd& rhs, double tol, int maxit, GmresStats* stats) {
  auto block_apply = [&](const Eigen::MatrixXcd& X) -> Eigen::MatrixXcd {
    Eigen::MatrixXcd Y(X.rows(), X.cols());
    for (int c = 0; c < X.cols(); ++c)
      Y.col(c) = apply(Eigen::VectorXcd(X.col(c)));
    return Y;
  };
  std::vector<GmresStats> all;
  Eigen::MatrixXcd X = gmres(block_apply, Eigen::MatrixXcd(rhs), tol, maxit, &all);
  if (stats) *stats = std::move(all[0]);
  return X.col(0);
}

Solution solve_with(const Discretization& d, const DiscreteOperator& opR,
                    const DiscreteOperator& opK, const Eigen::VectorXcd& f,
                    const Problem& pr) {
  Solution sol;
  double total_w = 0;
  for (double w : d.wsg) total_w += w;

  if (d.co.lb_type()) {
    Cplx fbar = 0;
    double fnorm2 = 0;
    for (int i = 0; i < d.N; ++i) {
      fbar += d.wsg[i] * f[i];
      fnorm2 += d.wsg[i] * std::norm(f[i]);
    }
    if (std::abs(fbar) > 100 * pr.quad_tol * std::sqrt(fnorm2 * total_w))
      sol.warning = "right-hand side is not mean-zero; the compatibility "
                    "condition fails and the computed solution balances the "
                    "projected problem instead";
  }

  std::vector<GmresStats> st;
  Eigen::MatrixXcd sig = gmres(
      [&](const Eigen::MatrixXcd& X) { return opR.apply(X); },
      Eigen::MatrixXcd(f), pr.gmres_tol, pr.maxit, &st);
  sol.sigma = sig.col(0);
  sol.stats = std::move(st[0]);
  if (!sol.stats.converged)
    throw std::runtime_error(
        "gmres stalled at relative residual " +
        std::to_string(sol.stats.residuals.empty()
                           ? 1.0
                           : sol.stats.residuals.back()) +
        " after " + std::to_string(sol.stats.iterations) + " iterations");

  sol.u = opK.apply(Eigen::VectorXcd(sol.sigma));

  if (d.co.lb_type()) {
    Cplx ubar = 0;
    for (int i = 0; i < d.N; ++i) ubar += d.wsg[i] * sol.u[i];
    sol.u_mean = ubar / total_w;
    sol.u.array() -= sol.u_mean;
  }
  return sol;
}

Solution solve_pde(const Problem& pr) {
  if (pr.bvp != BvpKind::none)
    throw std::invalid_argument(
        "solve_pde handles closed surfaces; boundary-value problems go "
        "through solve_bvp");
  Discretization d = build_discretization(pr.surface, pr.level, pr.p, pr.co);
  auto ops = build_operators(d, {KernelId::R, KernelId::K}, pr.op_options());
  Eigen::VectorXcd f(d.N);
  for (int i = 0; i < d.N; ++i) f[i] = pr.f(d.x[i]);
  return solve_with(d, ops[0], ops[1], f, pr);
}

}  // namespace surfpde
