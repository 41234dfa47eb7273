#include "surfpde/simplex_basis.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "surfpde/special_functions.hpp"

namespace surfpde {

namespace {

std::string data_path(const char* fname) {
  const char* env = std::getenv("SURFPDE_DATA_DIR");
  std::string dir = env ? env : SURFPDE_DATA_DIR;
  return dir + "/" + fname;
}

NodeBasis load_basis(int p) {
  std::string path = data_path(("nodes_p" + std::to_string(p) + ".txt").c_str());
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("build_basis: cannot open " + path);
  NodeBasis b;
  in >> b.p;
  if (b.p != p) throw std::runtime_error("build_basis: order mismatch in " + path);
  b.n = p * (p + 1) / 2;
  b.u.resize(b.n);
  b.v.resize(b.n);
  for (int j = 0; j < b.n; ++j) {
    in >> b.u[j] >> b.v[j];
    if (!in.good()) throw std::runtime_error("build_basis: truncated table " + path);
    if (!(b.u[j] > 0 && b.v[j] > 0 && b.u[j] + b.v[j] < 1))
      throw std::runtime_error("build_basis: node outside open T0");
  }
  b.V.resize(b.n, b.n);
  for (int j = 0; j < b.n; ++j) {
    auto row = koornwinder(p, b.u[j], b.v[j]);
    for (int m = 0; m < b.n; ++m) b.V(j, m) = row[m];
  }
  b.U = b.V.inverse();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.V);
  b.cond = svd.singularValues()(0) / svd.singularValues()(b.n - 1);
  if (b.cond > 1e4) throw std::runtime_error("build_basis: Vandermonde condition bound violated");
  if ((b.V * b.U - Eigen::MatrixXd::Identity(b.n, b.n)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::runtime_error("build_basis: V U deviates from identity");
  b.w.resize(b.n);
  double sum = 0;
  for (int j = 0; j < b.n; ++j) {
    b.w[j] = (std::sqrt(2.0) / 2) * b.U(0, j);
    if (!(b.w[j] > 0)) throw std::runtime_error("build_basis: nonpositive weight");
    sum += b.w[j];
  }
  if (std::abs(sum - 0.5) > 1e-12) throw std::runtime_error("build_basis: weights do not sum to 1/2");
  return b;
}

}  // namespace

const NodeBasis& build_basis(int p) {
  if (p != 4 && p != 8 && p != 16)
    throw std::domain_error("build_basis: supported orders are 4, 8, 16");
  static const std::map<int, NodeBasis> cache = [] {
    std::map<int, NodeBasis> m;
    for (int q : {4, 8, 16}) m.emplace(q, load_basis(q));
    return m;
  }();
  return cache.at(p);
}

void interp_row(const NodeBasis& basis, double u, double v, double* out) {
  double k[512];
  koornwinder(basis.p, u, v, k);
  Eigen::Map<const Eigen::RowVectorXd> kv(k, basis.n);
  Eigen::Map<Eigen::RowVectorXd>(out, basis.n) = kv * basis.U;
}

std::vector<double> interp_row(const NodeBasis& basis, double u, double v) {
  std::vector<double> out(basis.n);
  interp_row(basis, u, v, out.data());
  return out;
}

}  // namespace surfpde
