#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "surfpde/geometry.hpp"
#include "surfpde/kernels.hpp"
#include "surfpde/quadrature.hpp"
#include "surfpde/simplex_basis.hpp"

namespace surfpde {

// Everything sampled once per (surface, level, p, coefficients) tuple.  The
// flat arrays double the node storage but keep the O(N^2) entry loops on
// contiguous 24-byte positions instead of striding through SurfaceSample.
struct Discretization {
  std::vector<Patch> patches;
  const NodeBasis* basis = nullptr;
  Coefficients co;
  int level = 0;
  int N = 0;

  std::vector<SurfaceSample> nodes;
  std::vector<Vec3> x;         // node positions
  std::vector<double> wsg;     // smooth weight times sqrt(det g)
  std::vector<TargetSide> tside;
  std::vector<double> a_src;   // coefficients sampled at nodes (source side)
  std::vector<Cplx> c_src;
  std::vector<std::vector<int>> near;  // near patch ids per node (self incl.)

  double diameter = 0;   // bounding-box diagonal of the nodes
  double far_rmin = 0;   // lower bound on distances of non-near pairs

  int patch_of(int i) const { return i / basis->n; }
  int local_of(int i) const { return i % basis->n; }
};

Discretization build_discretization(const SurfaceDef& def, int level, int p,
                                    const Coefficients& co);

// Radial tables shared by every operator built over one discretization.
// Constant coefficients get one global Green table plus the two Hankel
// factors of the constant-coefficient remainder; variable c gets one Green
// table per source node (kappa is frozen per source), skipped when the
// estimated footprint exceeds the budget.
struct EntryTables {
  std::unique_ptr<GreenTable> global;
  std::unique_ptr<ChebTable> rem_h1, rem_h2;
  std::vector<GreenTable> per_src;
};

std::shared_ptr<const EntryTables> build_entry_tables(
    const Discretization& d, bool use_tables, std::size_t table_bytes);

// Far-field matrix entries: kernel(x_i, x_j) * wsg_j for i != j, zero on the
// diagonal, for every pair including near ones (corrections subtract these
// back).  Dispatch on the coefficient class is resolved at construction.
class EntryGen {
 public:
  EntryGen(const Discretization& d, KernelId id,
           std::shared_ptr<const EntryTables> tables);

  Cplx operator()(int i, int j) const;
  void row_block(int i, int j0, int j1, Cplx* out) const;
  int size() const { return d_.N; }

 private:
  enum class Mode { LbK, LbR, ConstK, ConstR, VarK, VarR, GenK, GenR };
  const Discretization& d_;
  KernelId id_;
  Mode mode_;
  std::shared_ptr<const EntryTables> tab_;
  GreenTriple triple(int j, double r) const;
};

// y = A_far x with A_far the smooth-Nystrom matrix above.  Dense stores it,
// streamed regenerates entries per apply; the fast multipole backend
// implements the same interface in its own module.
class FarApplier {
 public:
  virtual ~FarApplier() = default;
  virtual void apply(const Eigen::MatrixXcd& X, Eigen::MatrixXcd& Y) const = 0;
  virtual void add_to_dense(Eigen::MatrixXcd& A) const = 0;
};

std::shared_ptr<const FarApplier> make_dense_far(const EntryGen& gen);
std::shared_ptr<const FarApplier> make_streamed_far(
    std::shared_ptr<const EntryGen> gen);

struct Correction {
  int patch;
  Eigen::RowVectorXcd row;  // applies to that patch's block of sigma
};

// The discrete operator: optional identity, far backend, sparse near-field
// corrections (accurate row minus the far entries they replace), and the
// rank-one term sum_j wsg_j sigma_j added to every output entry for the
// null-space fix.
struct DiscreteOperator {
  const Discretization* disc = nullptr;
  KernelId id = KernelId::R;
  bool identity = true;
  bool rank_one = false;
  std::vector<std::vector<Correction>> corrections;
  std::shared_ptr<const FarApplier> far;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const;  // lockstep RHS
};

struct OperatorOptions {
  double tol = 1e-7;        // near/self quadrature tolerance
  bool rank_one = true;     // engage for LB-type R systems
  bool use_tables = true;   // radial tables in the entry generator
  std::size_t dense_bytes = 1'500'000'000;  // running budget for dense far
  std::size_t table_bytes = 1'200'000'000;  // per-source table budget
  bool force_streamed = false;
};

// Operators built together share one self/near quadrature traversal (the
// dominant cost) and one table set.  Ids are served dense-first in order
// while the dense budget lasts, so put the iterated operator first.
std::vector<DiscreteOperator> build_operators(const Discretization& d,
                                              const std::vector<KernelId>& ids,
                                              const OperatorOptions& opt = {});
DiscreteOperator build_operator(const Discretization& d, KernelId id,
                                const OperatorOptions& opt = {});

// Full matrix of the operator, for spectral studies at small N.
Eigen::MatrixXcd to_dense(const DiscreteOperator& op);

// u(x) = integral of K(x, .) sigma for arbitrary targets (on or off the
// surface); near patches go through the adaptive quadrature, far ones
// through the smooth rule.
Eigen::VectorXcd evaluate_at_points(const Discretization& d,
                                    const Eigen::VectorXcd& sigma,
                                    const std::vector<Vec3>& targets,
                                    double tol);

}  // namespace surfpde
