#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "surfpde/assembly.hpp"

namespace surfpde {

// Matrix entry oracle: A(i, j) for global point indices, zero diagonal by
// the caller's convention (the apply skips i == j in near blocks anyway).
using EntryFn = std::function<Cplx(int, int)>;

struct Octree {
  struct Box {
    Vec3 center = Vec3::Zero();
    double half = 0;
    int level = 0;
    int parent = -1;
    std::array<int, 8> child{{-1, -1, -1, -1, -1, -1, -1, -1}};
    std::vector<int> pts;  // global indices, leaves only
    bool leaf() const { return !pts.empty(); }
  };
  std::vector<Box> boxes;  // [0] is the root; children after parents
  int depth = 0;
};

// Adaptive subdivision: boxes over the capacity split, empty children are
// dropped.  Coincident points are guarded by a depth cap, where a leaf may
// exceed the capacity.
Octree build_tree(const std::vector<Vec3>& pts, int leaf_cap);

// One-sided interpolative decomposition of the sampled block
// M(r, c) = kernel(rows[r], cols[c]):  M ~ M(:, pos) * X  with X(:, pos) the
// identity.  skel holds the chosen global indices cols[pos].
struct IDFactor {
  std::vector<int> skel;
  std::vector<int> pos;
  Eigen::MatrixXcd X;  // rank x cols.size()
};

IDFactor skeletonize(const std::vector<int>& rows, const std::vector<int>& cols,
                     const EntryFn& kernel, double tol);

class FastOperator {
 public:
  FastOperator(std::vector<Vec3> pts, EntryFn kernel, double tol, int k_s,
               unsigned long long seed, int leaf_cap = 256);

  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& Q) const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& q) const;

  int size() const { return int(pts_.size()); }
  const Octree& tree() const { return tree_; }
  // skeleton sizes per box, for rank statistics and replay checks
  std::vector<std::vector<int>> out_skeletons() const;

 private:
  struct BoxData {
    std::vector<int> out_skel, in_skel;  // global point indices
    Eigen::MatrixXcd Xout;               // rank_out x n_out_cand
    Eigen::MatrixXcd Win;                // n_in_cand x rank_in
  };
  struct Pair {
    int target, source;
  };

  void compress_box(int b, const std::vector<int>& pool);
  void pair_up(int t, int s);
  std::vector<int> out_candidates(int b) const;
  std::vector<int> in_candidates(int b) const;
  Eigen::MatrixXcd far_block(const Pair& p) const;
  Eigen::MatrixXcd near_block(const Pair& p) const;
  void fill_caches();

  std::vector<Vec3> pts_;
  EntryFn kern_;
  double tol_ = 0;
  int k_s_ = 0;
  Octree tree_;
  std::vector<BoxData> data_;
  std::vector<Pair> far_, near_;
  // blocks cached under a byte budget; an empty matrix means regenerate
  std::vector<Eigen::MatrixXcd> far_cache_, near_cache_;
  // pair indices grouped by target box, so group loops parallelize without
  // write conflicts
  std::vector<std::pair<int, std::vector<int>>> far_by_t_, near_by_t_;
};

FastOperator ifmm_build(const std::vector<Vec3>& pts, const EntryFn& kernel,
                        double tol, int k_s, unsigned long long seed,
                        int leaf_cap = 256);

// FarApplier over a fast operator whose entries come from the assembly
// entry generator, for swapping into a DiscreteOperator.
std::shared_ptr<const FarApplier> make_fast_far(
    const Discretization& d, KernelId id,
    std::shared_ptr<const EntryTables> tables, double tol, int k_s,
    unsigned long long seed);

}  // namespace surfpde
