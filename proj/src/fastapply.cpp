#include "surfpde/fastapply.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace surfpde {

namespace {

constexpr int kMaxDepth = 20;
constexpr std::size_t kCacheBytes = 1'200'000'000;

int octant(const Vec3& p, const Vec3& c) {
  return (p.x() >= c.x() ? 1 : 0) + (p.y() >= c.y() ? 2 : 0) +
         (p.z() >= c.z() ? 4 : 0);
}

// ID of an explicit block.  The thin unpivoted QR first is exact algebra:
// pivot choices depend only on column inner products, which the triangular
// factor preserves, so it changes the flop count on tall blocks and nothing
// else.
IDFactor id_of_block(Eigen::MatrixXcd M, double tol) {
  const int n = int(M.cols());
  if (M.rows() > 2 * n) {
    Eigen::HouseholderQR<Eigen::MatrixXcd> pre(M);
    Eigen::MatrixXcd R0 =
        pre.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    M = std::move(R0);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(M);
  const int kmax = int(std::min(M.rows(), M.cols()));
  const auto& piv = qr.colsPermutation().indices();
  Eigen::MatrixXcd R = qr.matrixQR().topRows(kmax).triangularView<Eigen::Upper>();

  const double top = kmax ? std::abs(R(0, 0)) : 0.0;
  int rank = 0;
  while (rank < kmax) {
    const double d = std::abs(R(rank, rank));
    if (!(d > tol * top) || d == 0) break;
    ++rank;
  }

  IDFactor f;
  f.X = Eigen::MatrixXcd::Zero(rank, n);
  f.pos.resize(rank);
  if (rank) {
    Eigen::MatrixXcd X12 =
        R.topLeftCorner(rank, rank)
            .triangularView<Eigen::Upper>()
            .solve(R.topRightCorner(rank, n - rank));
    for (int k = 0; k < rank; ++k) f.X(k, piv(k)) = 1.0;
    for (int j = rank; j < n; ++j) f.X.col(piv(j)) = X12.col(j - rank);
    for (int k = 0; k < rank; ++k) f.pos[k] = piv(k);
  }
  return f;
}

}  // namespace

Octree build_tree(const std::vector<Vec3>& pts, int leaf_cap) {
  if (pts.empty()) throw std::invalid_argument("build_tree: no points");
  if (leaf_cap < 1) throw std::invalid_argument("build_tree: leaf_cap < 1");

  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Octree tree;
  Octree::Box root;
  root.center = 0.5 * (lo + hi);
  root.half = 0.5 * (hi - lo).maxCoeff() * (1 + 1e-12) +
              1e-12 * (1 + root.center.cwiseAbs().maxCoeff());
  root.pts.resize(pts.size());
  std::iota(root.pts.begin(), root.pts.end(), 0);
  tree.boxes.push_back(std::move(root));

  for (std::size_t b = 0; b < tree.boxes.size(); ++b) {
    if (int(tree.boxes[b].pts.size()) <= leaf_cap ||
        tree.boxes[b].level >= kMaxDepth)
      continue;
    std::vector<int> owned = std::move(tree.boxes[b].pts);
    tree.boxes[b].pts.clear();
    const Vec3 c = tree.boxes[b].center;
    const double h = tree.boxes[b].half;
    const int lvl = tree.boxes[b].level;

    std::array<std::vector<int>, 8> part;
    for (int i : owned) part[octant(pts[i], c)].push_back(i);
    for (int o = 0; o < 8; ++o) {
      if (part[o].empty()) continue;
      Octree::Box kid;
      kid.center = c + 0.5 * h *
                           Vec3(o & 1 ? 1.0 : -1.0, o & 2 ? 1.0 : -1.0,
                                o & 4 ? 1.0 : -1.0);
      kid.half = 0.5 * h;
      kid.level = lvl + 1;
      kid.parent = int(b);
      kid.pts = std::move(part[o]);
      tree.boxes[b].child[o] = int(tree.boxes.size());
      tree.depth = std::max(tree.depth, lvl + 1);
      tree.boxes.push_back(std::move(kid));
    }
  }
  return tree;
}

IDFactor skeletonize(const std::vector<int>& rows, const std::vector<int>& cols,
                     const EntryFn& kernel, double tol) {
  Eigen::MatrixXcd M(rows.size(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r)
      M(r, c) = kernel(rows[r], cols[c]);
  IDFactor f = id_of_block(std::move(M), tol);
  f.skel.resize(f.pos.size());
  for (std::size_t k = 0; k < f.pos.size(); ++k) f.skel[k] = cols[f.pos[k]];
  return f;
}

FastOperator::FastOperator(std::vector<Vec3> pts, EntryFn kernel, double tol,
                           int k_s, unsigned long long seed, int leaf_cap)
    : pts_(std::move(pts)), kern_(std::move(kernel)), tol_(tol), k_s_(k_s) {
  const int N = int(pts_.size());
  if (k_s_ < 1) throw std::invalid_argument("fast build: k_s < 1");
  tree_ = build_tree(pts_, leaf_cap);
  data_.resize(tree_.boxes.size());

  // Global sample pool.  Identity order when it is the whole point set, so
  // k_s >= N builds do not depend on the seed at all.
  std::vector<int> pool(N);
  std::iota(pool.begin(), pool.end(), 0);
  if (k_s_ < N) {
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k_s_; ++i) {
      std::uniform_int_distribution<int> pick(i, N - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k_s_);
  }

  // Boxes at levels 0 and 1 are adjacent to everything, so only deeper ones
  // carry skeletons.  Children go first: interior candidates are the
  // children's skeleton points.
  std::vector<std::vector<int>> by_level(tree_.depth + 1);
  for (int b = 0; b < int(tree_.boxes.size()); ++b)
    by_level[tree_.boxes[b].level].push_back(b);
  for (int lvl = tree_.depth; lvl >= 2; --lvl) {
    const auto& ids = by_level[lvl];
    std::atomic<bool> failed{false};
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < int(ids.size()); ++k) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        compress_box(ids[k], pool);
      } catch (...) {
#pragma omp critical(surfpde_fast_build_err)
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }

  pair_up(0, 0);

  far_by_t_.clear();
  near_by_t_.clear();
  {
    std::vector<int> slot(tree_.boxes.size(), -1);
    for (int i = 0; i < int(far_.size()); ++i) {
      int& s = slot[far_[i].target];
      if (s < 0) {
        s = int(far_by_t_.size());
        far_by_t_.push_back({far_[i].target, {}});
      }
      far_by_t_[s].second.push_back(i);
    }
    std::fill(slot.begin(), slot.end(), -1);
    for (int i = 0; i < int(near_.size()); ++i) {
      int& s = slot[near_[i].target];
      if (s < 0) {
        s = int(near_by_t_.size());
        near_by_t_.push_back({near_[i].target, {}});
      }
      near_by_t_[s].second.push_back(i);
    }
  }

  fill_caches();
}

std::vector<int> FastOperator::out_candidates(int b) const {
  const auto& box = tree_.boxes[b];
  if (box.leaf()) return box.pts;
  std::vector<int> cand;
  for (int c : box.child)
    if (c >= 0)
      cand.insert(cand.end(), data_[c].out_skel.begin(), data_[c].out_skel.end());
  return cand;
}

std::vector<int> FastOperator::in_candidates(int b) const {
  const auto& box = tree_.boxes[b];
  if (box.leaf()) return box.pts;
  std::vector<int> cand;
  for (int c : box.child)
    if (c >= 0)
      cand.insert(cand.end(), data_[c].in_skel.begin(), data_[c].in_skel.end());
  return cand;
}

void FastOperator::compress_box(int b, const std::vector<int>& pool) {
  const auto& box = tree_.boxes[b];
  std::vector<int> rows;
  rows.reserve(pool.size());
  const double cut = 3 * box.half * (1 - 1e-12);
  for (int i : pool)
    if ((pts_[i] - box.center).cwiseAbs().maxCoeff() > cut) rows.push_back(i);

  BoxData& bd = data_[b];
  std::vector<int> ocand = out_candidates(b);
  std::vector<int> icand = in_candidates(b);
  if (rows.empty()) {
    // no sample reaches this box's far field; keep everything
    bd.out_skel = std::move(ocand);
    bd.Xout = Eigen::MatrixXcd::Identity(bd.out_skel.size(), bd.out_skel.size());
    bd.in_skel = std::move(icand);
    bd.Win = Eigen::MatrixXcd::Identity(bd.in_skel.size(), bd.in_skel.size());
    return;
  }

  IDFactor fo = skeletonize(rows, ocand, kern_, tol_);
  bd.out_skel = std::move(fo.skel);
  bd.Xout = std::move(fo.X);

  // incoming side: same machinery on the transposed block
  EntryFn flip = [this](int i, int j) { return kern_(j, i); };
  IDFactor fi = skeletonize(rows, icand, flip, tol_);
  bd.in_skel = std::move(fi.skel);
  bd.Win = fi.X.transpose();
}

void FastOperator::pair_up(int t, int s) {
  const auto& bt = tree_.boxes[t];
  const auto& bs = tree_.boxes[s];
  const double mx = std::max(bt.half, bs.half);
  const double mn = std::min(bt.half, bs.half);
  const double gap = (bt.center - bs.center).cwiseAbs().maxCoeff();
  // separated: each box lies outside the tripled cube of the other, which is
  // exactly the region the skeletons were compressed against
  if (gap >= 3 * mx + mn - 1e-9 * mx && bt.level >= 2 && bs.level >= 2) {
    far_.push_back({t, s});
    return;
  }
  const bool lt = bt.leaf(), ls = bs.leaf();
  if (lt && ls) {
    near_.push_back({t, s});
    return;
  }
  const bool split_s = lt || (!ls && bs.half > bt.half);
  const auto& kids = (split_s ? bs : bt).child;
  for (int o = 0; o < 8; ++o) {
    if (kids[o] < 0) continue;
    if (split_s)
      pair_up(t, kids[o]);
    else
      pair_up(kids[o], s);
  }
}

Eigen::MatrixXcd FastOperator::far_block(const Pair& p) const {
  const auto& rows = data_[p.target].in_skel;
  const auto& cols = data_[p.source].out_skel;
  Eigen::MatrixXcd M(rows.size(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r)
      M(r, c) = kern_(rows[r], cols[c]);
  return M;
}

Eigen::MatrixXcd FastOperator::near_block(const Pair& p) const {
  const auto& tp = tree_.boxes[p.target].pts;
  const auto& sp = tree_.boxes[p.source].pts;
  Eigen::MatrixXcd M(tp.size(), sp.size());
  for (std::size_t c = 0; c < sp.size(); ++c)
    for (std::size_t r = 0; r < tp.size(); ++r)
      M(r, c) = tp[r] == sp[c] ? Cplx(0) : kern_(tp[r], sp[c]);
  return M;
}

void FastOperator::fill_caches() {
  near_cache_.resize(near_.size());
  far_cache_.resize(far_.size());
  std::size_t left = kCacheBytes;
  std::vector<int> todo_near, todo_far;
  for (int i = 0; i < int(near_.size()); ++i) {
    const std::size_t sz = 16 * tree_.boxes[near_[i].target].pts.size() *
                           tree_.boxes[near_[i].source].pts.size();
    if (sz > left) continue;
    left -= sz;
    todo_near.push_back(i);
  }
  for (int i = 0; i < int(far_.size()); ++i) {
    const std::size_t sz = 16 * data_[far_[i].target].in_skel.size() *
                           data_[far_[i].source].out_skel.size();
    if (sz > left) continue;
    left -= sz;
    todo_far.push_back(i);
  }

  std::atomic<bool> failed{false};
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 16)
  for (int k = 0; k < int(todo_near.size()) + int(todo_far.size()); ++k) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      if (k < int(todo_near.size()))
        near_cache_[todo_near[k]] = near_block(near_[todo_near[k]]);
      else
        far_cache_[todo_far[k - todo_near.size()]] =
            far_block(far_[todo_far[k - todo_near.size()]]);
    } catch (...) {
#pragma omp critical(surfpde_fast_cache_err)
      if (!failed.exchange(true)) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

Eigen::MatrixXcd FastOperator::apply(const Eigen::MatrixXcd& Q) const {
  if (int(Q.rows()) != size())
    throw std::invalid_argument("fast apply: charge rows do not match points");
  const int K = int(Q.cols());
  const int nb = int(tree_.boxes.size());
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(size(), K);

  // upward: charges to outgoing skeletons, children first
  std::vector<Eigen::MatrixXcd> qhat(nb), uhat(nb);
  for (int b = nb - 1; b >= 0; --b) {
    if (tree_.boxes[b].level < 2) continue;
    const auto& bd = data_[b];
    Eigen::MatrixXcd G(bd.Xout.cols(), K);
    if (tree_.boxes[b].leaf()) {
      const auto& p = tree_.boxes[b].pts;
      for (int r = 0; r < int(p.size()); ++r) G.row(r) = Q.row(p[r]);
    } else {
      int off = 0;
      for (int c : tree_.boxes[b].child) {
        if (c < 0) continue;
        G.middleRows(off, qhat[c].rows()) = qhat[c];
        off += int(qhat[c].rows());
      }
    }
    qhat[b].noalias() = bd.Xout * G;
    uhat[b] = Eigen::MatrixXcd::Zero(bd.Win.cols(), K);
  }

  // skeleton-to-skeleton blocks, grouped by target so the loop parallelizes
  {
    std::atomic<bool> failed{false};
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int g = 0; g < int(far_by_t_.size()); ++g) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        auto& ut = uhat[far_by_t_[g].first];
        for (int i : far_by_t_[g].second) {
          const Pair& p = far_[i];
          if (far_cache_[i].size())
            ut.noalias() += far_cache_[i] * qhat[p.source];
          else
            ut.noalias() += far_block(p) * qhat[p.source];
        }
      } catch (...) {
#pragma omp critical(surfpde_fast_far_err)
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }

  // downward: parents scatter into children's incoming skeletons, leaves
  // into the output
  for (int b = 0; b < nb; ++b) {
    if (tree_.boxes[b].level < 2) continue;
    const auto& bd = data_[b];
    Eigen::MatrixXcd tmp = bd.Win * uhat[b];
    if (tree_.boxes[b].leaf()) {
      const auto& p = tree_.boxes[b].pts;
      for (int r = 0; r < int(p.size()); ++r) Y.row(p[r]) += tmp.row(r);
    } else {
      int off = 0;
      for (int c : tree_.boxes[b].child) {
        if (c < 0) continue;
        uhat[c] += tmp.middleRows(off, uhat[c].rows());
        off += int(uhat[c].rows());
      }
    }
  }

  // leaf-level dense blocks, diagonal excluded
  {
    std::atomic<bool> failed{false};
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (int g = 0; g < int(near_by_t_.size()); ++g) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        const auto& tp = tree_.boxes[near_by_t_[g].first].pts;
        Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(tp.size(), K);
        for (int i : near_by_t_[g].second) {
          const Pair& p = near_[i];
          const auto& sp = tree_.boxes[p.source].pts;
          Eigen::MatrixXcd S(sp.size(), K);
          for (int r = 0; r < int(sp.size()); ++r) S.row(r) = Q.row(sp[r]);
          if (near_cache_[i].size())
            acc.noalias() += near_cache_[i] * S;
          else
            acc.noalias() += near_block(p) * S;
        }
        for (int r = 0; r < int(tp.size()); ++r) Y.row(tp[r]) += acc.row(r);
      } catch (...) {
#pragma omp critical(surfpde_fast_near_err)
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }

  return Y;
}

Eigen::VectorXcd FastOperator::apply(const Eigen::VectorXcd& q) const {
  return apply(Eigen::MatrixXcd(q)).col(0);
}

std::vector<std::vector<int>> FastOperator::out_skeletons() const {
  std::vector<std::vector<int>> out(data_.size());
  for (std::size_t b = 0; b < data_.size(); ++b) out[b] = data_[b].out_skel;
  return out;
}

FastOperator ifmm_build(const std::vector<Vec3>& pts, const EntryFn& kernel,
                        double tol, int k_s, unsigned long long seed,
                        int leaf_cap) {
  return FastOperator(pts, kernel, tol, k_s, seed, leaf_cap);
}

namespace {

class FastFar final : public FarApplier {
 public:
  FastFar(std::shared_ptr<const EntryGen> gen, FastOperator op)
      : gen_(std::move(gen)), op_(std::move(op)) {}

  void apply(const Eigen::MatrixXcd& X, Eigen::MatrixXcd& Y) const override {
    Y = op_.apply(X);
  }

  // column blocks of the identity through the fast apply; spectral studies
  // only ever ask for this at small N
  void add_to_dense(Eigen::MatrixXcd& A) const override {
    const int n = op_.size();
    const int nb = 64;
    for (int j0 = 0; j0 < n; j0 += nb) {
      const int w = std::min(nb, n - j0);
      Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(n, w);
      for (int j = 0; j < w; ++j) E(j0 + j, j) = 1;
      A.middleCols(j0, w) += op_.apply(E);
    }
  }

 private:
  std::shared_ptr<const EntryGen> gen_;  // keeps the entry oracle alive
  FastOperator op_;
};

}  // namespace

std::shared_ptr<const FarApplier> make_fast_far(
    const Discretization& d, KernelId id,
    std::shared_ptr<const EntryTables> tables, double tol, int k_s,
    unsigned long long seed) {
  auto gen = std::make_shared<EntryGen>(d, id, std::move(tables));
  EntryFn fn = [g = gen.get()](int i, int j) { return (*g)(i, j); };
  FastOperator op(d.x, std::move(fn), tol, k_s, seed);
  return std::make_shared<FastFar>(std::move(gen), std::move(op));
}

}  // namespace surfpde
