#include "surfpde/assembly.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace surfpde {

namespace {
constexpr Cplx kI(0.0, 1.0);
}

Discretization build_discretization(const SurfaceDef& def, int level, int p,
                                    const Coefficients& co) {
  Discretization d;
  d.patches = triangulate(def, level);
  d.basis = &build_basis(p);
  d.co = co;
  d.level = level;

  const int np = d.basis->n;
  const int M = int(d.patches.size());
  d.N = M * np;
  d.nodes.reserve(d.N);
  d.x.reserve(d.N);
  d.wsg.reserve(d.N);
  d.tside.reserve(d.N);
  d.a_src.reserve(d.N);
  d.c_src.reserve(d.N);

  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < np; ++j) {
      SurfaceSample s = sample_patch(d.patches[m], d.basis->u[j], d.basis->v[j]);
      d.x.push_back(s.x);
      d.wsg.push_back(d.basis->w[j] * s.sqrtg);
      d.tside.push_back(make_target(s, co));
      d.a_src.push_back(co.eval_a(s.x));
      d.c_src.push_back(co.eval_c(s.x));
      d.nodes.push_back(std::move(s));
    }
  }

  std::vector<int> owner(d.N);
  for (int i = 0; i < d.N; ++i) owner[i] = i / np;
  d.near = classify_targets(d.patches, d.x, owner);

  Vec3 lo = d.x[0], hi = d.x[0];
  for (const Vec3& q : d.x) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  d.diameter = (hi - lo).norm();

  // Non-near pairs satisfy |x_i - c_m| > 1.5 R_m with x_j within R_m of c_m,
  // so their distance exceeds 0.5 R_m; 0.45 of the smallest radius leaves
  // margin for the tables built over [far_rmin, diameter].
  double rmin = std::numeric_limits<double>::infinity();
  for (const PatchGeo& g : patch_geometry(d.patches)) rmin = std::min(rmin, g.radius);
  d.far_rmin = 0.45 * rmin;

  return d;
}

namespace {

// mirrors the octave-capped panel layout of GreenTable / ChebTable
std::size_t panel_count(double r_lo, double r_hi, double cap) {
  std::size_t n = 0;
  double lo = r_lo;
  while (lo < r_hi && n < 100000) {
    lo = std::min(r_hi, std::min(2 * lo, lo + cap));
    ++n;
  }
  return n;
}

std::size_t green_table_bytes(double r_lo, double r_hi, double cap) {
  return panel_count(r_lo, r_hi, cap) * (2 * sizeof(double) + 72 * sizeof(Cplx));
}

}  // namespace

std::shared_ptr<const EntryTables> build_entry_tables(const Discretization& d,
                                                      bool use_tables,
                                                      std::size_t table_bytes) {
  auto tabs = std::make_shared<EntryTables>();
  const Coefficients& co = d.co;
  if (!use_tables || co.c_zero) return tabs;  // log closed forms win

  const double r_lo = 0.99 * d.far_rmin;
  const double r_hi = 1.01 * d.diameter;

  if (co.a_constant && co.c_constant) {
    tabs->global = std::make_unique<GreenTable>(co.a0, co.c0, r_lo, r_hi);
    if (co.b_zero) {
      const Cplx kappa = sqrt_up(co.c0 / co.a0);
      const Cplx f1c = -kI * kappa * 0.5;
      const Cplx f2c = kI * co.c0 / (4.0 * co.a0);
      const double cap = 1.5 / std::abs(kappa);
      tabs->rem_h1 = std::make_unique<ChebTable>(
          [&](double r) { return f1c * hankel(kappa * r).h1; }, r_lo, r_hi, cap);
      tabs->rem_h2 = std::make_unique<ChebTable>(
          [&](double r) { return f2c * hankel(kappa * r).h2; }, r_lo, r_hi, cap);
    }
    return tabs;
  }

  // variable kappa: one table per source node, if the whole set fits
  std::size_t total = 0;
  for (int j = 0; j < d.N; ++j) {
    if (d.c_src[j] == Cplx(0)) continue;
    const double cap = 1.5 / std::abs(sqrt_up(d.c_src[j] / d.a_src[j]));
    total += green_table_bytes(r_lo, r_hi, cap);
    if (total > table_bytes) return tabs;
  }
  tabs->per_src.reserve(d.N);
  for (int j = 0; j < d.N; ++j)
    tabs->per_src.emplace_back(d.a_src[j], d.c_src[j], r_lo, r_hi);
  return tabs;
}

EntryGen::EntryGen(const Discretization& d, KernelId id,
                   std::shared_ptr<const EntryTables> tables)
    : d_(d), id_(id), tab_(std::move(tables)) {
  if (id != KernelId::K && id != KernelId::R)
    throw std::invalid_argument("EntryGen: node-to-node operators are K or R");
  if (!tab_) tab_ = std::make_shared<EntryTables>();
  const Coefficients& co = d.co;
  const bool lb = co.a_constant && co.b_zero && co.c_zero;
  const bool ch = co.a_constant && co.b_zero && co.c_constant && !co.c_zero;
  if (id == KernelId::K)
    mode_ = lb ? Mode::LbK : ch ? Mode::ConstK : co.c_zero ? Mode::VarK : Mode::GenK;
  else
    mode_ = lb ? Mode::LbR : ch ? Mode::ConstR : co.c_zero ? Mode::VarR : Mode::GenR;
}

GreenTriple EntryGen::triple(int j, double r) const {
  if (tab_->global && tab_->global->covers(r)) return tab_->global->eval(r);
  if (!tab_->per_src.empty() && tab_->per_src[j].covers(r))
    return tab_->per_src[j].eval(r);
  return green(r, d_.a_src[j], d_.c_src[j]);
}

Cplx EntryGen::operator()(int i, int j) const {
  Cplx v;
  row_block(i, j, j + 1, &v);
  return v;
}

void EntryGen::row_block(int i, int j0, int j1, Cplx* out) const {
  const TargetSide& t = d_.tside[i];
  const Coefficients& co = d_.co;

  switch (mode_) {
    case Mode::LbK: {
      const double s = 1.0 / (2 * M_PI * co.a0);
      for (int j = j0; j < j1; ++j)
        out[j - j0] = (j == i) ? Cplx(0)
                               : Cplx(std::log((t.x - d_.x[j]).norm()) * s *
                                      d_.wsg[j]);
      return;
    }
    case Mode::LbR: {
      for (int j = j0; j < j1; ++j)
        out[j - j0] = (j == i) ? Cplx(0)
                               : remainder_lb(t.x, t.n, t.H, d_.x[j]) * d_.wsg[j];
      return;
    }
    case Mode::ConstK: {
      for (int j = j0; j < j1; ++j) {
        if (j == i) { out[j - j0] = 0; continue; }
        const double r = (t.x - d_.x[j]).norm();
        const Cplx G = (tab_->global && tab_->global->covers(r))
                           ? tab_->global->eval_G(r)
                           : green(r, co.a0, co.c0).G;
        out[j - j0] = G * d_.wsg[j];
      }
      return;
    }
    case Mode::ConstR: {
      const Cplx kappa = sqrt_up(co.c0 / co.a0);
      const Cplx f1c = -kI * kappa * 0.5;
      const Cplx f2c = kI * co.c0 / (4.0 * co.a0);
      const bool tabbed = tab_->rem_h1 != nullptr;
      for (int j = j0; j < j1; ++j) {
        if (j == i) { out[j - j0] = 0; continue; }
        const Vec3 rv = t.x - d_.x[j];
        const double r2 = rv.squaredNorm(), r = std::sqrt(r2);
        const double nr = t.n.dot(rv);
        Cplx f1, f2;
        if (tabbed && tab_->rem_h1->covers(r)) {
          f1 = tab_->rem_h1->eval(r);
          f2 = tab_->rem_h2->eval(r);
        } else {
          const HankelTriple h = hankel(kappa * r);
          f1 = f1c * h.h1;
          f2 = f2c * h.h2;
        }
        out[j - j0] = (f2 * (nr * nr / r2) + f1 * (t.H * nr / r)) * d_.wsg[j];
      }
      return;
    }
    case Mode::VarK: {
      for (int j = j0; j < j1; ++j)
        out[j - j0] = (j == i)
                          ? Cplx(0)
                          : Cplx(std::log((t.x - d_.x[j]).norm()) /
                                 (2 * M_PI * d_.a_src[j]) * d_.wsg[j]);
      return;
    }
    case Mode::VarR: {
      for (int j = j0; j < j1; ++j) {
        if (j == i) { out[j - j0] = 0; continue; }
        const double r = (t.x - d_.x[j]).norm();
        const double a = d_.a_src[j];
        const GreenTriple g{Cplx(std::log(r) / (2 * M_PI * a)),
                            Cplx(1.0 / (2 * M_PI * a * r)),
                            Cplx(-1.0 / (2 * M_PI * a * r * r))};
        out[j - j0] = remainder_general(t, d_.x[j], a, 0, g) * d_.wsg[j];
      }
      return;
    }
    case Mode::GenK: {
      for (int j = j0; j < j1; ++j)
        out[j - j0] = (j == i) ? Cplx(0)
                               : triple(j, (t.x - d_.x[j]).norm()).G * d_.wsg[j];
      return;
    }
    case Mode::GenR: {
      for (int j = j0; j < j1; ++j) {
        if (j == i) { out[j - j0] = 0; continue; }
        const double r = (t.x - d_.x[j]).norm();
        out[j - j0] = remainder_general(t, d_.x[j], d_.a_src[j], d_.c_src[j],
                                        triple(j, r)) *
                      d_.wsg[j];
      }
      return;
    }
  }
}

namespace {

using RowMajorXcd =
    Eigen::Matrix<Cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DenseFar : public FarApplier {
 public:
  explicit DenseFar(const EntryGen& gen) : A_(gen.size(), gen.size()) {
    const int N = gen.size();
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < N; ++i) gen.row_block(i, 0, N, A_.row(i).data());
  }

  void apply(const Eigen::MatrixXcd& X, Eigen::MatrixXcd& Y) const override {
    Y.noalias() = A_ * X;
  }
  void add_to_dense(Eigen::MatrixXcd& A) const override { A += A_; }

 private:
  RowMajorXcd A_;
};

class StreamedFar : public FarApplier {
 public:
  explicit StreamedFar(std::shared_ptr<const EntryGen> gen)
      : gen_(std::move(gen)) {}

  void apply(const Eigen::MatrixXcd& X, Eigen::MatrixXcd& Y) const override {
    const int N = gen_->size();
    Y.resize(N, X.cols());
#pragma omp parallel
    {
      std::vector<Cplx> buf(kBlock);
      Eigen::RowVectorXcd acc(X.cols());
#pragma omp for schedule(dynamic, 4)
      for (int i = 0; i < N; ++i) {
        acc.setZero();
        for (int j0 = 0; j0 < N; j0 += kBlock) {
          const int len = std::min<int>(kBlock, N - j0);
          gen_->row_block(i, j0, j0 + len, buf.data());
          Eigen::Map<const Eigen::RowVectorXcd> b(buf.data(), len);
          acc.noalias() += b * X.middleRows(j0, len);
        }
        Y.row(i) = acc;
      }
    }
  }

  void add_to_dense(Eigen::MatrixXcd& A) const override {
    const int N = gen_->size();
    std::vector<Cplx> buf(N);
    for (int i = 0; i < N; ++i) {
      gen_->row_block(i, 0, N, buf.data());
      A.row(i) += Eigen::Map<const Eigen::RowVectorXcd>(buf.data(), N);
    }
  }

 private:
  static constexpr int kBlock = 2048;
  std::shared_ptr<const EntryGen> gen_;
};

}  // namespace

std::shared_ptr<const FarApplier> make_dense_far(const EntryGen& gen) {
  return std::make_shared<DenseFar>(gen);
}

std::shared_ptr<const FarApplier> make_streamed_far(
    std::shared_ptr<const EntryGen> gen) {
  return std::make_shared<StreamedFar>(std::move(gen));
}

Eigen::MatrixXcd DiscreteOperator::apply(const Eigen::MatrixXcd& X) const {
  if (X.rows() != disc->N)
    throw std::invalid_argument("DiscreteOperator::apply: size mismatch");
  Eigen::MatrixXcd Y;
  if (far) {
    far->apply(X, Y);
  } else {
    Y.setZero(disc->N, X.cols());
  }
  const int np = disc->basis->n;
  for (int i = 0; i < disc->N; ++i)
    for (const Correction& c : corrections[i])
      Y.row(i).noalias() += c.row * X.middleRows(c.patch * np, np);
  if (identity) Y += X;
  if (rank_one) {
    Eigen::RowVectorXcd s = Eigen::RowVectorXcd::Zero(X.cols());
    for (int j = 0; j < disc->N; ++j) s += disc->wsg[j] * X.row(j);
    Y.rowwise() += s;
  }
  return Y;
}

Eigen::VectorXcd DiscreteOperator::apply(const Eigen::VectorXcd& x) const {
  return apply(Eigen::MatrixXcd(x));
}

std::vector<DiscreteOperator> build_operators(const Discretization& d,
                                              const std::vector<KernelId>& ids,
                                              const OperatorOptions& opt) {
  auto tables = build_entry_tables(d, opt.use_tables, opt.table_bytes);
  const int nop = int(ids.size());
  const int np = d.basis->n;

  std::vector<DiscreteOperator> ops(nop);
  std::vector<std::shared_ptr<const EntryGen>> gens(nop);
  std::size_t budget = opt.dense_bytes;
  for (int k = 0; k < nop; ++k) {
    gens[k] = std::make_shared<EntryGen>(d, ids[k], tables);
    ops[k].disc = &d;
    ops[k].id = ids[k];
    ops[k].identity = (ids[k] == KernelId::R);
    ops[k].rank_one = (ids[k] == KernelId::R) && opt.rank_one && d.co.lb_type();
    ops[k].corrections.resize(d.N);
    const std::size_t need = std::size_t(d.N) * d.N * sizeof(Cplx);
    if (!opt.force_streamed && need <= budget) {
      ops[k].far = make_dense_far(*gens[k]);
      budget -= need;
    } else {
      ops[k].far = make_streamed_far(gens[k]);
    }
  }

  // one traversal computes the accurate near rows for every operator at once
  std::atomic<bool> failed{false};
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < d.N; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      const int own = i / np;
      std::vector<SrcKernel> kfs(nop);
      for (int k = 0; k < nop; ++k) kfs[k] = kernel_fn(ids[k], d.nodes[i], d.co);
      std::vector<Cplx> ent(np);
      for (int m : d.near[i]) {
        std::vector<Eigen::RowVectorXcd> rows;
        try {
          rows = (m == own)
                     ? self_quad_rows(d.patches[m], *d.basis, i % np, kfs, opt.tol)
                     : near_quad_rows(d.patches[m], *d.basis, d.x[i], kfs, opt.tol);
        } catch (const QuadratureError& e) {
          throw QuadratureError("node " + std::to_string(i) + " against patch " +
                                    std::to_string(m) + ": " + e.what(),
                                e.estimate);
        }
        for (int k = 0; k < nop; ++k) {
          gens[k]->row_block(i, m * np, (m + 1) * np, ent.data());
          for (int jj = 0; jj < np; ++jj) rows[k][jj] -= ent[jj];
          ops[k].corrections[i].push_back({m, std::move(rows[k])});
        }
      }
    } catch (...) {
#pragma omp critical(surfpde_assembly_err)
      if (!failed.exchange(true)) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return ops;
}

DiscreteOperator build_operator(const Discretization& d, KernelId id,
                                const OperatorOptions& opt) {
  auto ops = build_operators(d, {id}, opt);
  return std::move(ops[0]);
}

Eigen::MatrixXcd to_dense(const DiscreteOperator& op) {
  const Discretization& d = *op.disc;
  const int np = d.basis->n;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(d.N, d.N);
  op.far->add_to_dense(A);
  for (int i = 0; i < d.N; ++i)
    for (const Correction& c : op.corrections[i])
      A.row(i).segment(c.patch * np, np) += c.row;
  if (op.identity) A.diagonal().array() += 1.0;
  if (op.rank_one) {
    Eigen::RowVectorXcd w(d.N);
    for (int j = 0; j < d.N; ++j) w[j] = d.wsg[j];
    A.rowwise() += w;
  }
  return A;
}

Eigen::VectorXcd evaluate_at_points(const Discretization& d,
                                    const Eigen::VectorXcd& sigma,
                                    const std::vector<Vec3>& targets,
                                    double tol) {
  if (sigma.size() != d.N)
    throw std::invalid_argument("evaluate_at_points: sigma size mismatch");
  const int np = d.basis->n;
  const int M = int(d.patches.size());
  auto near = classify_targets(d.patches, targets);

  Eigen::VectorXcd out(targets.size());
  std::atomic<bool> failed{false};
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 4)
  for (int t = 0; t < int(targets.size()); ++t) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      std::vector<char> is_near(M, 0);
      for (int m : near[t]) is_near[m] = 1;
      Cplx acc = 0;
      for (int m = 0; m < M; ++m) {
        if (is_near[m]) {
          Eigen::RowVectorXcd row = near_quad_rows(
              d.patches[m], *d.basis, targets[t],
              {kernel_fn(KernelId::K, targets[t], d.co)}, tol)[0];
          acc += (row * sigma.segment(m * np, np))(0);
        } else {
          for (int j = 0; j < np; ++j) {
            const int g = m * np + j;
            acc += kernel_eval_point(KernelId::K, targets[t], d.nodes[g], d.co) *
                   d.wsg[g] * sigma[g];
          }
        }
      }
      out[t] = acc;
    } catch (...) {
#pragma omp critical(surfpde_eval_err)
      if (!failed.exchange(true)) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace surfpde
