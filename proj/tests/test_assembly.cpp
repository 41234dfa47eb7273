#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <random>
#include <set>

#include <Eigen/SVD>
#include <doctest.h>

#include "surfpde/assembly.hpp"
#include "testutil.hpp"

using namespace surfpde;

namespace {

Coefficients var_a_advection() {
  Coefficients co;
  co.a = [](const Vec3& p) { return 1.0 + 0.3 * p.z(); };
  co.grad_a = [](const Vec3&) { return Vec3(0, 0, 0.3); };
  co.b = [](const Vec3& p) { return Vec3(-p.y(), p.x(), 0.2); };
  co.c_zero = true;
  return co;
}

Coefficients general_set() {
  Coefficients co = var_a_advection();
  co.c_zero = false;
  co.c = [](const Vec3& p) { return Cplx(1.0 + 0.4 * p.x(), 0.3 * p.y()); };
  return co;
}

Cplx direct_entry(const Discretization& d, KernelId id, int i, int j) {
  return kernel_eval(id, d.nodes[i], d.nodes[j], d.co) * d.wsg[j];
}

Eigen::VectorXcd random_vec(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = Cplx(u(rng), u(rng));
  return v;
}

// the direct double loop the operator must reproduce: accurate quadrature
// rows on near patch blocks, plain kernel-times-weight entries elsewhere
Eigen::MatrixXcd direct_matrix(const Discretization& d,
                               const std::vector<KernelId>& ids, int which,
                               double tol) {
  const int np = d.basis->n;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(d.N, d.N);
  for (int i = 0; i < d.N; ++i) {
    std::set<int> nearset(d.near[i].begin(), d.near[i].end());
    for (int j = 0; j < d.N; ++j)
      if (j != i && !nearset.count(j / np))
        A(i, j) = direct_entry(d, ids[which], i, j);
    std::vector<SrcKernel> kfs;
    for (KernelId id : ids) kfs.push_back(kernel_fn(id, d.nodes[i], d.co));
    for (int m : d.near[i]) {
      auto rows = (m == i / np)
                      ? self_quad_rows(d.patches[m], *d.basis, i % np, kfs, tol)
                      : near_quad_rows(d.patches[m], *d.basis, d.x[i], kfs, tol);
      A.row(i).segment(m * np, np) = rows[which];
    }
  }
  return A;
}

}  // namespace

TEST_CASE("discretization sizes, weights, and node charts") {
  SUBCASE("sphere node count") {
    auto d = build_discretization(make_sphere(), 0, 16,
                                  Coefficients::laplace_beltrami());
    CHECK(d.N == 2176);
    CHECK(int(d.patches.size()) == 16);
    for (double w : d.wsg) CHECK(w > 0);
    for (int i = 0; i < d.N; ++i) {
      bool owns = false;
      for (int m : d.near[i]) owns |= (m == d.patch_of(i));
      CHECK(owns);
    }
    CHECK(d.far_rmin > 0);
    // nodes are strictly interior, so the bounding box is slightly inside
    CHECK(d.diameter <= 2 * std::sqrt(3.0) + 1e-12);
    CHECK(d.diameter >= 1.9 * std::sqrt(3.0));
  }
  SUBCASE("surface area") {
    auto d = build_discretization(make_sphere(), 1, 16,
                                  Coefficients::laplace_beltrami());
    double area = 0;
    for (double w : d.wsg) area += w;
    CHECK(std::abs(area - 4 * M_PI) <= 1e-10);
  }
  SUBCASE("wavy torus nodes sit on the chart") {
    auto co = general_set();
    auto d = build_discretization(make_wavy_torus(), 0, 4, co);
    CHECK(d.N == 108 * 10);
    for (int i = 0; i < d.N; i += 7) {
      const Patch& pa = d.patches[d.patch_of(i)];
      const int j = d.local_of(i);
      Vec3 p = patch_position(pa, d.basis->u[j], d.basis->v[j]);
      CHECK((p - d.x[i]).norm() <= 1e-13 * (1 + p.norm()));
      CHECK(d.a_src[i] == doctest::Approx(co.a(d.x[i])).epsilon(1e-15));
      CHECK(std::abs(d.c_src[i] - co.c(d.x[i])) <= 1e-15);
      CHECK((d.tside[i].x - d.x[i]).norm() == 0);
    }
  }
}

TEST_CASE("entry generator matches the kernel functions") {
  auto none = std::make_shared<EntryTables>();
  std::mt19937_64 rng(77);
  auto check_class = [&](const Coefficients& co) {
    auto d = build_discretization(make_sphere(), 0, 4, co);
    std::uniform_int_distribution<int> pick(0, d.N - 1);
    for (KernelId id : {KernelId::K, KernelId::R}) {
      EntryGen gen(d, id, none);
      CHECK(gen.size() == d.N);
      for (int trial = 0; trial < 1500; ++trial) {
        int i = pick(rng), j = pick(rng);
        Cplx have = gen(i, j);
        Cplx want = (i == j) ? Cplx(0) : direct_entry(d, id, i, j);
        CHECK(std::abs(have - want) <= 1e-13 * (1 + std::abs(want)));
      }
    }
  };
  check_class(Coefficients::laplace_beltrami());
  check_class(Coefficients::helmholtz(Cplx(2.0, 1.5)));
  check_class(var_a_advection());
  check_class(general_set());
}

TEST_CASE("radial tables agree with direct entries") {
  std::mt19937_64 rng(99);
  auto check_tables = [&](const Coefficients& co, bool expect_per_src) {
    auto d = build_discretization(make_sphere(), 0, 4, co);
    auto off = build_entry_tables(d, false, 0);
    auto on = build_entry_tables(d, true, std::size_t(1) << 30);
    CHECK(off->global == nullptr);
    if (expect_per_src) CHECK(int(on->per_src.size()) == d.N);
    std::uniform_int_distribution<int> pick(0, d.N - 1);
    for (KernelId id : {KernelId::K, KernelId::R}) {
      EntryGen goff(d, id, off), gon(d, id, on);
      for (int trial = 0; trial < 1500; ++trial) {
        int i = pick(rng), j = pick(rng);
        CHECK(std::abs(gon(i, j) - goff(i, j)) <=
              1e-10 * (1 + std::abs(goff(i, j))));
      }
    }
  };
  check_tables(Coefficients::helmholtz(4.0), false);
  check_tables(Coefficients::helmholtz(Cplx(2.0, 1.5)), false);
  check_tables(general_set(), true);

  SUBCASE("zero budget skips per-source tables") {
    auto d = build_discretization(make_sphere(), 0, 4, general_set());
    auto tabs = build_entry_tables(d, true, 0);
    CHECK(tabs->per_src.empty());
    CHECK(tabs->global == nullptr);
  }
}

TEST_CASE("operator apply equals the direct double loop") {
  OperatorOptions opt;
  opt.tol = 1e-5;
  opt.use_tables = false;
  std::vector<KernelId> ids = {KernelId::R, KernelId::K};

  auto run = [&](const Coefficients& co) {
    auto d = build_discretization(make_sphere(), 0, 4, co);
    auto ops = build_operators(d, ids, opt);
    CHECK(ops[0].rank_one == co.lb_type());
    CHECK(ops[0].identity);
    CHECK(!ops[1].identity);
    CHECK(!ops[1].rank_one);

    Eigen::VectorXcd sigma = random_vec(d.N, 5);
    Eigen::RowVectorXd w =
        Eigen::Map<const Eigen::RowVectorXd>(d.wsg.data(), d.N);
    for (int which : {0, 1}) {
      Eigen::MatrixXcd A = direct_matrix(d, ids, which, opt.tol);
      Eigen::VectorXcd y = A * sigma;
      if (ops[which].identity) y += sigma;
      if (ops[which].rank_one)
        y.array() += (w.cast<Cplx>() * sigma)(0);
      Eigen::VectorXcd have = ops[which].apply(sigma);
      CHECK((have - y).norm() <= 1e-13 * y.norm());

      Eigen::MatrixXcd Ad = to_dense(ops[which]);
      CHECK((Ad * sigma - y).norm() <= 1e-13 * y.norm());
    }
  };
  run(Coefficients::laplace_beltrami());
  run(general_set());
}

TEST_CASE("streamed backend matches dense") {
  auto d = build_discretization(make_sphere(), 0, 4, general_set());
  OperatorOptions opt;
  opt.tol = 1e-5;
  auto dense = build_operators(d, {KernelId::R, KernelId::K}, opt);
  opt.force_streamed = true;
  auto streamed = build_operators(d, {KernelId::R, KernelId::K}, opt);

  Eigen::MatrixXcd X(d.N, 3);
  for (int c = 0; c < 3; ++c) X.col(c) = random_vec(d.N, 100 + c);
  for (int k : {0, 1}) {
    Eigen::MatrixXcd Yd = dense[k].apply(X), Ys = streamed[k].apply(X);
    CHECK((Yd - Ys).norm() <= 1e-13 * Yd.norm());
    for (int c = 0; c < 3; ++c) {
      Eigen::VectorXcd one = streamed[k].apply(Eigen::VectorXcd(X.col(c)));
      CHECK((one - Ys.col(c)).norm() <= 1e-14 * one.norm());
    }
    Eigen::MatrixXcd Ad = to_dense(dense[k]), As = to_dense(streamed[k]);
    CHECK((Ad - As).norm() <= 1e-13 * Ad.norm());
  }
}

TEST_CASE("operators built together match operators built alone") {
  auto d = build_discretization(make_sphere(), 0, 4,
                                Coefficients::helmholtz(4.0));
  OperatorOptions opt;
  opt.tol = 1e-5;
  auto both = build_operators(d, {KernelId::R, KernelId::K}, opt);
  auto r_only = build_operator(d, KernelId::R, opt);
  auto k_only = build_operator(d, KernelId::K, opt);
  // batching changes which panels the adaptive quadrature accepts, so the
  // corrections agree to quadrature accuracy, not bitwise
  CHECK((to_dense(both[0]) - to_dense(r_only)).norm() <= 50 * opt.tol);
  CHECK((to_dense(both[1]) - to_dense(k_only)).norm() <= 50 * opt.tol);
}

TEST_CASE("linearity and zero input") {
  auto d = build_discretization(make_sphere(), 0, 4,
                                Coefficients::laplace_beltrami());
  OperatorOptions opt;
  opt.tol = 1e-5;
  auto op = build_operator(d, KernelId::R, opt);

  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(d.N);
  CHECK(op.apply(zero).norm() == 0);

  Eigen::VectorXcd s = random_vec(d.N, 1), t = random_vec(d.N, 2);
  Cplx al(0.7, -0.2), be(-1.3, 0.4);
  Eigen::VectorXcd lhs = op.apply((al * s + be * t).eval());
  Eigen::VectorXcd rhs = al * op.apply(s) + be * op.apply(t);
  CHECK((lhs - rhs).norm() <= 1e-13 * rhs.norm());
}

TEST_CASE("constants: null vector without the fix, 4*pi with it") {
  auto d = build_discretization(make_sphere(), 0, 8,
                                Coefficients::laplace_beltrami());
  OperatorOptions opt;
  opt.tol = 1e-8;
  opt.rank_one = false;
  auto plain = build_operator(d, KernelId::R, opt);
  DiscreteOperator fixed = plain;
  fixed.rank_one = true;

  Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(d.N);
  CHECK(plain.apply(ones).lpNorm<Eigen::Infinity>() <= 1e-6);
  Eigen::VectorXcd y = fixed.apply(ones);
  CHECK((y.array() - 4 * M_PI).abs().maxCoeff() <= 1e-5);

  SUBCASE("singular value counts") {
    auto small_count = [](const Eigen::MatrixXcd& A) {
      Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
      const auto& s = svd.singularValues();
      int n = 0;
      for (int i = 0; i < s.size(); ++i)
        if (s[i] < 1e-6 * s[0]) ++n;
      return n;
    };
    CHECK(small_count(to_dense(plain)) == 1);
    CHECK(small_count(to_dense(fixed)) == 0);
  }
}

TEST_CASE("sphere operator is the identity on mean-zero densities") {
  auto d = build_discretization(make_sphere(), 1, 8,
                                Coefficients::laplace_beltrami());
  OperatorOptions opt;
  opt.tol = 1e-7;
  opt.rank_one = false;
  auto op = build_operator(d, KernelId::R, opt);

  Eigen::VectorXcd sigma(d.N);
  for (int i = 0; i < d.N; ++i)
    sigma[i] = d.x[i].z() + 0.5 * (d.x[i].x() * d.x[i].y());
  Eigen::RowVectorXd w = Eigen::Map<const Eigen::RowVectorXd>(d.wsg.data(), d.N);
  sigma.array() -= (w.cast<Cplx>() * sigma)(0) / (4 * M_PI);

  Eigen::VectorXcd y = op.apply(sigma);
  CHECK((y - sigma).norm() <= 1e-6 * sigma.norm());

  SUBCASE("mean-zero preservation") {
    // a smooth density; rough ones lose digits to interpolation in the
    // near rows before the mean can cancel
    Eigen::VectorXcd r(d.N);
    for (int i = 0; i < d.N; ++i) {
      const Vec3& p = d.x[i];
      r[i] = Cplx(std::sin(2 * p.x()) * p.z(), p.y() * p.y() - 0.3 * p.x());
    }
    r.array() -= (w.cast<Cplx>() * r)(0) / (4 * M_PI);
    Cplx mean_out = (w.cast<Cplx>() * op.apply(r))(0);
    CHECK(std::abs(mean_out) <= 1e-6 * r.norm());
  }
}

TEST_CASE("flat and nearly flat remainders") {
  auto paraboloid = [](double eps) {
    return make_custom(
        [eps](double s, double t) {
          ChartJet j;
          j.r = Vec3(s, t, eps * (s * s + t * t));
          j.rs = Vec3(1, 0, 2 * eps * s);
          j.rt = Vec3(0, 1, 2 * eps * t);
          j.rss = Vec3(0, 0, 2 * eps);
          j.rst = Vec3::Zero();
          j.rtt = Vec3(0, 0, 2 * eps);
          return j;
        },
        0, 1, 0, 1, 1, 1, false, false);
  };
  OperatorOptions opt;
  opt.tol = 1e-9;
  opt.rank_one = false;

  auto norm_R = [&](double eps) {
    auto d = build_discretization(paraboloid(eps), 1, 4,
                                  Coefficients::laplace_beltrami());
    auto op = build_operator(d, KernelId::R, opt);
    Eigen::VectorXcd s = random_vec(d.N, 3);
    return (op.apply(s) - s).norm();
  };

  CHECK(norm_R(0.0) <= 1e-11);
  const double n1 = norm_R(1e-2), n2 = norm_R(2e-2);
  CHECK(n2 / n1 == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("potential evaluation off the surface") {
  auto d = build_discretization(make_sphere(), 1, 8,
                                Coefficients::laplace_beltrami());
  Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(d.N);

  // unit charge density: u(x0) depends only on |x0|, by symmetry reducible
  // to a smooth 1D integral
  auto ref = [](double R) {
    return testutil::integrate_gl(
        [R](double t) { return 0.5 * std::log(R * R + 1 - 2 * R * t); }, -1.0,
        1.0, 64);
  };
  std::vector<Vec3> targets = {Vec3(2, 0, 0), Vec3(0, 0.3, 0.4).normalized() * 1.06,
                               Vec3(-1.5, 1.1, 0.3)};
  Eigen::VectorXcd u = evaluate_at_points(d, ones, targets, 1e-7);
  for (int t = 0; t < 3; ++t) {
    double want = ref(targets[t].norm());
    CHECK(std::abs(u[t] - want) <= 5e-6 * (1 + std::abs(want)));
  }

  SUBCASE("zero density and scaling") {
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(d.N);
    CHECK(evaluate_at_points(d, z, targets, 1e-7).norm() == 0);
    Eigen::VectorXcd u2 = evaluate_at_points(d, 2 * ones, targets, 1e-7);
    CHECK((u2 - 2 * u).norm() <= 1e-12 * u.norm());
  }
}
