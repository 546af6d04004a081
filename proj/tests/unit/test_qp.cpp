#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lfu/dispatch.hpp"
#include "lfu/error.hpp"
#include "lfu/qp.hpp"
#include "support.hpp"

using namespace lfu;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd m1(double v) { return MatrixXd::Constant(1, 1, v); }
VectorXd v1(double v) { return VectorXd::Constant(1, v); }

/// min 1/2 x^2 s.t. -x + 1 <= 0.
QpSpec lower_bound_problem() { return make_qp(m1(1.0), v1(0.0), m1(-1.0), v1(1.0), MatrixXd(0, 1), VectorXd(0)); }

QpSpec with_offsets(QpSpec spec, const VectorXd& g, const VectorXd& h) {
  spec.g = g;
  spec.h = h;
  return spec;
}

}  // namespace

TEST_CASE("scalar hand solutions") {
  const QpSolution s = solve(lower_bound_problem());
  CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.lambda(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.active_set == std::vector<int>{0});

  const QpSolution interior = solve(make_qp(m1(1.0), v1(0.0), m1(-1.0), v1(-1.0), MatrixXd(0, 1), VectorXd(0)));
  CHECK(interior.x(0) == 0.0);
  CHECK(interior.lambda(0) == 0.0);
  CHECK(interior.active_set.empty());
}

TEST_CASE("kkt residuals") {
  const QpSpec spec = lower_bound_problem();
  QpSolution hand;
  hand.x = v1(1.0);
  hand.lambda = v1(1.0);
  hand.nu = VectorXd(0);
  const KktResiduals exact = kkt_residuals(spec, hand);
  CHECK(exact.max() == 0.0);

  QpSolution moved = hand;
  moved.x(0) += 1e-3;
  CHECK(kkt_residuals(spec, moved).stationarity == doctest::Approx(1e-3).epsilon(1e-9));

  QpSolution negative = hand;
  negative.lambda(0) = -0.5;
  CHECK(kkt_residuals(spec, negative).dual_feasibility > 0.0);
}

TEST_CASE("infeasible and degenerate problems") {
  MatrixXd A(2, 1);
  A << -1.0, 1.0;
  VectorXd b(2);
  b << 1.0, 0.0;  // x >= 1 and x <= 0
  CHECK_THROWS_AS(solve(make_qp(m1(1.0), v1(0.0), A, b, MatrixXd(0, 1), VectorXd(0))), InfeasibleError);

  // min 1/2 (x - 1)^2 s.t. x <= 1: active with a zero multiplier.
  const QpSpec degenerate = make_qp(m1(1.0), v1(-1.0), m1(1.0), v1(-1.0), MatrixXd(0, 1), VectorXd(0));
  const QpSolution s = solve(degenerate);
  CHECK(s.x(0) == doctest::Approx(1.0));
  OffsetSelection wrt;
  wrt.g = {0};
  try {
    solution_jacobian(degenerate, s, wrt);
    CHECK_MESSAGE(false, "expected DegenerateError");
  } catch (const DegenerateError& e) {
    CHECK(e.constraint() == 0);
  }
}

TEST_CASE("make_qp validation and ridge") {
  MatrixXd Q = MatrixXd::Zero(2, 2);
  Q(0, 0) = 2.0;
  const QpSpec spec = make_qp(Q, VectorXd::Zero(2), MatrixXd(0, 2), VectorXd(0), MatrixXd(0, 2), VectorXd(0));
  CHECK(spec.ridge == doctest::Approx(1e-8 * (1.0 + 1.0)));
  CHECK(spec.Q(1, 1) == spec.ridge);
  CHECK(spec.Q(0, 0) == 2.0);

  MatrixXd C(2, 2);
  C << 1.0, 1.0, 2.0, 2.0;
  CHECK_THROWS_AS(make_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd(0, 2), VectorXd(0), C,
                          VectorXd::Zero(2)),
                  ConfigError);
  CHECK_THROWS_AS(make_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(3), MatrixXd(0, 2), VectorXd(0),
                          MatrixXd(0, 2), VectorXd(0)),
                  ConfigError);
}

TEST_CASE("solver matches the exhaustive active-set oracle") {
  test::Rng rng(21);
  std::uniform_int_distribution<int> nvar(1, 6);
  int compared = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const int n = nvar(rng);
    const int p = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
    const int m = std::uniform_int_distribution<int>(1, 8)(rng);
    const QpSpec spec = test::random_qp(rng, n, m, p);
    const QpSolution s = solve(spec);
    const KktResiduals r = kkt_residuals(spec, s);
    CHECK(r.max() <= 1e-8 * (1.0 + spec.q.norm()));
    const test::OracleSolution oracle = test::enumerate_active_sets(spec);
    REQUIRE(oracle.found);
    CHECK(test::rel_error(s.x, oracle.x, 1.0) <= 1e-8);
    ++compared;
    // Complementarity and inactive multipliers.
    const VectorXd slack = spec.A * s.x + spec.b + spec.g;
    for (int i = 0; i < m; ++i) {
      CHECK(std::abs(s.lambda(i) * slack(i)) <= 1e-10);
      if (std::find(s.active_set.begin(), s.active_set.end(), i) == s.active_set.end()) CHECK(s.lambda(i) == 0.0);
    }
  }
  CHECK(compared == 150);
}

TEST_CASE("warm start reproduces the cold solution") {
  test::Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const QpSpec spec = test::random_qp(rng, 5, 7, 1);
    const QpSolution cold = solve(spec);
    QpSpec shifted = spec;
    shifted.g = test::random_vector(rng, 7, -1e-3, 1e-3);
    const QpSolution warm = solve(shifted, &cold);
    const QpSolution again = solve(shifted);
    CHECK(test::rel_error(warm.x, again.x, 1.0) <= 1e-12);
    CHECK(warm.active_set == again.active_set);
  }
}

TEST_CASE("licq") {
  // x >= 1 stated twice.
  MatrixXd A(2, 2);
  A << -1.0, 0.0, -1.0, 0.0;
  const QpSpec dup = make_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(2), A, VectorXd::Ones(2), MatrixXd(0, 2), VectorXd(0));
  const QpSolution s = solve(dup);
  CHECK(s.x(0) == doctest::Approx(1.0));
  const LicqReport bad = check_licq(dup, s);
  CHECK_FALSE(bad.satisfied);
  CHECK(bad.rank_gap == 1);
  OffsetSelection wrt;
  wrt.g = {0, 1};
  CHECK_THROWS_AS(solution_jacobian(dup, s, wrt), LicqError);

  MatrixXd C(1, 2);
  C << 1.0, 1.0;
  const QpSpec eq = make_qp(MatrixXd::Identity(2, 2), VectorXd::Zero(2), MatrixXd(0, 2), VectorXd(0), C, v1(-1.0));
  CHECK(check_licq(eq, solve(eq)).satisfied);

  const GridCase grid = test::shipped_case();
  const Dataset raw = test::small_dataset(30);
  for (int i = 0; i < 30; ++i) {
    const QpSpec dispatch = build_dispatch(grid, raw.targets().row(i).transpose());
    CHECK(check_licq(dispatch, solve(dispatch)).satisfied);
  }
}

TEST_CASE("jacobian by elimination") {
  const QpSpec spec = make_qp(m1(1.0), v1(0.0), MatrixXd(0, 1), VectorXd(0), m1(1.0), v1(0.0));
  for (double h : {-2.0, 0.5, 3.0}) {
    const QpSpec at = with_offsets(spec, VectorXd(0), v1(h));
    const QpSolution s = solve(at);
    CHECK(s.x(0) == doctest::Approx(-h));
    const SolutionJacobian J = solution_jacobian(at, s, OffsetSelection::all_equalities(at));
    CHECK(J.dx(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  }
}

TEST_CASE("jacobian against finite differences") {
  test::Rng rng(33);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 5;
    const int m = 6;
    const int p = 2;
    const QpSpec spec = test::random_qp(rng, n, m, p);
    const QpSolution s = solve(spec);
    OffsetSelection wrt;
    for (int i = 0; i < m; ++i) wrt.g.push_back(i);
    wrt.h = {0, 1};
    SolutionJacobian J;
    try {
      J = solution_jacobian(spec, s, wrt);
    } catch (const DegenerateError&) {
      continue;
    }
    const SolutionJacobian closed = solution_jacobian_closed_form(spec, s, wrt);
    CHECK(test::rel_error(closed.dx, J.dx, 1e-8) <= 1e-8);

    for (int i = 0; i < m; ++i) {
      if (std::find(s.active_set.begin(), s.active_set.end(), i) == s.active_set.end()) {
        CHECK(J.dx.col(i).cwiseAbs().maxCoeff() == 0.0);
        CHECK(J.dlambda.col(i).cwiseAbs().maxCoeff() == 0.0);
      }
    }

    const double step = 1e-6;
    VectorXd z(m + p);
    z << spec.g, spec.h;
    bool stable = true;
    const auto x_of = [&](const VectorXd& zz) {
      const QpSolution t = solve(with_offsets(spec, zz.head(m), zz.tail(p)), &s);
      stable = stable && t.active_set == s.active_set;
      return t.x;
    };
    const MatrixXd fd = test::fd_jacobian(x_of, z, step);
    if (!stable) continue;
    CHECK(test::rel_error(J.dx, fd, 1e-8) <= 1e-5);
    ++checked;
  }
  CHECK(checked >= 40);
}

TEST_CASE("solution map is affine on an active-set region") {
  test::Rng rng(44);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const QpSpec spec = test::random_qp(rng, 4, 5, 1);
    const QpSolution s0 = solve(spec);
    const VectorXd dg = test::random_vector(rng, 5, -1e-3, 1e-3);
    const VectorXd dh = test::random_vector(rng, 1, -1e-3, 1e-3);
    const QpSolution s1 = solve(with_offsets(spec, spec.g + dg, spec.h + dh));
    const QpSolution s2 = solve(with_offsets(spec, spec.g + 2.0 * dg, spec.h + 2.0 * dh));
    if (s1.active_set != s0.active_set || s2.active_set != s0.active_set) continue;
    const VectorXd second = s2.x - 2.0 * s1.x + s0.x;
    CHECK(second.norm() <= 1e-8 * std::max(1.0, s0.x.norm()));
    ++checked;
  }
  CHECK(checked >= 30);
}
