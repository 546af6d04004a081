#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "lfu/dispatch.hpp"
#include "lfu/error.hpp"
#include "support.hpp"

using namespace lfu;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd v1(double v) { return VectorXd::Constant(1, v); }

double balance_residual_dispatch(const GridCase& g, const DispatchResult& d, const VectorXd& forecast) {
  const VectorXd r = g.base_mw * g.B_bus * d.theta - (g.C_g * d.P_g - g.C_l * (forecast - d.s));
  return r.cwiseAbs().maxCoeff();
}

double balance_residual_redispatch(const GridCase& g, const VectorXd& P_g, const RedispatchResult& r,
                                   const VectorXd& actual) {
  const VectorXd res = g.base_mw * g.B_bus * r.theta - (g.C_g * (P_g - r.P_gs) - g.C_l * (actual - r.P_ls));
  return res.cwiseAbs().maxCoeff();
}

/// Active sets of both stages, used to verify finite-difference points.
std::pair<std::vector<int>, std::vector<int>> regions(const VectorXd& f, const VectorXd& y, const GridCase& g) {
  const TaskEvaluation ev = evaluate_task(f, y, g);
  return {ev.dispatch.qp.active_set, ev.redispatch.qp.active_set};
}

}  // namespace

TEST_CASE("one-bus dispatch") {
  const GridCase g = test::one_bus_case();
  const DispatchResult d = solve_dispatch(g, v1(1.0));
  CHECK(d.P_g(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(d.s(0)) <= 1e-9);

  const DispatchResult short_supply = solve_dispatch(g, v1(130.0));
  CHECK(short_supply.P_g(0) == doctest::Approx(100.0).epsilon(1e-10));
  CHECK(short_supply.s(0) == doctest::Approx(30.0).epsilon(1e-10));
  CHECK(balance_residual_dispatch(g, short_supply, v1(130.0)) <= 1e-8 * g.base_mw);
}

TEST_CASE("forecast enters only the balance offset") {
  const GridCase g = test::shipped_case();
  const Dataset raw = test::small_dataset(10);
  const VectorXd y = raw.targets().row(0).transpose();
  const QpSpec a = build_dispatch(g, y);
  const QpSpec b = build_dispatch(g, y + VectorXd::Constant(y.size(), 3.0));
  CHECK(a.Q == b.Q);
  CHECK(a.q == b.q);
  CHECK(a.A == b.A);
  CHECK(a.b == b.b);
  CHECK(a.C == b.C);
  CHECK(a.d == b.d);
  CHECK(a.g == b.g);
  CHECK(a.h != b.h);
  CHECK(a.h.tail(1) == b.h.tail(1));

  const VectorXd Pg = VectorXd::Constant(g.gens(), 20.0);
  const QpSpec r1 = build_redispatch(g, Pg, y);
  const QpSpec r2 = build_redispatch(g, Pg * 1.1, y * 0.9);
  CHECK(r1.A == r2.A);
  CHECK(r1.C == r2.C);
  CHECK(r1.q == r2.q);
  CHECK(r1.h != r2.h);

  CHECK_THROWS_AS(build_dispatch(g, VectorXd::Zero(3)), ConfigError);
  CHECK_THROWS_AS(build_redispatch(g, VectorXd::Zero(2), y), ConfigError);
}

TEST_CASE("one-bus redispatch") {
  const GridCase g = test::one_bus_case();
  const double y = 50.0;
  SUBCASE("perfect forecast") {
    const TaskEvaluation ev = evaluate_task(v1(y), v1(y), g);
    CHECK(std::abs(ev.redispatch.P_ls(0)) <= 1e-9);
    CHECK(std::abs(ev.redispatch.P_gs(0)) <= 1e-9);
    CHECK(ev.loss == doctest::Approx(0.5 * y * y + 10.0 * y).epsilon(1e-10));
  }
  SUBCASE("over-generation goes to storage") {
    const TaskEvaluation ev = evaluate_task(v1(y + 1.0), v1(y), g);
    CHECK(ev.redispatch.P_gs(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(ev.redispatch.P_ls(0)) <= 1e-9);
  }
  SUBCASE("under-generation sheds load") {
    const TaskEvaluation ev = evaluate_task(v1(y - 2.0), v1(y), g);
    CHECK(ev.redispatch.P_ls(0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(std::abs(ev.redispatch.P_gs(0)) <= 1e-9);
    CHECK(classify_generation(v1(y - 2.0), v1(y)) == GenerationClass::Under);
  }
}

TEST_CASE("generator cost terms") {
  nlohmann::json doc = nlohmann::json::parse(test::case_json(test::two_bus_case()));
  for (auto& gen : doc["generators"]) {
    gen["q_cost"] = 1.0;
    gen["c_cost"] = 1.0;
  }
  doc["costs"]["c_ls2"] = 2.0;
  doc["costs"]["c_ls1"] = 4.0;
  doc["costs"]["c_gs2"] = 1.0;
  doc["costs"]["c_gs1"] = 3.0;
  const GridCase g = parse_case(doc.dump());
  VectorXd Pg(2);
  Pg << 1.0, 2.0;
  CHECK(gen_cost(Pg, v1(0.5), VectorXd::Zero(2), g) == doctest::Approx(10.5).epsilon(1e-15));
  CHECK(gen_cost(VectorXd::Zero(2), VectorXd::Zero(1), VectorXd::Zero(2), g) == 0.0);

  const double one = gen_cost(VectorXd::Zero(2), v1(1.5), VectorXd::Zero(2), g);
  const double two = gen_cost(VectorXd::Zero(2), v1(3.0), VectorXd::Zero(2), g);
  CHECK(one == doctest::Approx(2.0 * 1.5 * 1.5 + 4.0 * 1.5));
  CHECK(two == doctest::Approx(4.0 * 2.0 * 1.5 * 1.5 + 2.0 * 4.0 * 1.5));
}

TEST_CASE("one-bus task loss shape") {
  const GridCase g = test::one_bus_case();
  const double y = 50.0;
  const double truth = task_loss(v1(y), v1(y), g);
  double previous = truth;
  for (double gap : {1.0, 2.0, 5.0, 10.0}) {
    const double under = task_loss(v1(y - gap), v1(y), g);
    CHECK(under > previous);
    previous = under;
    CHECK(task_loss(v1(y + gap), v1(y), g) > truth);
  }
}

TEST_CASE("one-bus task gradient by hand") {
  const GridCase g = test::one_bus_case();
  const double y = 40.0;
  const double f = 43.0;
  const TaskGradient tg = task_loss_grad(v1(f), v1(y), g);
  const StageCosts& c = g.costs;
  const double hand = 2.0 * 0.5 * f + 10.0 + 2.0 * c.c_gs2 * (f - y) + c.c_gs1;
  CHECK(tg.grad(0) == doctest::Approx(hand).epsilon(1e-8));
  CHECK(tg.dispatch_jacobian(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(tg.redispatch_jacobian(1, 0) == doctest::Approx(1.0).epsilon(1e-8));

  const TaskGradient tg2 = task_loss_grad(v1(f + 1.0), v1(y), g);
  CHECK(test::rel_error(tg2.dispatch_jacobian, tg.dispatch_jacobian) <= 1e-12);
  CHECK(test::rel_error(tg2.redispatch_jacobian, tg.redispatch_jacobian) <= 1e-12);
}

TEST_CASE("14-bus stages are feasible and balanced") {
  const GridCase g = test::shipped_case();
  const Dataset raw = test::small_dataset(200, 3);
  test::Rng rng(2);
  TaskWarmStart warm;
  int under = 0;
  for (int i = 0; i < raw.samples(); ++i) {
    const VectorXd y = raw.targets().row(i).transpose();
    const VectorXd f = y.cwiseProduct(test::random_vector(rng, y.size(), 0.85, 1.15));
    const TaskEvaluation ev = evaluate_task(f, y, g, &warm);
    const DispatchResult& d = ev.dispatch;
    const RedispatchResult& r = ev.redispatch;
    CHECK(balance_residual_dispatch(g, d, f) <= 1e-8 * g.base_mw);
    CHECK(balance_residual_redispatch(g, d.P_g, r, y) <= 1e-8 * g.base_mw);
    CHECK((d.P_g - g.pmax()).maxCoeff() <= 1e-8);
    CHECK((g.pmin() - d.P_g).maxCoeff() <= 1e-8);
    CHECK(d.s.minCoeff() >= -1e-8);
    CHECK(r.P_ls.minCoeff() >= -1e-8);
    CHECK(r.P_gs.minCoeff() >= -1e-8);
    CHECK(kkt_residuals(build_dispatch(g, f), d.qp).max() <= 1e-8 * (1.0 + build_dispatch(g, f).q.norm()));
    under += classify_generation(f, y) == GenerationClass::Under;
  }
  CHECK(under > 0);
  CHECK(under < raw.samples());
}

TEST_CASE("classification tie rule") {
  VectorXd f(2);
  f << 0.4, 0.5;
  VectorXd y(2);
  y << 0.5, 0.5;
  CHECK(classify_generation(f, y) == GenerationClass::Under);
  CHECK(classify_generation(y, y) == GenerationClass::Over);
  CHECK(std::string(to_string(GenerationClass::Under)) == "under");
}

TEST_CASE("14-bus task gradient against finite differences") {
  const GridCase g = test::shipped_case();
  const Dataset raw = test::small_dataset(80, 5);
  test::Rng rng(6);
  int checked = 0;
  for (int i = 0; i < raw.samples() && checked < 25; ++i) {
    const VectorXd y = raw.targets().row(i).transpose();
    const VectorXd f = y.cwiseProduct(test::random_vector(rng, y.size(), 0.9, 1.1));
    TaskGradient tg;
    try {
      tg = task_loss_grad(f, y, g);
    } catch (const NumericalError&) {
      continue;
    }
    const double step = 1e-5;
    const auto base = regions(f, y, g);
    bool stable = true;
    for (int k = 0; k < f.size() && stable; ++k) {
      for (double sgn : {1.0, -1.0}) {
        VectorXd fk = f;
        fk(k) += sgn * step;
        stable = stable && regions(fk, y, g) == base;
      }
    }
    if (!stable) continue;
    const VectorXd fd = test::fd_gradient([&](const VectorXd& x) { return task_loss(x, y, g); }, f, step);
    CHECK(test::rel_error(tg.grad, fd) <= 1e-5);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("stage maps are affine end to end") {
  const GridCase g = test::shipped_case();
  const Dataset raw = test::small_dataset(40, 9);
  test::Rng rng(7);
  int checked = 0;
  for (int i = 0; i < raw.samples(); ++i) {
    const VectorXd y = raw.targets().row(i).transpose();
    const VectorXd f = y.cwiseProduct(test::random_vector(rng, y.size(), 0.9, 1.1));
    const VectorXd delta = test::random_vector(rng, y.size(), -1e-3, 1e-3);
    const TaskEvaluation e0 = evaluate_task(f, y, g);
    const TaskEvaluation e1 = evaluate_task(f + delta, y, g);
    const TaskEvaluation e2 = evaluate_task(f + 2.0 * delta, y, g);
    if (e1.dispatch.qp.active_set != e0.dispatch.qp.active_set ||
        e2.dispatch.qp.active_set != e0.dispatch.qp.active_set ||
        e1.redispatch.qp.active_set != e0.redispatch.qp.active_set ||
        e2.redispatch.qp.active_set != e0.redispatch.qp.active_set) {
      continue;
    }
    const VectorXd s1 = e2.dispatch.qp.x - 2.0 * e1.dispatch.qp.x + e0.dispatch.qp.x;
    const VectorXd s2 = e2.redispatch.qp.x - 2.0 * e1.redispatch.qp.x + e0.redispatch.qp.x;
    CHECK(s1.norm() <= 1e-8 * std::max(1.0, e0.dispatch.qp.x.norm()));
    CHECK(s2.norm() <= 1e-8 * std::max(1.0, e0.redispatch.qp.x.norm()));
    ++checked;
  }
  CHECK(checked >= 20);
}
