#include "lfu/dispatch.hpp"

#include <string>

#include "lfu/error.hpp"

namespace lfu {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_length(const VectorXd& v, int expected, const char* what) {
  if (v.size() != expected) {
    throw ConfigError(std::string(what) + " has length " + std::to_string(v.size()) +
                      ", case expects " + std::to_string(expected));
  }
}

/// Rows +-base*B_f*angles <= flow_max over the angle block starting at `col`.
void add_flow_limits(const GridCase& grid, int col, MatrixXd& A, VectorXd& b, int& row) {
  const int nbr = static_cast<int>(grid.branches.size());
  const int nb = grid.buses();
  const MatrixXd flow = grid.base_mw * grid.B_f;
  const VectorXd fmax = grid.flow_max();
  A.block(row, col, nbr, nb) = flow;
  b.segment(row, nbr) = -fmax;
  row += nbr;
  A.block(row, col, nbr, nb) = -flow;
  b.segment(row, nbr) = -fmax;
  row += nbr;
}

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DegenerateError& e) {
    throw DegenerateError(std::string(stage) + " stage: " + e.what(), e.constraint());
  } catch (const LicqError& e) {
    throw LicqError(std::string(stage) + " stage: " + e.what(), e.rank_gap());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(std::string(stage) + " stage: " + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string(stage) + " stage: " + e.what(), e.residual());
  }
}

}  // namespace

QpSpec build_dispatch(const GridCase& grid, const VectorXd& forecast_mw) {
  const int ng = grid.gens();
  const int nb = grid.buses();
  const int nl = grid.loads();
  const int nbr = static_cast<int>(grid.branches.size());
  require_length(forecast_mw, nl, "forecast");
  const int nx = ng + nb + nl;
  const int ta = ng;       // angle block offset
  const int sa = ng + nb;  // slack block offset

  MatrixXd Q = MatrixXd::Zero(nx, nx);
  Q.topLeftCorner(ng, ng).diagonal() = 2.0 * grid.q_cost();
  VectorXd q = VectorXd::Zero(nx);
  q.head(ng) = grid.c_cost();
  q.segment(sa, nl).setConstant(grid.costs.c_ls);

  const int m = 2 * ng + 2 * nbr + nl;
  MatrixXd A = MatrixXd::Zero(m, nx);
  VectorXd b = VectorXd::Zero(m);
  int row = 0;
  A.block(row, 0, ng, ng).setIdentity();
  b.segment(row, ng) = -grid.pmax();
  row += ng;
  A.block(row, 0, ng, ng) = -MatrixXd::Identity(ng, ng);
  b.segment(row, ng) = grid.pmin();
  row += ng;
  add_flow_limits(grid, ta, A, b, row);
  A.block(row, sa, nl, nl) = -MatrixXd::Identity(nl, nl);

  // base*B*angles - C_g P_g - C_l s + C_l yhat = 0, then the reference angle.
  MatrixXd C = MatrixXd::Zero(nb + 1, nx);
  C.block(0, 0, nb, ng) = -grid.C_g;
  C.block(0, ta, nb, nb) = grid.base_mw * grid.B_bus;
  C.block(0, sa, nb, nl) = -grid.C_l;
  C(nb, ta + grid.ref_bus()) = 1.0;
  VectorXd d = VectorXd::Zero(nb + 1);
  VectorXd h = VectorXd::Zero(nb + 1);
  h.head(nb) = grid.C_l * forecast_mw;

  return make_qp(std::move(Q), std::move(q), std::move(A), std::move(b), std::move(C), std::move(d),
                 VectorXd::Zero(m), std::move(h));
}

QpSpec build_redispatch(const GridCase& grid, const VectorXd& P_g, const VectorXd& actual_mw) {
  const int ng = grid.gens();
  const int nb = grid.buses();
  const int nl = grid.loads();
  const int nbr = static_cast<int>(grid.branches.size());
  require_length(P_g, ng, "generator schedule");
  require_length(actual_mw, nl, "actual load");
  const int nx = nl + ng + nb;
  const int ga = nl;       // storage block offset
  const int ta = nl + ng;  // angle block offset

  MatrixXd Q = MatrixXd::Zero(nx, nx);
  Q.diagonal().head(nl).setConstant(2.0 * grid.costs.c_ls2);
  Q.diagonal().segment(ga, ng).setConstant(2.0 * grid.costs.c_gs2);
  VectorXd q = VectorXd::Zero(nx);
  q.head(nl).setConstant(grid.costs.c_ls1);
  q.segment(ga, ng).setConstant(grid.costs.c_gs1);

  const int m = nl + ng + 2 * nbr;
  MatrixXd A = MatrixXd::Zero(m, nx);
  VectorXd b = VectorXd::Zero(m);
  A.topLeftCorner(nl + ng, nl + ng) = -MatrixXd::Identity(nl + ng, nl + ng);
  int row = nl + ng;
  add_flow_limits(grid, ta, A, b, row);

  // base*B*angles + C_g P_gs - C_l P_ls + (C_l y - C_g P_g) = 0.
  MatrixXd C = MatrixXd::Zero(nb + 1, nx);
  C.block(0, 0, nb, nl) = -grid.C_l;
  C.block(0, ga, nb, ng) = grid.C_g;
  C.block(0, ta, nb, nb) = grid.base_mw * grid.B_bus;
  C(nb, ta + grid.ref_bus()) = 1.0;
  VectorXd d = VectorXd::Zero(nb + 1);
  VectorXd h = VectorXd::Zero(nb + 1);
  h.head(nb) = grid.C_l * actual_mw - grid.C_g * P_g;

  return make_qp(std::move(Q), std::move(q), std::move(A), std::move(b), std::move(C), std::move(d),
                 VectorXd::Zero(m), std::move(h));
}

DispatchResult solve_dispatch(const GridCase& grid, const VectorXd& forecast_mw,
                              const QpSolution* warm) {
  const QpSpec spec = build_dispatch(grid, forecast_mw);
  DispatchResult r;
  r.qp = solve(spec, warm);
  r.P_g = r.qp.x.head(grid.gens());
  r.theta = r.qp.x.segment(grid.gens(), grid.buses());
  r.s = r.qp.x.tail(grid.loads());
  return r;
}

RedispatchResult solve_redispatch(const GridCase& grid, const VectorXd& P_g,
                                  const VectorXd& actual_mw, const QpSolution* warm) {
  const QpSpec spec = build_redispatch(grid, P_g, actual_mw);
  RedispatchResult r;
  r.qp = solve(spec, warm);
  r.P_ls = r.qp.x.head(grid.loads());
  r.P_gs = r.qp.x.segment(grid.loads(), grid.gens());
  r.theta = r.qp.x.tail(grid.buses());
  return r;
}

double gen_cost(const VectorXd& P_g, const VectorXd& P_ls, const VectorXd& P_gs,
                const GridCase& grid) {
  const StageCosts& c = grid.costs;
  return P_g.dot(grid.q_cost().cwiseProduct(P_g)) + grid.c_cost().dot(P_g) +
         c.c_ls2 * P_ls.squaredNorm() + c.c_gs2 * P_gs.squaredNorm() + c.c_ls1 * P_ls.sum() +
         c.c_gs1 * P_gs.sum();
}

TaskEvaluation evaluate_task(const VectorXd& forecast_mw, const VectorXd& actual_mw,
                             const GridCase& grid, TaskWarmStart* warm) {
  TaskEvaluation ev;
  ev.dispatch = in_stage("dispatch", [&] {
    return solve_dispatch(grid, forecast_mw,
                          warm && warm->dispatch ? &*warm->dispatch : nullptr);
  });
  ev.redispatch = in_stage("redispatch", [&] {
    return solve_redispatch(grid, ev.dispatch.P_g, actual_mw,
                            warm && warm->redispatch ? &*warm->redispatch : nullptr);
  });
  if (warm) {
    warm->dispatch = ev.dispatch.qp;
    warm->redispatch = ev.redispatch.qp;
  }
  ev.loss = gen_cost(ev.dispatch.P_g, ev.redispatch.P_ls, ev.redispatch.P_gs, grid);
  return ev;
}

double task_loss(const VectorXd& forecast_mw, const VectorXd& actual_mw, const GridCase& grid,
                 TaskWarmStart* warm) {
  return evaluate_task(forecast_mw, actual_mw, grid, warm).loss;
}

TaskGradient task_loss_grad(const VectorXd& forecast_mw, const VectorXd& actual_mw,
                            const GridCase& grid, TaskWarmStart* warm) {
  const TaskEvaluation ev = evaluate_task(forecast_mw, actual_mw, grid, warm);
  const int ng = grid.gens();
  const int nb = grid.buses();
  const int nl = grid.loads();
  OffsetSelection balance;
  for (int j = 0; j < nb; ++j) balance.h.push_back(j);

  const MatrixXd dx1 = in_stage("dispatch", [&] {
    const QpSpec spec = build_dispatch(grid, forecast_mw);
    return solution_jacobian(spec, ev.dispatch.qp, balance).dx;
  });
  const MatrixXd dx2 = in_stage("redispatch", [&] {
    const QpSpec spec = build_redispatch(grid, ev.dispatch.P_g, actual_mw);
    return solution_jacobian(spec, ev.redispatch.qp, balance).dx;
  });

  TaskGradient out;
  out.loss = ev.loss;
  out.dispatch_jacobian = dx1.topRows(ng) * grid.C_l;
  out.redispatch_jacobian = dx2.topRows(nl + ng) * (-grid.C_g);

  const StageCosts& c = grid.costs;
  const VectorXd dPg = 2.0 * grid.q_cost().cwiseProduct(ev.dispatch.P_g) + grid.c_cost();
  VectorXd dstage2(nl + ng);
  dstage2.head(nl) = 2.0 * c.c_ls2 * ev.redispatch.P_ls.array() + c.c_ls1;
  dstage2.tail(ng) = 2.0 * c.c_gs2 * ev.redispatch.P_gs.array() + c.c_gs1;
  const VectorXd total_pg = dPg + out.redispatch_jacobian.transpose() * dstage2;
  out.grad = out.dispatch_jacobian.transpose() * total_pg;
  return out;
}

GenerationClass classify_generation(const VectorXd& forecast, const VectorXd& actual) {
  return forecast.sum() < actual.sum() ? GenerationClass::Under : GenerationClass::Over;
}

const char* to_string(GenerationClass c) { return c == GenerationClass::Under ? "under" : "over"; }

}  // namespace lfu
