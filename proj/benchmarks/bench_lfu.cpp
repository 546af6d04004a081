#include <benchmark/benchmark.h>

#include <vector>

#include "lfu/dispatch.hpp"
#include "lfu/engine.hpp"
#include "lfu/grid.hpp"
#include "lfu/unlearn.hpp"

namespace {

const lfu::GridCase& grid() {
  static const lfu::GridCase g = lfu::load_case(LFU_BENCH_CASE);
  return g;
}

const lfu::Experiment& experiment(lfu::ModelKind kind) {
  static const lfu::Experiment linear = [] {
    return lfu::train_experiment(lfu::generate_synthetic({}), {}, grid());
  }();
  static const lfu::Experiment head = [] {
    lfu::TrainConfig tc;
    tc.kind = lfu::ModelKind::Head;
    return lfu::train_experiment(lfu::generate_synthetic({}), tc, grid());
  }();
  return kind == lfu::ModelKind::Linear ? linear : head;
}

void BM_DispatchSolve(benchmark::State& state) {
  const lfu::Experiment& exp = experiment(lfu::ModelKind::Linear);
  const lfu::Design design(exp.model, exp.data);
  const lfu::CriterionEvaluator eval(design, &grid());
  const lfu::QpSpec spec = lfu::build_dispatch(grid(), eval.forecast_mw(exp.model.params, 0));
  for (auto _ : state) benchmark::DoNotOptimize(lfu::solve(spec));
}
BENCHMARK(BM_DispatchSolve);

void BM_TaskGradient(benchmark::State& state) {
  const lfu::Experiment& exp = experiment(lfu::ModelKind::Linear);
  const lfu::Design design(exp.model, exp.data);
  const lfu::CriterionEvaluator eval(design, &grid());
  const int i = exp.plan.test_idx.front();
  const Eigen::VectorXd f = eval.forecast_mw(exp.model.params, i);
  const Eigen::VectorXd y = eval.actual_mw(i);
  lfu::TaskWarmStart warm;
  for (auto _ : state) benchmark::DoNotOptimize(lfu::task_loss_grad(f, y, grid(), state.range(0) ? &warm : nullptr));
}
BENCHMARK(BM_TaskGradient)->Arg(0)->Arg(1);

void BM_HessianVectorProduct(benchmark::State& state) {
  const lfu::Experiment& exp = experiment(static_cast<lfu::ModelKind>(state.range(0)));
  const lfu::Design design(exp.model, exp.data);
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(design.param_dim());
  for (auto _ : state) benchmark::DoNotOptimize(design.hvp(exp.plan.scope_idx(), {}, v));
}
BENCHMARK(BM_HessianVectorProduct)->Arg(0)->Arg(1);

void BM_CompleteUnlearn(benchmark::State& state) {
  const lfu::Experiment& exp = experiment(static_cast<lfu::ModelKind>(state.range(0)));
  const lfu::Design design(exp.model, exp.data);
  const std::vector<int>& scope = exp.plan.scope_idx();
  const std::vector<int> remain(scope.begin() + static_cast<long>(scope.size() / 4), scope.end());
  for (auto _ : state) benchmark::DoNotOptimize(lfu::unlearn_complete(design, exp.model.params, remain));
}
BENCHMARK(BM_CompleteUnlearn)->Arg(0)->Arg(1);

void BM_Reweight(benchmark::State& state) {
  Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(state.range(0), -1.0, 1.0);
  for (Eigen::Index k = 0; k < a.size(); ++k) a(k) *= (k % 3) ? 1.0 : -0.5;
  for (auto _ : state) benchmark::DoNotOptimize(lfu::reweight(a, {0.05, 1.0}));
}
BENCHMARK(BM_Reweight)->Range(64, 8192);

}  // namespace

BENCHMARK_MAIN();
