#include "lfu/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lfu/error.hpp"
#include "lfu/parallel.hpp"

namespace lfu {

using Eigen::MatrixXd;
using Eigen::VectorXd;

CgResult cg_solve(const LinearOperator& op, const VectorXd& v, double tol, int max_iter,
                  const VectorXd& jacobi) {
  CgResult out;
  out.x = VectorXd::Zero(v.size());
  const double vnorm = v.norm();
  if (vnorm == 0.0) return out;
  // Finite termination after dim steps holds only in exact arithmetic.
  if (max_iter <= 0) max_iter = 2 * static_cast<int>(v.size());
  if (jacobi.size() != 0 && (jacobi.size() != v.size() || !(jacobi.array() > 0.0).all())) {
    throw ConfigError("cg: preconditioner must be a positive vector of matching length");
  }
  auto precondition = [&](const VectorXd& r) -> VectorXd {
    return jacobi.size() ? VectorXd(r.cwiseQuotient(jacobi)) : r;
  };

  VectorXd r = v;
  VectorXd zr = precondition(r);
  VectorXd p = zr;
  double rz = r.dot(zr);
  for (int k = 0; k < max_iter; ++k) {
    const VectorXd Ap = op(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      throw ConvergenceError("cg: operator is not positive definite", r.norm() / vnorm);
    }
    const double alpha = rz / pAp;
    out.x += alpha * p;
    r -= alpha * Ap;
    out.iterations = k + 1;
    if (r.norm() <= tol * vnorm) {
      // Confirm against the true residual; the recurrence drifts on long runs.
      r = v - op(out.x);
      if (r.norm() <= tol * vnorm) {
        out.residual = r.norm() / vnorm;
        return out;
      }
      zr = precondition(r);
      p = zr;
      rz = r.dot(zr);
      continue;
    }
    zr = precondition(r);
    const double rz_next = r.dot(zr);
    p = zr + (rz_next / rz) * p;
    rz = rz_next;
  }
  out.residual = (v - op(out.x)).norm() / vnorm;
  if (out.residual <= tol) return out;
  throw ConvergenceError("cg: no convergence in " + std::to_string(max_iter) +
                             " iterations (relative residual " + std::to_string(out.residual) + ")",
                         out.residual);
}

HessianSolver::HessianSolver(const StructuredHessian& H) : repeats_(H.repeats) {
  MatrixXd block = H.block;
  const double dim = static_cast<double>(block.rows());
  const double trace = block.trace();
  if (!(trace > 0.0)) throw NumericalError("Hessian is zero or indefinite (trace " + std::to_string(trace) + ")");
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(block, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (condition_ > 1e12) {
    ridge_ = 1e-8 * trace / dim;
    warn("ill-conditioned Hessian (condition " + std::to_string(condition_) + "); adding ridge " +
         std::to_string(ridge_));
    block.diagonal().array() += ridge_;
  }
  llt_.compute(block);
  if (llt_.info() != Eigen::Success) throw NumericalError("Hessian is not positive definite");
}

VectorXd HessianSolver::solve(const VectorXd& v) const {
  const Eigen::Index b = llt_.matrixLLT().rows();
  if (v.size() != b * repeats_) throw ConfigError("Hessian solve: vector has wrong length");
  const Eigen::Map<const MatrixXd> V(v.data(), b, repeats_);
  const MatrixXd X = llt_.solve(V);
  return Eigen::Map<const VectorXd>(X.data(), X.size());
}

VectorXd apply_reweighted_update(const Design& design, const VectorXd& params,
                                 std::span<const int> remain, std::span<const double> eps,
                                 const UpdateOptions& options) {
  if (remain.empty()) throw ConfigError("nothing remains after unlearning");
  if (eps.size() != remain.size()) throw ConfigError("weights and remaining samples differ in length");
  const StructuredHessian H =
      options.unweighted_hessian ? design.hessian(remain) : design.hessian(remain, eps);
  const HessianSolver solver(H);
  const VectorXd grad = design.train_gradient_sum(params, remain, eps);
  return params - solver.solve(grad);
}

VectorXd unlearn_complete(const Design& design, const VectorXd& params, std::span<const int> remain) {
  const std::vector<double> ones(remain.size(), 1.0);
  return apply_reweighted_update(design, params, remain, ones);
}

ForecastModel unlearn_complete(const ForecastModel& model, const Dataset& data,
                               std::span<const int> scope, std::span<const int> unlearn) {
  std::vector<int> s(scope.begin(), scope.end());
  std::vector<int> u(unlearn.begin(), unlearn.end());
  std::sort(s.begin(), s.end());
  std::sort(u.begin(), u.end());
  std::vector<int> remain;
  std::set_difference(s.begin(), s.end(), u.begin(), u.end(), std::back_inserter(remain));
  const Design design(model, data);
  return model.with_params(unlearn_complete(design, model.params, remain));
}

VectorXd retrain_oracle(const Design& design, std::span<const int> remain,
                        std::span<const double> weights) {
  if (remain.empty()) throw ConfigError("nothing remains after unlearning");
  return refit(design, remain, weights);
}

MTilde m_tilde(const CriterionEvaluator& eval, const VectorXd& params, std::span<const int> remain,
               std::span<const int> test, LossKind criterion) {
  if (remain.empty()) throw ConfigError("nothing remains after unlearning");
  if (test.empty()) throw ConfigError("test set is empty");
  const Design& design = eval.design();
  const auto grads = eval.gradient_sum(params, test, criterion);
  MTilde out;
  out.test_used = grads.used;
  out.test_skipped = grads.skipped;
  if (grads.used == 0) throw NumericalError("no test sample produced a criterion gradient");
  const VectorXd v = grads.sum / static_cast<double>(grads.used);
  const LinearOperator op = [&](const VectorXd& x) { return design.hvp(remain, {}, x); };
  const StructuredHessian H = design.hessian(remain);
  const VectorXd jacobi = H.block.diagonal().replicate(H.repeats, 1);
  const CgResult cg = cg_solve(op, v, 1e-10, 0, jacobi);
  out.m = -cg.x;
  out.cg_iterations = cg.iterations;
  out.cg_residual = cg.residual;
  return out;
}

VectorXd influence_scores(const Design& design, const VectorXd& params, const VectorXd& m,
                          std::span<const int> idx) {
  if (m.size() != design.param_dim()) throw ConfigError("m has wrong length");
  VectorXd a(static_cast<Eigen::Index>(idx.size()));
  parallel_for(static_cast<int>(idx.size()), [&](int k) {
    a(k) = m.dot(design.train_gradient(params, idx[k]));
  });
  return a;
}

InfluenceReport influence_report(const CriterionEvaluator& eval, const VectorXd& params,
                                 std::span<const int> remain, std::span<const int> test,
                                 LossKind criterion) {
  const MTilde mt = m_tilde(eval, params, remain, test, criterion);
  InfluenceReport r;
  r.criterion = criterion;
  r.m_tilde = mt.m;
  r.test_skipped = mt.test_skipped;
  r.samples.assign(remain.begin(), remain.end());
  r.scores = influence_scores(eval.design(), params, mt.m, remain);
  r.classes.reserve(remain.size());
  for (int i : remain) {
    r.classes.push_back(classify_generation(eval.forecast_mw(params, i), eval.actual_mw(i)));
  }
  return r;
}

VectorXd reweight(const VectorXd& scores, const ReweightConfig& config) {
  if (!(config.lambda1 >= 0.0) || !(config.lambda_inf >= 0.0)) {
    throw ConfigError("reweight: lambda1 and lambda_inf must be non-negative");
  }
  if (!scores.allFinite()) throw ConfigError("reweight: scores must be finite");
  const Eigen::Index n = scores.size();
  VectorXd eps = VectorXd::Ones(n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(scores(a)) > std::abs(scores(b));
  });
  double budget = static_cast<double>(n) * config.lambda1;
  for (Eigen::Index i : order) {
    if (budget <= 0.0) break;
    if (scores(i) == 0.0) break;
    const double step = std::min(config.lambda_inf, budget);
    eps(i) = 1.0 - step * (scores(i) > 0.0 ? 1.0 : -1.0);
    if (config.clamp_nonnegative && eps(i) < 0.0) eps(i) = 0.0;
    budget -= step;
  }
  return eps;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("pearson: inputs differ in length");
  if (a.size() < 2) throw ConfigError("pearson: need at least two samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw ConfigError("pearson: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pearson(const VectorXd& a, const VectorXd& b) {
  return pearson(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                 std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

}  // namespace lfu
