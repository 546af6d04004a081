#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lfu/data.hpp"
#include "lfu/dispatch.hpp"
#include "lfu/forecaster.hpp"

namespace lfu {

// ---------------------------------------------------------------------------
// Linear algebra

using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual = 0.0;  // ||A x - v|| / ||v||
};

/// Conjugate gradients for an SPD operator, optionally with a diagonal
/// (Jacobi) preconditioner. max_iter <= 0 means 2 v.size(). Throws
/// ConvergenceError with the reached relative residual.
CgResult cg_solve(const LinearOperator& op, const Eigen::VectorXd& v, double tol = 1e-10,
                  int max_iter = 0, const Eigen::VectorXd& jacobi = {});

/// Factorized structured Hessian. When the condition estimate exceeds 1e12 a
/// ridge of 1e-8 trace/dim is added with a warning; a zero or indefinite
/// trace throws NumericalError.
class HessianSolver {
 public:
  explicit HessianSolver(const StructuredHessian& H);

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  double ridge() const { return ridge_; }
  double condition() const { return condition_; }

 private:
  int repeats_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double ridge_ = 0.0;
  double condition_ = 0.0;
};

// ---------------------------------------------------------------------------
// Newton updates

/// theta - H_remain^{-1} sum_remain grad_i(theta).
Eigen::VectorXd unlearn_complete(const Design& design, const Eigen::VectorXd& params,
                                 std::span<const int> remain);

/// Model-level form: remain = scope minus unlearn.
ForecastModel unlearn_complete(const ForecastModel& model, const Dataset& data,
                               std::span<const int> scope, std::span<const int> unlearn);

struct UpdateOptions {
  /// Use the unweighted remaining-set Hessian instead of the weighted one.
  bool unweighted_hessian = false;
};

/// theta - (sum eps_i H_i)^{-1} sum eps_i grad_i(theta) over remain.
Eigen::VectorXd apply_reweighted_update(const Design& design, const Eigen::VectorXd& params,
                                        std::span<const int> remain, std::span<const double> eps,
                                        const UpdateOptions& options = {});

/// Exact (weighted) refit on remain.
Eigen::VectorXd retrain_oracle(const Design& design, std::span<const int> remain,
                               std::span<const double> weights = {});

// ---------------------------------------------------------------------------
// Influence

struct MTilde {
  Eigen::VectorXd m;
  int cg_iterations = 0;
  double cg_residual = 0.0;
  int test_used = 0;
  int test_skipped = 0;  // degenerate operation-cost samples
};

/// m = -H_remain^{-1} mean_test grad(criterion), solved by CG on HVPs.
MTilde m_tilde(const CriterionEvaluator& eval, const Eigen::VectorXd& params,
               std::span<const int> remain, std::span<const int> test, LossKind criterion);

/// a_i = m' grad_i(theta) with the training-loss gradient, over idx. A
/// positive score means up-weighting the sample raises the criterion.
Eigen::VectorXd influence_scores(const Design& design, const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& m, std::span<const int> idx);

struct InfluenceReport {
  LossKind criterion = LossKind::MSE;
  Eigen::VectorXd m_tilde;
  std::vector<int> samples;
  Eigen::VectorXd scores;
  std::vector<GenerationClass> classes;
  int test_skipped = 0;
};

/// m_tilde plus scores and generation classes of every remaining sample.
InfluenceReport influence_report(const CriterionEvaluator& eval, const Eigen::VectorXd& params,
                                 std::span<const int> remain, std::span<const int> test,
                                 LossKind criterion);

// ---------------------------------------------------------------------------
// Reweighting

struct ReweightConfig {
  double lambda1 = 0.0;
  double lambda_inf = 1.0;
  /// Clamp weights at zero (only binding when lambda_inf > 1).
  bool clamp_nonnegative = false;
};

/// Minimizer of sum eps_i a_i subject to mean |eps - 1| <= lambda1 and
/// |eps_i - 1| <= lambda_inf: largest |a_i| first (ties by index), each moved
/// by up to lambda_inf against the sign of a_i until the budget is spent.
Eigen::VectorXd reweight(const Eigen::VectorXd& scores, const ReweightConfig& config);

/// Pearson correlation; throws ConfigError on constant input or length < 2.
double pearson(std::span<const double> a, std::span<const double> b);
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace lfu
