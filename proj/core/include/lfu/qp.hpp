#pragma once

#include <vector>

#include <Eigen/Dense>

namespace lfu {

/// Dense strictly convex QP in affine-parametric form
///
///   min  1/2 x'Qx + q'x
///   s.t. A x + b + g <= 0
///        C x + d + h  = 0
///
/// `g` and `h` are the parametric offsets; Jacobians of the solution are
/// taken with respect to them.
struct QpSpec {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  Eigen::VectorXd g;
  Eigen::VectorXd h;
  /// Diagonal regularization added by make_qp (0 when none was needed).
  double ridge = 0.0;

  int variables() const { return static_cast<int>(Q.rows()); }
  int inequalities() const { return static_cast<int>(A.rows()); }
  int equalities() const { return static_cast<int>(C.rows()); }
};

/// Validates shapes, symmetrizes Q and makes it positive definite: variables
/// with an all-zero row in Q receive rho = 1e-8 (1 + trace(Q)/dim) on the
/// diagonal; if Q is still not positive definite rho*I is added. Empty `g`
/// and `h` default to zero. Throws ConfigError when C is rank deficient.
QpSpec make_qp(Eigen::MatrixXd Q, Eigen::VectorXd q, Eigen::MatrixXd A, Eigen::VectorXd b,
               Eigen::MatrixXd C, Eigen::VectorXd d, Eigen::VectorXd g = {},
               Eigen::VectorXd h = {});

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // inequality multipliers, >= 0
  Eigen::VectorXd nu;      // equality multipliers
  /// Inequalities with |A_i x + b_i + g_i| <= 1e-7 (1 + |b_i + g_i|).
  std::vector<int> active_set;
  /// Inequalities held in the solver's final working set.
  std::vector<int> working_set;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool warm_started = false;
};

struct KktResiduals {
  double stationarity = 0.0;
  double primal_inequality = 0.0;
  double primal_equality = 0.0;
  double dual_feasibility = 0.0;
  double complementarity = 0.0;

  double max() const;
};

/// Dual active-set (Goldfarb-Idnani) solve. After every working-set change
/// the iterate is re-solved from the KKT system of that set, so the result
/// depends only on the final working set. `warm_start` offers a previous
/// working set to try first.
///
/// Throws InfeasibleError when no feasible point exists and ConvergenceError
/// on iteration exhaustion.
QpSolution solve(const QpSpec& spec, const QpSolution* warm_start = nullptr);

KktResiduals kkt_residuals(const QpSpec& spec, const QpSolution& sol);

/// Inequalities active at x under the tolerance documented on QpSolution.
std::vector<int> active_constraints(const QpSpec& spec, const Eigen::VectorXd& x);

struct LicqReport {
  bool satisfied = false;
  int rows = 0;      // active inequalities + equalities
  int rank_gap = 0;  // rows - numerical rank
};

/// Rank test of the stacked active-inequality and equality rows, tolerance
/// 1e-8 times the largest singular value.
LicqReport check_licq(const QpSpec& spec, const QpSolution& sol);

/// Offsets to differentiate against; columns of the Jacobian follow the
/// order of `g` then `h`.
struct OffsetSelection {
  std::vector<int> g;
  std::vector<int> h;

  static OffsetSelection all_equalities(const QpSpec& spec);
};

struct SolutionJacobian {
  Eigen::MatrixXd dx;       // variables x columns
  Eigen::MatrixXd dlambda;  // inequalities x columns
  Eigen::MatrixXd dnu;      // equalities x columns
};

/// Minimum multiplier of an active inequality before it counts as degenerate.
inline constexpr double kStrictComplementarity = 1e-9;

/// Exact Jacobian of the primal/dual solution w.r.t. the selected offsets,
/// valid on the region where the active set is unchanged. Solved from the
/// differentiated KKT system of the active set. Columns of inactive
/// inequality offsets are exactly zero.
///
/// Throws LicqError or DegenerateError (active constraint with multiplier
/// below kStrictComplementarity).
SolutionJacobian solution_jacobian(const QpSpec& spec, const QpSolution& sol,
                                   const OffsetSelection& wrt);

/// Same map through the explicit Schur form
///   dx = -Q^{-1} [A~' C'] Qs^{-1},   Qs = [A~; C] Q^{-1} [A~' C'].
/// Algebraically identical to solution_jacobian; numerically only suited to
/// well-scaled Q.
SolutionJacobian solution_jacobian_closed_form(const QpSpec& spec, const QpSolution& sol,
                                               const OffsetSelection& wrt);

}  // namespace lfu
