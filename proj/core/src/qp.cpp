#include "lfu/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lfu/error.hpp"

namespace lfu {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("qp: " + what);
}

double active_tolerance(double offset) { return 1e-7 * (1.0 + std::abs(offset)); }

/// Constraint ids: [0, m) are inequalities, [m, m + p) equalities. Every
/// constraint is written as n'x >= beta (inequalities) or n'x = beta.
class ConstraintView {
 public:
  explicit ConstraintView(const QpSpec& s)
      : s_(s), m_(s.inequalities()), ineq_offset_(s.b + s.g), eq_offset_(s.d + s.h) {}

  bool is_inequality(int c) const { return c < m_; }

  VectorXd normal(int c) const {
    if (c < m_) return -s_.A.row(c).transpose();
    return s_.C.row(c - m_).transpose();
  }

  double beta(int c) const { return c < m_ ? ineq_offset_(c) : -eq_offset_(c - m_); }

  double slack(int c, const VectorXd& x) const {
    if (c < m_) return -(s_.A.row(c).dot(x) + ineq_offset_(c));
    return s_.C.row(c - m_).dot(x) + eq_offset_(c - m_);
  }

  /// Magnitude of the terms entering slack(c, x), for relative tolerances.
  double scale(int c, const VectorXd& x) const {
    const double terms = c < m_ ? s_.A.row(c).cwiseAbs().dot(x.cwiseAbs())
                                : s_.C.row(c - m_).cwiseAbs().dot(x.cwiseAbs());
    return 1.0 + std::abs(beta(c)) + terms;
  }

 private:
  const QpSpec& s_;
  int m_;
  VectorXd ineq_offset_;
  VectorXd eq_offset_;
};

/// LU factorization of [Q N; N' 0] for a working set.
class WorkingSystem {
 public:
  WorkingSystem(const QpSpec& s, const ConstraintView& view) : s_(s), view_(view) {}

  void factor(const std::vector<int>& working) {
    const int n = s_.variables();
    const int w = static_cast<int>(working.size());
    MatrixXd K = MatrixXd::Zero(n + w, n + w);
    K.topLeftCorner(n, n) = s_.Q;
    for (int j = 0; j < w; ++j) {
      const VectorXd nj = view_.normal(working[j]);
      K.block(0, n + j, n, 1) = nj;
      K.block(n + j, 0, 1, n) = nj.transpose();
    }
    lu_.compute(K);
    size_ = n + w;
  }

  double rcond() const { return lu_.rcond(); }

  /// Optimum of the QP restricted to the working set as equalities:
  /// Qx + q = N u, N'x = beta.
  void optimum(const std::vector<int>& working, VectorXd& x, VectorXd& u) const {
    const int n = s_.variables();
    const int w = static_cast<int>(working.size());
    VectorXd rhs(size_);
    rhs.head(n) = -s_.q;
    for (int j = 0; j < w; ++j) rhs(n + j) = view_.beta(working[j]);
    const VectorXd sol = lu_.solve(rhs);
    x = sol.head(n);
    u = -sol.tail(w);
  }

  /// Primal step z (N'z = 0) and multiplier change r for adding normal np.
  void direction(const VectorXd& np, VectorXd& z, VectorXd& r) const {
    const int n = s_.variables();
    VectorXd rhs = VectorXd::Zero(size_);
    rhs.head(n) = np;
    const VectorXd sol = lu_.solve(rhs);
    z = sol.head(n);
    r = sol.tail(size_ - n);
  }

 private:
  const QpSpec& s_;
  const ConstraintView& view_;
  Eigen::PartialPivLU<MatrixXd> lu_;
  int size_ = 0;
};

/// True when np lies in the span of the working normals.
bool dependent_on(const ConstraintView& view, const std::vector<int>& working, const VectorXd& np) {
  if (working.empty()) return false;
  MatrixXd N(np.size(), static_cast<Eigen::Index>(working.size()));
  for (std::size_t j = 0; j < working.size(); ++j) N.col(static_cast<Eigen::Index>(j)) = view.normal(working[j]);
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(N);
  const VectorXd residual = np - N * qr.solve(np);
  return residual.norm() <= 1e-10 * np.norm();
}

void erase_at(std::vector<int>& working, VectorXd& u, int pos) {
  working.erase(working.begin() + pos);
  const Eigen::Index tail = u.size() - pos - 1;
  if (tail > 0) u.segment(pos, tail) = u.tail(tail).eval();
  u.conservativeResize(u.size() - 1);
}

}  // namespace

QpSpec make_qp(MatrixXd Q, VectorXd q, MatrixXd A, VectorXd b, MatrixXd C, VectorXd d, VectorXd g,
               VectorXd h) {
  const Eigen::Index n = Q.rows();
  check_shape(n > 0 && Q.cols() == n, "Q must be square and non-empty");
  check_shape(q.size() == n, "q has wrong length");
  if (A.size() == 0) A.resize(b.size(), n);
  if (C.size() == 0) C.resize(d.size(), n);
  check_shape(A.cols() == n && A.rows() == b.size(), "inequality block has inconsistent shape");
  check_shape(C.cols() == n && C.rows() == d.size(), "equality block has inconsistent shape");
  if (g.size() == 0) g = VectorXd::Zero(b.size());
  if (h.size() == 0) h = VectorXd::Zero(d.size());
  check_shape(g.size() == b.size(), "g has wrong length");
  check_shape(h.size() == d.size(), "h has wrong length");
  check_shape(all_finite(Q) && q.allFinite() && all_finite(A) && b.allFinite() && all_finite(C) &&
                  d.allFinite() && g.allFinite() && h.allFinite(),
              "non-finite entries");

  const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + Q.cwiseAbs().maxCoeff())) throw ConfigError("qp: Q is not symmetric");
  Q = 0.5 * (Q + Q.transpose());

  QpSpec spec;
  const double rho = 1e-8 * (1.0 + Q.trace() / static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (Q.row(i).cwiseAbs().maxCoeff() == 0.0) {
      Q(i, i) = rho;
      spec.ridge = rho;
    }
  }
  if (Eigen::LLT<MatrixXd>(Q).info() != Eigen::Success) {
    Q.diagonal().array() += rho;
    spec.ridge = rho;
    if (Eigen::LLT<MatrixXd>(Q).info() != Eigen::Success) {
      throw ConfigError("qp: Q is not positive semidefinite");
    }
  }

  if (C.rows() > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(C);
    qr.setThreshold(1e-12);
    if (qr.rank() < C.rows()) {
      throw ConfigError("qp: equality matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                        " < " + std::to_string(C.rows()) + ")");
    }
  }

  spec.Q = std::move(Q);
  spec.q = std::move(q);
  spec.A = std::move(A);
  spec.b = std::move(b);
  spec.C = std::move(C);
  spec.d = std::move(d);
  spec.g = std::move(g);
  spec.h = std::move(h);
  return spec;
}

double KktResiduals::max() const {
  return std::max({stationarity, primal_inequality, primal_equality, dual_feasibility,
                   complementarity});
}

std::vector<int> active_constraints(const QpSpec& spec, const VectorXd& x) {
  std::vector<int> active;
  const VectorXd offset = spec.b + spec.g;
  const VectorXd value = spec.A * x + offset;
  for (int i = 0; i < spec.inequalities(); ++i) {
    if (std::abs(value(i)) <= active_tolerance(offset(i))) active.push_back(i);
  }
  return active;
}

KktResiduals kkt_residuals(const QpSpec& spec, const QpSolution& sol) {
  KktResiduals r;
  const VectorXd grad = spec.Q * sol.x + spec.q + spec.A.transpose() * sol.lambda +
                        spec.C.transpose() * sol.nu;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (spec.inequalities() > 0) {
    const VectorXd ineq = spec.A * sol.x + spec.b + spec.g;
    r.primal_inequality = std::max(0.0, ineq.maxCoeff());
    r.dual_feasibility = std::max(0.0, -sol.lambda.minCoeff());
    r.complementarity = sol.lambda.cwiseProduct(ineq).cwiseAbs().maxCoeff();
  }
  if (spec.equalities() > 0) {
    r.primal_equality = (spec.C * sol.x + spec.d + spec.h).cwiseAbs().maxCoeff();
  }
  return r;
}

QpSolution solve(const QpSpec& spec, const QpSolution* warm_start) {
  const int n = spec.variables();
  const int m = spec.inequalities();
  const int p = spec.equalities();
  const ConstraintView view(spec);
  WorkingSystem system(spec, view);
  const Eigen::LLT<MatrixXd> chol(spec.Q);

  std::vector<int> working;
  VectorXd x;
  VectorXd u;
  QpSolution out;

  auto start_from = [&](const std::vector<int>& ineq) {
    working.clear();
    for (int j = 0; j < p; ++j) working.push_back(m + j);
    working.insert(working.end(), ineq.begin(), ineq.end());
    system.factor(working);
    system.optimum(working, x, u);
  };

  bool warm = false;
  if (warm_start != nullptr && !warm_start->working_set.empty()) {
    std::vector<int> hint;
    for (int i : warm_start->working_set) {
      if (i >= 0 && i < m) hint.push_back(i);
    }
    start_from(hint);
    warm = system.rcond() > 1e-14 && x.allFinite();
    for (int j = p; warm && j < static_cast<int>(working.size()); ++j) warm = u(j) >= 0.0;
  }
  if (!warm) start_from({});
  out.warm_started = warm;

  const int max_iter = 10 * (n + m + p) + 100;
  int iter = 0;
  std::vector<bool> in_working(m, false);
  auto sync_membership = [&] {
    std::fill(in_working.begin(), in_working.end(), false);
    for (int c : working) {
      if (c < m) in_working[c] = true;
    }
  };

  for (;;) {
    sync_membership();
    // Most violated inequality; ties resolved to the lowest index.
    int enter = -1;
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
      if (in_working[i]) continue;
      const double s = view.slack(i, x);
      if (s < -1e-11 * view.scale(i, x) && (enter < 0 || s < worst)) {
        enter = i;
        worst = s;
      }
    }

    if (enter < 0) {
      // Guard against multipliers that rounding pushed below zero.
      int drop = -1;
      double most_negative = 0.0;
      for (int j = p; j < static_cast<int>(working.size()); ++j) {
        if (u(j) < -1e-10 * (1.0 + std::abs(u(j))) && (drop < 0 || u(j) < most_negative)) {
          drop = j;
          most_negative = u(j);
        }
      }
      if (drop < 0) break;
      erase_at(working, u, drop);
      system.factor(working);
      system.optimum(working, x, u);
      if (++iter > max_iter) throw ConvergenceError("qp: iteration limit reached", -most_negative);
      continue;
    }

    const VectorXd np = view.normal(enter);
    const double reference = np.dot(chol.solve(np));
    double u_enter = 0.0;
    for (;;) {
      if (++iter > max_iter) {
        throw ConvergenceError("qp: iteration limit reached", -view.slack(enter, x));
      }
      VectorXd z;
      VectorXd r;
      system.direction(np, z, r);

      // Dual step bound: first working inequality whose multiplier hits zero.
      double t1 = kInf;
      int leave = -1;
      for (int j = p; j < static_cast<int>(working.size()); ++j) {
        if (r(j) <= 1e-14 * (1.0 + std::abs(u(j)))) continue;
        const double ratio = u(j) / r(j);
        if (ratio < t1 || (leave >= 0 && ratio == t1 && working[j] < working[leave])) {
          t1 = ratio;
          leave = j;
        }
      }

      const double zn = z.dot(np);
      // The curvature test alone misfires when the ridge makes Q^{-1} huge.
      const bool dependent = zn <= 1e-12 * reference && (zn <= 0.0 || dependent_on(view, working, np));
      const double t2 = dependent ? kInf : -view.slack(enter, x) / zn;

      if (t1 == kInf && t2 == kInf) {
        throw InfeasibleError("qp: constraints are infeasible (inequality " +
                              std::to_string(enter) + " cannot be satisfied)");
      }
      if (t2 == kInf) {
        u.head(working.size()) -= t1 * r;
        u_enter += t1;
        erase_at(working, u, leave);
        system.factor(working);
        continue;
      }
      const double t = std::min(t1, t2);
      x += t * z;
      u.head(working.size()) -= t * r;
      u_enter += t;
      if (t2 <= t1) {
        working.push_back(enter);
        system.factor(working);
        system.optimum(working, x, u);
        break;
      }
      erase_at(working, u, leave);
      system.factor(working);
    }
  }

  // Canonical re-solve: the returned point depends only on the final set.
  std::vector<int> final_ineq;
  for (int c : working) {
    if (c < m) final_ineq.push_back(c);
  }
  std::sort(final_ineq.begin(), final_ineq.end());
  start_from(final_ineq);

  out.x = x;
  out.lambda = VectorXd::Zero(m);
  out.nu = VectorXd::Zero(p);
  for (std::size_t j = 0; j < working.size(); ++j) {
    const int c = working[j];
    if (c < m) {
      out.lambda(c) = std::max(0.0, u(static_cast<Eigen::Index>(j)));
      out.working_set.push_back(c);
    } else {
      out.nu(c - m) = -u(static_cast<Eigen::Index>(j));
    }
  }
  std::sort(out.working_set.begin(), out.working_set.end());
  out.active_set = active_constraints(spec, out.x);
  out.iterations = iter;
  out.kkt_residual = kkt_residuals(spec, out).max();
  if (!std::isfinite(out.kkt_residual)) {
    throw ConvergenceError("qp: solution is not finite", out.kkt_residual);
  }
  return out;
}

namespace {

MatrixXd active_rows(const QpSpec& spec, const std::vector<int>& active) {
  const int n = spec.variables();
  const int s = static_cast<int>(active.size());
  MatrixXd M(s + spec.equalities(), n);
  for (int k = 0; k < s; ++k) M.row(k) = spec.A.row(active[k]);
  if (spec.equalities() > 0) M.bottomRows(spec.equalities()) = spec.C;
  return M;
}

void check_differentiable(const QpSpec& spec, const QpSolution& sol) {
  // Dependent active rows always leave a zero multiplier behind, so the rank
  // test goes first to report the cause.
  const LicqReport licq = check_licq(spec, sol);
  if (!licq.satisfied) {
    throw LicqError("qp: active constraint gradients are dependent (rank gap " +
                        std::to_string(licq.rank_gap) + ")",
                    licq.rank_gap);
  }
  for (int i : sol.active_set) {
    if (sol.lambda(i) < kStrictComplementarity) {
      throw DegenerateError("qp: inequality " + std::to_string(i) +
                                " is active with multiplier " + std::to_string(sol.lambda(i)),
                            i);
    }
  }
}

/// Right-hand side unit columns: g offsets map to active rows, h offsets to
/// equality rows. Columns of inactive g offsets stay empty (-1).
std::vector<int> selected_rows(const QpSpec& spec, const QpSolution& sol,
                               const OffsetSelection& wrt) {
  std::vector<int> pos_in_active(spec.inequalities(), -1);
  for (std::size_t k = 0; k < sol.active_set.size(); ++k) {
    pos_in_active[sol.active_set[k]] = static_cast<int>(k);
  }
  std::vector<int> rows;
  for (int i : wrt.g) {
    if (i < 0 || i >= spec.inequalities()) throw ConfigError("qp: g offset index out of range");
    rows.push_back(pos_in_active[i]);
  }
  const int s = static_cast<int>(sol.active_set.size());
  for (int j : wrt.h) {
    if (j < 0 || j >= spec.equalities()) throw ConfigError("qp: h offset index out of range");
    rows.push_back(s + j);
  }
  return rows;
}

SolutionJacobian scatter(const QpSpec& spec, const QpSolution& sol, const MatrixXd& dx,
                         const MatrixXd& dmult, const std::vector<int>& rows) {
  const int cols = static_cast<int>(rows.size());
  const int s = static_cast<int>(sol.active_set.size());
  SolutionJacobian jac;
  jac.dx = MatrixXd::Zero(spec.variables(), cols);
  jac.dlambda = MatrixXd::Zero(spec.inequalities(), cols);
  jac.dnu = MatrixXd::Zero(spec.equalities(), cols);
  int solved = 0;
  for (int c = 0; c < cols; ++c) {
    if (rows[c] < 0) continue;
    jac.dx.col(c) = dx.col(solved);
    for (int k = 0; k < s; ++k) jac.dlambda(sol.active_set[k], c) = dmult(k, solved);
    jac.dnu.col(c) = dmult.col(solved).tail(spec.equalities());
    ++solved;
  }
  return jac;
}

}  // namespace

LicqReport check_licq(const QpSpec& spec, const QpSolution& sol) {
  LicqReport report;
  const MatrixXd M = active_rows(spec, sol.active_set);
  report.rows = static_cast<int>(M.rows());
  if (report.rows == 0) {
    report.satisfied = true;
    return report;
  }
  const Eigen::JacobiSVD<MatrixXd> svd(M);
  const VectorXd& sigma = svd.singularValues();
  const double tol = 1e-8 * sigma(0);
  int rank = 0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (sigma(k) > tol) ++rank;
  }
  report.rank_gap = report.rows - rank;
  report.satisfied = report.rank_gap == 0;
  return report;
}

OffsetSelection OffsetSelection::all_equalities(const QpSpec& spec) {
  OffsetSelection sel;
  for (int j = 0; j < spec.equalities(); ++j) sel.h.push_back(j);
  return sel;
}

SolutionJacobian solution_jacobian(const QpSpec& spec, const QpSolution& sol,
                                   const OffsetSelection& wrt) {
  check_differentiable(spec, sol);
  const int n = spec.variables();
  const MatrixXd N = active_rows(spec, sol.active_set);
  const int r = static_cast<int>(N.rows());
  const std::vector<int> rows = selected_rows(spec, sol, wrt);
  const int solved = static_cast<int>(std::count_if(rows.begin(), rows.end(), [](int v) { return v >= 0; }));

  MatrixXd K = MatrixXd::Zero(n + r, n + r);
  K.topLeftCorner(n, n) = spec.Q;
  K.topRightCorner(n, r) = N.transpose();
  K.bottomLeftCorner(r, n) = N;
  MatrixXd rhs = MatrixXd::Zero(n + r, solved);
  int c = 0;
  for (int row : rows) {
    if (row >= 0) rhs(n + row, c++) = -1.0;
  }
  const MatrixXd sol_k = Eigen::PartialPivLU<MatrixXd>(K).solve(rhs);
  return scatter(spec, sol, sol_k.topRows(n), sol_k.bottomRows(r), rows);
}

SolutionJacobian solution_jacobian_closed_form(const QpSpec& spec, const QpSolution& sol,
                                               const OffsetSelection& wrt) {
  check_differentiable(spec, sol);
  const MatrixXd N = active_rows(spec, sol.active_set);
  const int r = static_cast<int>(N.rows());
  const std::vector<int> rows = selected_rows(spec, sol, wrt);
  const int solved = static_cast<int>(std::count_if(rows.begin(), rows.end(), [](int v) { return v >= 0; }));

  const Eigen::LLT<MatrixXd> chol(spec.Q);
  const MatrixXd QinvNt = chol.solve(N.transpose());
  const MatrixXd schur = N * QinvNt;
  MatrixXd unit = MatrixXd::Zero(r, solved);
  int c = 0;
  for (int row : rows) {
    if (row >= 0) unit(row, c++) = 1.0;
  }
  const MatrixXd dmult = schur.ldlt().solve(unit);
  const MatrixXd dx = -QinvNt * dmult;
  return scatter(spec, sol, dx, dmult, rows);
}

}  // namespace lfu
