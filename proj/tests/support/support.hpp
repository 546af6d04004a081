#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfu/data.hpp"
#include "lfu/grid.hpp"
#include "lfu/qp.hpp"

namespace lfu::test {

using Rng = std::mt19937_64;

Eigen::VectorXd random_vector(Rng& rng, int n, double lo = -1.0, double hi = 1.0);
Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols);
/// Well-conditioned SPD matrix with eigenvalues in [lo, hi].
Eigen::MatrixXd random_spd(Rng& rng, int n, double lo = 0.5, double hi = 5.0);

/// Strictly convex QP with a strictly feasible interior point. Some
/// inequalities are shifted so that they bind at the unconstrained optimum.
QpSpec random_qp(Rng& rng, int n, int m, int p);

/// Brute-force reference: every subset of inequalities is tried as an
/// equality set and the KKT-consistent candidate is returned.
struct OracleSolution {
  Eigen::VectorXd x;
  std::vector<int> active;
  bool found = false;
};
OracleSolution enumerate_active_sets(const QpSpec& spec);

/// Minimum of sum eps_i a_i over the reweighting polytope, by enumerating
/// candidate vertices: every coordinate at 1 or 1 +- lambda_inf except at
/// most one, which takes up the rest of the 1-norm budget.
double lp_vertex_oracle(const Eigen::VectorXd& a, double lambda1, double lambda_inf);

/// Generic LP vertex enumeration of the lifted program in (delta, t); only
/// practical for N <= 4.
double lifted_lp_oracle(const Eigen::VectorXd& a, double lambda1, double lambda_inf);

/// Central differences of a vector-valued function.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step);
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step);

/// max |a - b| / max(|b|_inf, floor).
double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12);

std::string asset(const std::string& name);
GridCase shipped_case();

/// Single bus with one generator and one load.
GridCase one_bus_case(double q_cost = 0.5, double c_cost = 10.0, double pmax = 100.0);
/// Two buses joined by one branch of susceptance b.
GridCase two_bus_case(double b = 10.0, double flow_max = 50.0);
std::string case_json(const GridCase& grid);

/// Small synthetic dataset for fast unit tests.
Dataset small_dataset(int samples = 240, std::uint64_t seed = 7, int loads = 14, int features = 10);

}  // namespace lfu::test
