#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "lfu/grid.hpp"

namespace lfu::test {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd random_vector(Rng& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = g(rng);
  }
  return m;
}

MatrixXd random_spd(Rng& rng, int n, double lo, double hi) {
  const Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, n));
  const MatrixXd U = qr.householderQ();
  const VectorXd eig = random_vector(rng, n, lo, hi);
  const MatrixXd S = U * eig.asDiagonal() * U.transpose();
  return 0.5 * (S + S.transpose());
}

QpSpec random_qp(Rng& rng, int n, int m, int p) {
  const MatrixXd Q = random_spd(rng, n);
  const VectorXd q = random_vector(rng, n, -2.0, 2.0);
  const MatrixXd C = random_matrix(rng, p, n);
  const VectorXd x0 = random_vector(rng, n);
  const VectorXd d = -C * x0;

  // Equality-constrained optimum, used to place binding inequalities.
  MatrixXd K = MatrixXd::Zero(n + p, n + p);
  K.topLeftCorner(n, n) = Q;
  K.topRightCorner(n, p) = C.transpose();
  K.bottomLeftCorner(p, n) = C;
  VectorXd rhs(n + p);
  rhs << -q, -d;
  const VectorXd xu = K.fullPivLu().solve(rhs).head(n);

  MatrixXd A = random_matrix(rng, m, n);
  VectorXd b(m);
  std::uniform_real_distribution<double> slack(0.1, 1.0);
  for (int i = 0; i < m; ++i) {
    if (i % 2 == 0) {
      double gap = A.row(i).dot(xu - x0);
      if (gap < 0.0) {
        A.row(i) *= -1.0;
        gap = -gap;
      }
      b(i) = -A.row(i).dot(x0) - 0.5 * gap;
    } else {
      b(i) = -A.row(i).dot(x0) - slack(rng);
    }
  }
  return make_qp(Q, q, A, b, C, d);
}

OracleSolution enumerate_active_sets(const QpSpec& spec) {
  const int n = spec.variables();
  const int m = spec.inequalities();
  const int p = spec.equalities();
  const VectorXd ineq_off = spec.b + spec.g;
  const VectorXd eq_off = spec.d + spec.h;
  OracleSolution best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> S;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) S.push_back(i);
    }
    const int s = static_cast<int>(S.size());
    if (s + p > n) continue;
    MatrixXd K = MatrixXd::Zero(n + s + p, n + s + p);
    VectorXd rhs = VectorXd::Zero(n + s + p);
    K.topLeftCorner(n, n) = spec.Q;
    rhs.head(n) = -spec.q;
    for (int k = 0; k < s; ++k) {
      K.block(0, n + k, n, 1) = spec.A.row(S[k]).transpose();
      K.block(n + k, 0, 1, n) = spec.A.row(S[k]);
      rhs(n + k) = -ineq_off(S[k]);
    }
    for (int j = 0; j < p; ++j) {
      K.block(0, n + s + j, n, 1) = spec.C.row(j).transpose();
      K.block(n + s + j, 0, 1, n) = spec.C.row(j);
      rhs(n + s + j) = -eq_off(j);
    }
    const Eigen::FullPivLU<MatrixXd> lu(K);
    if (lu.rank() < K.rows()) continue;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd x = sol.head(n);
    bool ok = true;
    for (int k = 0; k < s && ok; ++k) ok = sol(n + k) >= -1e-10;
    const VectorXd viol = spec.A * x + ineq_off;
    for (int i = 0; i < m && ok; ++i) ok = viol(i) <= 1e-10 * (1.0 + std::abs(ineq_off(i)));
    if (!ok) continue;
    const double obj = 0.5 * x.dot(spec.Q * x) + spec.q.dot(x);
    if (obj < best_obj) {
      best_obj = obj;
      best.x = x;
      best.active = S;
      best.found = true;
    }
  }
  return best;
}

double lp_vertex_oracle(const VectorXd& a, double lambda1, double lambda_inf) {
  const int n = static_cast<int>(a.size());
  const double budget = n * lambda1;
  double best = std::numeric_limits<double>::infinity();
  // Each coordinate: 0 -> delta 0, 1 -> +L, 2 -> -L; optionally one free one.
  std::vector<int> digit(n, 0);
  long total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int i = 0; i < n; ++i) {
      digit[i] = static_cast<int>(c % 3);
      c /= 3;
    }
    VectorXd delta = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) delta(i) = digit[i] == 1 ? lambda_inf : (digit[i] == 2 ? -lambda_inf : 0.0);
    const double used = delta.cwiseAbs().sum();
    if (used <= budget + 1e-12) best = std::min(best, (VectorXd::Ones(n) + delta).dot(a));
    for (int f = 0; f < n; ++f) {
      if (digit[f] != 0) continue;
      const double rest = budget - used;
      if (rest <= 0.0 || rest >= lambda_inf) continue;
      for (double sign : {1.0, -1.0}) {
        VectorXd d2 = delta;
        d2(f) = sign * rest;
        best = std::min(best, (VectorXd::Ones(n) + d2).dot(a));
      }
    }
  }
  return best;
}

double lifted_lp_oracle(const VectorXd& a, double lambda1, double lambda_inf) {
  // Variables (delta, t) in R^{2N}: delta_i - t_i <= 0, -delta_i - t_i <= 0,
  // t_i <= L, sum t <= N lambda1.
  const int n = static_cast<int>(a.size());
  const int nv = 2 * n;
  const int rows = 3 * n + 1;
  MatrixXd G = MatrixXd::Zero(rows, nv);
  VectorXd h = VectorXd::Zero(rows);
  for (int i = 0; i < n; ++i) {
    G(i, i) = 1.0;
    G(i, n + i) = -1.0;
    G(n + i, i) = -1.0;
    G(n + i, n + i) = -1.0;
    G(2 * n + i, n + i) = 1.0;
    h(2 * n + i) = lambda_inf;
  }
  G.row(3 * n).tail(n).setOnes();
  h(3 * n) = n * lambda1;

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(rows, 0);
  std::fill(pick.begin() + (rows - nv), pick.end(), 1);
  do {
    MatrixXd M(nv, nv);
    VectorXd r(nv);
    int k = 0;
    for (int i = 0; i < rows; ++i) {
      if (pick[i]) {
        M.row(k) = G.row(i);
        r(k) = h(i);
        ++k;
      }
    }
    const Eigen::FullPivLU<MatrixXd> lu(M);
    if (lu.rank() < nv) continue;
    const VectorXd z = lu.solve(r);
    if (((G * z - h).array() > 1e-10).any()) continue;
    best = std::min(best, a.sum() + a.dot(z.head(n)));
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
                     double step) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp(k) += step;
    xm(k) -= step;
    J.col(k) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return J;
}

VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double step) {
  VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp(k) += step;
    xm(k) -= step;
    g(k) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

double rel_error(const MatrixXd& a, const MatrixXd& b, double floor) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

std::string asset(const std::string& name) { return std::string(LFU_TEST_ASSET_DIR) + "/" + name; }

GridCase shipped_case() { return load_case(asset("case14.json")); }

namespace {

GridCase finish(const nlohmann::json& doc) {
  GridCase grid = parse_case(doc.dump());
  return grid;
}

nlohmann::json base_costs() {
  return {{"c_ls", 1000.0}, {"c_ls1", 150.0}, {"c_ls2", 0.5}, {"c_gs1", 5.0}, {"c_gs2", 0.05}};
}

}  // namespace

GridCase one_bus_case(double q_cost, double c_cost, double pmax) {
  nlohmann::json doc;
  doc["buses"] = {{{"id", 1}, {"ref", true}}};
  doc["branches"] = nlohmann::json::array();
  doc["generators"] = {{{"bus", 1}, {"pmin", 0.0}, {"pmax", pmax}, {"q_cost", q_cost}, {"c_cost", c_cost}}};
  doc["loads"] = {{{"bus", 1}}};
  doc["costs"] = base_costs();
  doc["base_mw"] = 100.0;
  return finish(doc);
}

GridCase two_bus_case(double b, double flow_max) {
  nlohmann::json doc;
  doc["buses"] = {{{"id", 1}, {"ref", true}}, {{"id", 2}}};
  doc["branches"] = {{{"from", 1}, {"to", 2}, {"b", b}, {"flow_max", flow_max}}};
  doc["generators"] = {{{"bus", 1}, {"pmin", 0.0}, {"pmax", 200.0}, {"q_cost", 0.05}, {"c_cost", 20.0}},
                       {{"bus", 2}, {"pmin", 0.0}, {"pmax", 200.0}, {"q_cost", 0.1}, {"c_cost", 40.0}}};
  doc["loads"] = {{{"bus", 2}}};
  doc["costs"] = base_costs();
  doc["base_mw"] = 100.0;
  return finish(doc);
}

std::string case_json(const GridCase& grid) {
  nlohmann::json doc;
  doc["buses"] = nlohmann::json::array();
  for (int i = 0; i < grid.buses(); ++i) {
    const bool ref = std::find(grid.ref_buses.begin(), grid.ref_buses.end(), i) != grid.ref_buses.end();
    doc["buses"].push_back({{"id", grid.bus_ids[i]}, {"ref", ref}});
  }
  doc["branches"] = nlohmann::json::array();
  for (const Branch& br : grid.branches) {
    doc["branches"].push_back({{"from", grid.bus_ids[br.from]},
                               {"to", grid.bus_ids[br.to]},
                               {"b", br.susceptance},
                               {"flow_max", br.flow_max}});
  }
  doc["generators"] = nlohmann::json::array();
  for (const Generator& g : grid.generators) {
    doc["generators"].push_back({{"bus", grid.bus_ids[g.bus]},
                                 {"pmin", g.pmin},
                                 {"pmax", g.pmax},
                                 {"q_cost", g.q_cost},
                                 {"c_cost", g.c_cost}});
  }
  doc["loads"] = nlohmann::json::array();
  for (int bus : grid.load_buses) doc["loads"].push_back({{"bus", grid.bus_ids[bus]}});
  doc["costs"] = {{"c_ls", grid.costs.c_ls},
                  {"c_ls1", grid.costs.c_ls1},
                  {"c_ls2", grid.costs.c_ls2},
                  {"c_gs1", grid.costs.c_gs1},
                  {"c_gs2", grid.costs.c_gs2}};
  doc["base_mw"] = grid.base_mw;
  return doc.dump();
}

Dataset small_dataset(int samples, std::uint64_t seed, int loads, int features) {
  SyntheticConfig cfg;
  cfg.samples = samples;
  cfg.seed = seed;
  cfg.loads = loads;
  cfg.features_per_load = features;
  return generate_synthetic(cfg);
}

}  // namespace lfu::test
