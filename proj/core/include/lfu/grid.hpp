#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lfu {

struct Branch {
  int from = 0;  // bus index (0-based, order of the case file)
  int to = 0;
  double susceptance = 0.0;  // per unit on base_mw
  double flow_max = 0.0;     // MW
};

struct Generator {
  int bus = 0;
  double pmin = 0.0;    // MW
  double pmax = 0.0;    // MW
  double q_cost = 0.0;  // $/MW^2
  double c_cost = 0.0;  // $/MW
};

/// Scalar penalty coefficients of the two operation stages.
struct StageCosts {
  double c_ls = 0.0;   // dispatch slack, $/MW
  double c_ls1 = 0.0;  // load shedding, $/MW
  double c_ls2 = 0.0;  // load shedding, $/MW^2
  double c_gs1 = 0.0;  // generation storage, $/MW
  double c_gs2 = 0.0;  // generation storage, $/MW^2
};

/// DC power-flow network. Susceptances are per unit, so MW flows are
/// `base_mw * B_f * angles` and nodal injections `base_mw * B_bus * angles`.
struct GridCase {
  std::vector<int> bus_ids;
  std::vector<int> ref_buses;  // indices flagged as reference (valid cases have one)
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<int> load_buses;  // bus index of each load, in dataset load order
  StageCosts costs;
  double base_mw = 100.0;

  Eigen::MatrixXd B_bus;  // buses x buses
  Eigen::MatrixXd B_f;    // branches x buses
  Eigen::MatrixXd C_g;    // buses x generators
  Eigen::MatrixXd C_l;    // buses x loads

  int buses() const { return static_cast<int>(bus_ids.size()); }
  int loads() const { return static_cast<int>(load_buses.size()); }
  int gens() const { return static_cast<int>(generators.size()); }
  int ref_bus() const { return ref_buses.empty() ? -1 : ref_buses.front(); }

  Eigen::VectorXd q_cost() const;
  Eigen::VectorXd c_cost() const;
  Eigen::VectorXd pmin() const;
  Eigen::VectorXd pmax() const;
  Eigen::VectorXd flow_max() const;
};

/// Parses a JSON case document and builds the derived matrices without
/// validating the network.
GridCase parse_case(const std::string& json_text);

/// Rebuilds B_bus, B_f, C_g and C_l from the element lists.
void build_matrices(GridCase& grid);

/// Lists every violated invariant; empty when the case is usable.
std::vector<std::string> validate_case(const GridCase& grid);

/// Reads, parses and validates; throws ConfigError listing all violations.
GridCase load_case(const std::filesystem::path& path);

}  // namespace lfu
