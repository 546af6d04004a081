#include "lfu/grid.hpp"

#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "lfu/error.hpp"

namespace lfu {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw FormatError("grid case: missing '" + std::string(key) + "' in " + where);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError("grid case: bad '" + std::string(key) + "' in " + where + ": " + e.what());
  }
}

const json& array_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_array()) {
    throw FormatError("grid case: '" + std::string(key) + "' must be an array");
  }
  return doc.at(key);
}

}  // namespace

Eigen::VectorXd GridCase::q_cost() const {
  Eigen::VectorXd v(gens());
  for (int g = 0; g < gens(); ++g) v(g) = generators[g].q_cost;
  return v;
}

Eigen::VectorXd GridCase::c_cost() const {
  Eigen::VectorXd v(gens());
  for (int g = 0; g < gens(); ++g) v(g) = generators[g].c_cost;
  return v;
}

Eigen::VectorXd GridCase::pmin() const {
  Eigen::VectorXd v(gens());
  for (int g = 0; g < gens(); ++g) v(g) = generators[g].pmin;
  return v;
}

Eigen::VectorXd GridCase::pmax() const {
  Eigen::VectorXd v(gens());
  for (int g = 0; g < gens(); ++g) v(g) = generators[g].pmax;
  return v;
}

Eigen::VectorXd GridCase::flow_max() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(branches.size()));
  for (std::size_t k = 0; k < branches.size(); ++k) v(static_cast<Eigen::Index>(k)) = branches[k].flow_max;
  return v;
}

void build_matrices(GridCase& grid) {
  const int nb = grid.buses();
  const int nbr = static_cast<int>(grid.branches.size());
  grid.B_bus = Eigen::MatrixXd::Zero(nb, nb);
  grid.B_f = Eigen::MatrixXd::Zero(nbr, nb);
  for (int k = 0; k < nbr; ++k) {
    const Branch& br = grid.branches[k];
    const double b = br.susceptance;
    grid.B_bus(br.from, br.from) += b;
    grid.B_bus(br.to, br.to) += b;
    grid.B_bus(br.from, br.to) -= b;
    grid.B_bus(br.to, br.from) -= b;
    grid.B_f(k, br.from) = b;
    grid.B_f(k, br.to) = -b;
  }
  grid.C_g = Eigen::MatrixXd::Zero(nb, grid.gens());
  for (int g = 0; g < grid.gens(); ++g) grid.C_g(grid.generators[g].bus, g) = 1.0;
  grid.C_l = Eigen::MatrixXd::Zero(nb, grid.loads());
  for (int l = 0; l < grid.loads(); ++l) grid.C_l(grid.load_buses[l], l) = 1.0;
}

GridCase parse_case(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("grid case: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("grid case: top level must be an object");

  GridCase grid;
  std::map<int, int> index_of;
  const json& buses = array_field(doc, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    const int id = field<int>(buses[i], "id", where);
    if (index_of.count(id)) throw FormatError("grid case: duplicate bus id " + std::to_string(id));
    index_of[id] = static_cast<int>(i);
    grid.bus_ids.push_back(id);
    const bool ref = buses[i].contains("ref") ? field<bool>(buses[i], "ref", where) : false;
    if (ref) grid.ref_buses.push_back(static_cast<int>(i));
  }
  auto resolve = [&](int id, const std::string& where) {
    const auto it = index_of.find(id);
    if (it == index_of.end()) {
      throw FormatError("grid case: " + where + " references unknown bus " + std::to_string(id));
    }
    return it->second;
  };

  const json& branches = array_field(doc, "branches");
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const std::string where = "branches[" + std::to_string(k) + "]";
    Branch br;
    br.from = resolve(field<int>(branches[k], "from", where), where);
    br.to = resolve(field<int>(branches[k], "to", where), where);
    br.susceptance = field<double>(branches[k], "b", where);
    br.flow_max = field<double>(branches[k], "flow_max", where);
    grid.branches.push_back(br);
  }

  const json& gens = array_field(doc, "generators");
  for (std::size_t g = 0; g < gens.size(); ++g) {
    const std::string where = "generators[" + std::to_string(g) + "]";
    Generator gen;
    gen.bus = resolve(field<int>(gens[g], "bus", where), where);
    gen.pmin = field<double>(gens[g], "pmin", where);
    gen.pmax = field<double>(gens[g], "pmax", where);
    gen.q_cost = field<double>(gens[g], "q_cost", where);
    gen.c_cost = field<double>(gens[g], "c_cost", where);
    grid.generators.push_back(gen);
  }

  const json& loads = array_field(doc, "loads");
  for (std::size_t l = 0; l < loads.size(); ++l) {
    const std::string where = "loads[" + std::to_string(l) + "]";
    grid.load_buses.push_back(resolve(field<int>(loads[l], "bus", where), where));
  }

  if (!doc.contains("costs")) throw FormatError("grid case: missing 'costs'");
  const json& costs = doc.at("costs");
  grid.costs.c_ls = field<double>(costs, "c_ls", "costs");
  grid.costs.c_ls1 = field<double>(costs, "c_ls1", "costs");
  grid.costs.c_ls2 = field<double>(costs, "c_ls2", "costs");
  grid.costs.c_gs1 = field<double>(costs, "c_gs1", "costs");
  grid.costs.c_gs2 = field<double>(costs, "c_gs2", "costs");
  grid.base_mw = field<double>(doc, "base_mw", "case");

  build_matrices(grid);
  return grid;
}

std::vector<std::string> validate_case(const GridCase& grid) {
  std::vector<std::string> issues;
  const int nb = grid.buses();
  if (nb == 0) issues.emplace_back("case has no buses");
  if (grid.ref_buses.empty()) issues.emplace_back("no reference bus");
  if (grid.ref_buses.size() > 1) {
    issues.emplace_back("multiple reference buses (" + std::to_string(grid.ref_buses.size()) + ")");
  }
  if (!(grid.base_mw > 0.0)) issues.emplace_back("base_mw must be positive");

  for (std::size_t k = 0; k < grid.branches.size(); ++k) {
    const Branch& br = grid.branches[k];
    const std::string name = "branch " + std::to_string(k);
    if (br.from == br.to) issues.push_back(name + " is a self loop");
    if (br.susceptance == 0.0) issues.push_back(name + " has zero susceptance");
    if (br.susceptance < 0.0) issues.push_back(name + " has negative susceptance");
    if (!(br.flow_max > 0.0)) issues.push_back(name + " has non-positive flow limit");
  }
  for (int g = 0; g < grid.gens(); ++g) {
    const Generator& gen = grid.generators[g];
    const std::string name = "generator " + std::to_string(g);
    if (!(gen.q_cost > 0.0)) issues.push_back(name + " needs a positive quadratic cost");
    if (gen.pmin > gen.pmax) issues.push_back(name + " has pmin > pmax");
  }
  if (grid.gens() == 0) issues.emplace_back("case has no generators");
  if (grid.loads() == 0) issues.emplace_back("case has no loads");

  const StageCosts& c = grid.costs;
  if (!(c.c_gs2 < c.c_ls2)) issues.emplace_back("cost ordering violated: need c_gs2 < c_ls2");
  if (!(c.c_gs1 < c.c_ls1)) issues.emplace_back("cost ordering violated: need c_gs1 < c_ls1");
  if (!(c.c_ls2 > 0.0) || !(c.c_gs2 > 0.0)) {
    issues.emplace_back("quadratic shedding and storage costs must be positive");
  }
  if (c.c_ls < 0.0 || c.c_ls1 < 0.0 || c.c_gs1 < 0.0) issues.emplace_back("negative linear cost");

  // Connectivity through branches with non-zero susceptance.
  if (nb > 0) {
    std::vector<std::vector<int>> adj(nb);
    for (const Branch& br : grid.branches) {
      if (br.susceptance == 0.0 || br.from == br.to) continue;
      adj[br.from].push_back(br.to);
      adj[br.to].push_back(br.from);
    }
    std::vector<bool> seen(nb, false);
    std::queue<int> todo;
    todo.push(0);
    seen[0] = true;
    int reached = 1;
    while (!todo.empty()) {
      const int u = todo.front();
      todo.pop();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          ++reached;
          todo.push(v);
        }
      }
    }
    if (reached != nb) {
      issues.push_back("network is disconnected (" + std::to_string(reached) + " of " +
                       std::to_string(nb) + " buses reachable)");
    }
  }
  return issues;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid case " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  GridCase grid = parse_case(buffer.str());
  const auto issues = validate_case(grid);
  if (!issues.empty()) {
    std::string msg = "invalid grid case " + path.string() + ":";
    for (const auto& issue : issues) msg += "\n  - " + issue;
    throw ConfigError(msg);
  }
  return grid;
}

}  // namespace lfu
