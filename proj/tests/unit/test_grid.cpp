#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lfu/error.hpp"
#include "lfu/grid.hpp"
#include "support.hpp"

using namespace lfu;
using nlohmann::json;

namespace {

GridCase mutate(const GridCase& grid, const std::function<void(json&)>& edit) {
  json doc = json::parse(test::case_json(grid));
  edit(doc);
  return parse_case(doc.dump());
}

bool mentions(const std::vector<std::string>& issues, const std::string& needle) {
  for (const auto& s : issues) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("bundled case parses and validates") {
  const GridCase grid = test::shipped_case();
  CHECK(grid.buses() == 14);
  CHECK(grid.loads() == 14);
  CHECK(grid.branches.size() == 20);
  CHECK(grid.ref_buses.size() == 1);
  CHECK(validate_case(grid).empty());
  CHECK(grid.B_bus.rows() == 14);
  CHECK(grid.B_f.rows() == 20);
  CHECK(grid.C_g.cols() == grid.gens());
  CHECK(grid.C_l.cols() == 14);
}

TEST_CASE("two-bus susceptance") {
  const double b = 7.5;
  const GridCase grid = test::two_bus_case(b);
  Eigen::Matrix2d expected;
  expected << b, -b, -b, b;
  CHECK(grid.B_bus == expected);
  CHECK(validate_case(grid).empty());
}

TEST_CASE("cost ordering is enforced") {
  const GridCase bad = mutate(test::two_bus_case(), [](json& d) { d["costs"]["c_gs2"] = 1.0; });
  CHECK(mentions(validate_case(bad), "c_gs2 < c_ls2"));
  const GridCase bad1 = mutate(test::two_bus_case(), [](json& d) { d["costs"]["c_gs1"] = 500.0; });
  CHECK(mentions(validate_case(bad1), "c_gs1 < c_ls1"));

  const auto path = std::filesystem::temp_directory_path() / "lfu_test_bad_case.json";
  std::ofstream(path) << test::case_json(bad);
  CHECK_THROWS_AS(load_case(path), ConfigError);
}

TEST_CASE("structural violations") {
  const GridCase base = test::two_bus_case();
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["branches"][0]["b"] = 0.0; })), "zero susceptance"));
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["buses"][1]["ref"] = true; })), "multiple reference"));
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["buses"][0]["ref"] = false; })), "no reference"));
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["branches"] = json::array(); })), "disconnected"));
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["generators"][0]["q_cost"] = 0.0; })),
                 "positive quadratic cost"));
  CHECK(mentions(validate_case(mutate(base, [](json& d) { d["generators"][0]["pmin"] = 500.0; })),
                 "pmin > pmax"));
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_case("{"), FormatError);
  CHECK_THROWS_AS(parse_case("[]"), FormatError);
  json doc = json::parse(test::case_json(test::two_bus_case()));
  doc["loads"][0]["bus"] = 99;
  CHECK_THROWS_AS(parse_case(doc.dump()), FormatError);
  doc = json::parse(test::case_json(test::two_bus_case()));
  doc.erase("costs");
  CHECK_THROWS_AS(parse_case(doc.dump()), FormatError);
  CHECK_THROWS_AS(load_case("/nonexistent/case.json"), IoError);
}

TEST_CASE("susceptance matrix properties") {
  const GridCase grid = test::shipped_case();
  const Eigen::VectorXd row_sums = grid.B_bus * Eigen::VectorXd::Ones(grid.buses());
  CHECK(row_sums.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((grid.B_bus - grid.B_bus.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(grid.B_bus);
  lu.setThreshold(1e-10);
  CHECK(lu.rank() == grid.buses() - 1);
}

TEST_CASE("branch flows from angles") {
  const GridCase grid = test::shipped_case();
  test::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd theta = test::random_vector(rng, grid.buses(), -0.3, 0.3);
    const Eigen::VectorXd flows = grid.B_f * theta;
    for (std::size_t k = 0; k < grid.branches.size(); ++k) {
      const Branch& br = grid.branches[k];
      CHECK(std::abs(flows(k) - br.susceptance * (theta(br.from) - theta(br.to))) <= 1e-14 * br.susceptance);
    }
    // Nodal injections are the incidence-weighted sum of branch flows.
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(grid.buses());
    for (std::size_t k = 0; k < grid.branches.size(); ++k) {
      inj(grid.branches[k].from) += flows(k);
      inj(grid.branches[k].to) -= flows(k);
    }
    CHECK((grid.B_bus * theta - inj).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("case json round trip") {
  const GridCase grid = test::shipped_case();
  const GridCase back = parse_case(test::case_json(grid));
  CHECK(back.B_bus == grid.B_bus);
  CHECK(back.C_g == grid.C_g);
  CHECK(back.C_l == grid.C_l);
  CHECK(back.flow_max() == grid.flow_max());
}
