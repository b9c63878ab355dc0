#include "support.hpp"

#include "p2pm/experiments.hpp"
#include "p2pm/oracle.hpp"
#include "p2pm/scenario_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>

using namespace p2pm;
using doctest::Approx;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "p2pm_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool connected(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        q.push(w);
      }
  }
  return count == n;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("37-bus feeder with twelve prosumers") {
  const Scenario s = builtin_ieee37(12, 7);
  CHECK(s.num_buses() == 37);
  CHECK(s.num_lines() == 36);
  CHECK(s.num_prosumers() == 12);
  CHECK(s.data().passive_consumers.size() == 15);
  CHECK(s.horizon() == 24);
  CHECK(scenario_to_json(builtin_ieee37_data(12, 7)) == scenario_to_json(builtin_ieee37_data(12, 7)));
  CHECK(scenario_to_json(builtin_ieee37_data(12, 7)) != scenario_to_json(builtin_ieee37_data(12, 8)));
}

TEST_CASE("feeder default cost parameters") {
  const Scenario s = builtin_ieee37(12, 3);
  CHECK(s.pricing().tariff == 0.01);
  for (const auto& l : s.data().trade_links) CHECK(l.cost == 0.08);
  for (const auto& p : s.data().prosumers) {
    if (p.dispatchable) {
      CHECK((p.dispatchable->lin_coeff.array() == 0.045).all());
      CHECK((p.dispatchable->quad_coeff.array() == 0.0).all());
    }
    if (p.storage) CHECK(p.storage->cost_coeff == 0.0);
  }
  const Vector db = s.pricing().price_coeff.cwiseProduct(s.passive_load());
  CHECK((db.array() - 0.1624).abs().maxCoeff() < 1e-12);
}

TEST_CASE("synthetic load library") {
  for (Archetype a : kArchetypes) {
    const Vector p = archetype_profile(a, 24, 1.0);
    CHECK(p.size() == 24);
    CHECK(p.minCoeff() > 0.0);
  }
  const Vector office = archetype_profile(Archetype::office, 24, 1.0);
  CHECK(office(12) > 2.0 * office(2));
  const Vector household = archetype_profile(Archetype::household, 24, 1.0);
  CHECK(household(19) > household(13));
  const Vector solar = solar_profile(24, 1.0, 5.0);
  CHECK(solar(3) == 0.0);
  CHECK(solar(22) == 0.0);
  CHECK(solar(12) == Approx(5.0));
  CHECK(solar.minCoeff() >= 0.0);
}

TEST_CASE("random trading graph") {
  CHECK(random_trading_graph(6, 1.0, 1).size() == 15);
  CHECK(random_trading_graph(50, 0.6, 1).size() == 735);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto e = random_trading_graph(12, 0.2, seed);
    CHECK(connected(12, e));
    for (auto [a, b] : e) CHECK(a < b);
  }
  try {
    random_trading_graph(10, 0.1, 1);
    FAIL("expected an error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("minimum is 0.2") != std::string::npos);
  }
  CHECK_THROWS_AS(random_trading_graph(1, 0.5, 1), ModelError);
}

TEST_CASE("scenario files round-trip") {
  const ScenarioData d = random_small_instance({}, 11);
  const auto path = scratch("round_trip.json");
  save_scenario(d, path.string());
  const Scenario back = load_scenario(path.string());
  CHECK(scenario_to_json(back.data()) == scenario_to_json(d));
  const ScenarioData big = builtin_ieee37_data(12, 5);
  save_scenario(big, path.string());
  CHECK(scenario_to_json(load_scenario(path.string()).data()) == scenario_to_json(big));
}

TEST_CASE("shipped feeder file") {
  const Scenario s = load_scenario(std::string(P2PM_DATA_DIR) + "/ieee37.json");
  CHECK(s.num_buses() == 37);
  CHECK(s.num_prosumers() == 12);
}

TEST_CASE("schema violations name the field") {
  nlohmann::json doc = scenario_to_json(random_small_instance({}, 2));
  auto expect_error = [](const nlohmann::json& bad, const std::string& fragment) {
    try {
      const Scenario s(scenario_data_from_json(bad));
      FAIL("expected a schema error");
    } catch (const ModelError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  {
    nlohmann::json bad = doc;
    bad["prosumers"][0]["dispatchable"]["p_min"] = 9.0;
    bad["prosumers"][0]["dispatchable"]["p_max"] = 1.0;
    expect_error(bad, "p_min");
  }
  {
    nlohmann::json bad = doc;
    bad["prosumers"][1]["colour"] = "red";
    expect_error(bad, "prosumers[1]");
  }
  {
    nlohmann::json bad = doc;
    bad["pricing"]["tariff"] = "cheap";
    expect_error(bad, "pricing.tariff");
  }
  {
    nlohmann::json bad = doc;
    bad["prosumers"][0]["demand"] = nlohmann::json::array({1.0, 2.0, 3.0});
    expect_error(bad, "prosumers[0].demand");
  }
  {
    nlohmann::json bad = doc;
    bad["version"] = 99;
    expect_error(bad, "version");
  }
  const auto path = scratch("broken.json");
  std::ofstream(path) << "{ \"version\": 1, ";
  CHECK_THROWS_AS(load_scenario(path.string()), SchemaError);
}

TEST_CASE("scalar series broadcast over the horizon") {
  nlohmann::json doc = scenario_to_json(random_small_instance({}, 2));
  doc["prosumers"][0]["demand"] = 2.5;
  const ScenarioData d = scenario_data_from_json(doc);
  CHECK(d.prosumers[0].demand.size() == d.time.horizon);
  CHECK((d.prosumers[0].demand.array() == 2.5).all());
}

TEST_CASE("experiment specs") {
  const ExperimentSpec s = ExperimentSpec::from_json({{"experiment", "scalability"}, {"replications", 2}});
  CHECK(s.kind == ExperimentKind::scalability);
  CHECK(s.population_grid == std::vector<int>{5, 10, 20, 40});
  CHECK(s.connectivity_grid.size() == 3);
  CHECK(ExperimentSpec::from_json(s.to_json()).to_json() == s.to_json());
  CHECK_THROWS_AS(ExperimentSpec::from_json({{"experiment", "nope"}}), ModelError);
  CHECK_THROWS_AS(ExperimentSpec::from_json({{"experiment", "scalability"}, {"typo", 1}}), ModelError);
  CHECK_THROWS_AS(ExperimentSpec::from_json({{"experiment", "scalability"}, {"population_grid", nlohmann::json::array()}}),
                  ModelError);
  CHECK_THROWS_AS(ExperimentSpec::from_json({{"experiment", "price_sweep"}, {"tariff_grid", nlohmann::json::array()}}),
                  ModelError);
  CHECK_THROWS_AS(ExperimentSpec::from_json({{"experiment", "line_safety"}, {"replications", 0}}), ModelError);
}

TEST_CASE("experiment tables are reproducible") {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::scalability;
  spec.prosumers = 3;
  spec.horizon = 2;
  spec.population_grid = {2, 3};
  spec.connectivity = 1.0;
  spec.max_iter = 3000;
  spec.workers = 2;
  const ExperimentResult a = run_experiment(spec);
  spec.workers = 1;
  const ExperimentResult b = run_experiment(spec);
  REQUIRE(a.tables.size() == 1);
  CHECK(a.tables[0].csv() == b.tables[0].csv());
  CHECK(a.tables[0].rows.size() == 2);
  CHECK(a.tables[0].columns.front() == "prosumers");

  const auto dir = scratch("experiment_out");
  write_experiment_outputs(a, dir.string());
  CHECK(slurp(dir / "iterations.csv") == a.tables[0].csv());
  CHECK(nlohmann::json::parse(slurp(dir / "summary.json")).contains("population_growth_factor"));
}

TEST_CASE("trading benefit deltas match the oracle on a small feeder") {
  ExperimentSpec spec;
  spec.kind = ExperimentKind::trading_benefit;
  spec.prosumers = 5;
  spec.horizon = 2;
  spec.max_iter = 60000;
  spec.tol = 1e-6;
  const ExperimentResult r = run_experiment(spec);
  CHECK(r.summary.at("all_converged") == true);

  Ieee37Options opt;
  opt.horizon = 2;
  opt.sampling_hours = 12.0;
  ScenarioData with = builtin_ieee37_data(5, spec.seed, opt);
  ScenarioData without = with;
  for (auto& link : without.trade_links) link.capacity = 0.0;
  const VgneSolution a = solve_vgne(Scenario(with));
  const VgneSolution b = solve_vgne(Scenario(without));

  const Table& costs = r.tables.at(0);
  REQUIRE(costs.name == "costs");
  REQUIRE(costs.rows.size() == 5);
  int worse = 0;
  for (int i = 0; i < 5; ++i) {
    const double delta = std::stod(costs.rows[i][4]);
    CHECK(std::abs(delta - (a.costs[i] - b.costs[i])) <= 1e-3);
    if (delta > 1e-4) ++worse;
  }
  CHECK(r.summary.at("prosumers_worse_off") == worse);
}

TEST_CASE("table rows must match the header") {
  Table t{"t", {"a", "b"}, {}};
  t.add({"1", "2"});
  CHECK_THROWS_AS(t.add({"1"}), ModelError);
  CHECK(t.csv() == "a,b\n1,2\n");
}
