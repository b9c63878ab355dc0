#pragma once

#include "p2pm/clearing.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace p2pm {

enum class ExperimentKind { line_safety, trading_benefit, storage_impact, scalability, price_sweep };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& s);

/// Parameter grid of one experiment. Fields a given experiment does not use
/// are ignored.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::trading_benefit;
  std::uint64_t seed = 1;
  int replications = 1;
  int prosumers = 12;
  int horizon = 24;
  double connectivity = 0.6;
  double trade_capacity = 30.0;
  /// Scalability: population grid at `connectivity`, and connectivity grid
  /// at `prosumers`.
  std::vector<int> population_grid;
  std::vector<double> connectivity_grid;
  /// Price sweep: trading cost and tariff grids.
  std::vector<double> trade_cost_grid;
  std::vector<double> tariff_grid;
  std::optional<int> max_iter;
  std::optional<double> tol;
  /// Grid cells evaluated concurrently.
  int workers = 1;

  void validate() const;
  static ExperimentSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

ExperimentSpec load_experiment_spec(const std::string& path);

/// Rectangular result table; cells are preformatted so CSV output is exact.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string csv() const;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<Table> tables;
  nlohmann::json summary;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes <table>.csv for every table plus summary.json into dir.
void write_experiment_outputs(const ExperimentResult& result, const std::string& dir);

/// Per-hour sum over links of |p_ij|, in kW.
Vector traded_power(const Profile& profile, const Scenario& s);
/// c^tr + c^ta + mean over links of mu^tr, per hour (mean link cost when
/// links differ).
Vector average_trading_price(const DualSnapshot& duals, const Scenario& s);

}  // namespace p2pm
