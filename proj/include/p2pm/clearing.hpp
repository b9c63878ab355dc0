#pragma once

#include "p2pm/model.hpp"
#include "p2pm/projection.hpp"
#include "p2pm/qp_solver.hpp"
#include "p2pm/updates.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace p2pm {

struct ClearingConfig {
  int max_iter = 5000;
  double tol_primal = 1e-4;
  double tol_coupling = 1e-4;
  GameMode mode = GameMode::gne;
  double step_safety = 0.9;
  /// Recorded in the report; the loop itself draws no random numbers.
  std::uint64_t seed = 0;
  int trace_stride = 1;
  /// Worker threads for the prosumer updates; 0 picks the hardware count.
  int workers = 0;
  /// Overrides default_step_sizes when set.
  std::optional<StepSizes> steps;
  QpSettings qp;
  DrsConfig drs;
  /// Seed each projection with the previous governing sequence.
  bool drs_warm_start = true;

  /// Configuration taken from the scenario's stored algorithm defaults.
  static ClearingConfig from_scenario(const Scenario& s);
};

struct TraceRow {
  int iter = 0;
  double primal_change = 0.0;
  CouplingResiduals coupling;
  double total_cost = 0.0;
  std::vector<double> costs;
  /// Inner projection iterations spent in this outer iteration.
  int drs_iterations = 0;
};

struct DualSnapshot {
  /// Per prosumer, keyed by neighbor index.
  std::vector<std::map<int, Vector>> mu_tr;
  Vector lambda_mg;
  Vector mu_tg;
  Matrix mu_pb;
};

enum class ClearingStatus { converged, max_iter };

std::string to_string(ClearingStatus status);

struct ClearingReport {
  Profile profile;
  DualSnapshot duals;
  ClearingStatus status = ClearingStatus::max_iter;
  int iterations = 0;
  double primal_change = 0.0;
  CouplingResiduals coupling;
  std::vector<double> costs;
  std::vector<TraceRow> trace;
  StepSizes steps;
  ClearingConfig config;
  long long drs_iterations = 0;
  double wall_seconds = 0.0;

  bool converged() const { return status == ClearingStatus::converged; }
};

struct IterationResiduals {
  double primal_change = 0.0;
  CouplingResiduals coupling;
};

IterationResiduals residuals(const Profile& profile, const Profile& previous, const Scenario& s);

ClearingReport run_clearing(const Scenario& s, const ClearingConfig& cfg);

/// Columns: iter, primal_change, recip_res, agg_res, bus_res, tg_res, total_cost.
std::string trace_csv(const ClearingReport& report);
/// Keys prosumers, grid and duals; trades and mu_tr are keyed by prosumer id.
nlohmann::json profile_to_json(const Profile& profile, const DualSnapshot& duals, const std::vector<double>& costs,
                               const Scenario& s);
nlohmann::json report_to_json(const ClearingReport& report, const Scenario& s);
void write_clearing_outputs(const ClearingReport& report, const Scenario& s, const std::string& dir);

}  // namespace p2pm
