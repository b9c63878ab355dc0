#pragma once

#include "p2pm/model.hpp"
#include "p2pm/qp_solver.hpp"

#include <json.hpp>

#include <map>
#include <vector>

namespace p2pm {

/// Exact potential of the game over the joint feasible set, stacked as one
/// QP. Variables: per prosumer [p_di, p_ch, p_ds, p_mg, trades by neighbor,
/// SoC if storage], then the grid decision in flatten() order, then the
/// auxiliary aggregate s = sigma + b. Trade absolute values are kept as
/// separate terms.
struct PotentialProblem {
  QpProblem qp;
  std::vector<AbsTerm> abs_terms;
  std::vector<int> prosumer_offset;
  std::vector<int> prosumer_size;
  int grid_offset = 0;
  int aux_offset = 0;
  int horizon = 0;
  /// Equality row blocks.
  int reciprocity_row = 0;
  int aggregate_row = 0;
  int exchange_row = 0;
  int bus_row = 0;
  int flow_row = 0;

  Vector pack(const Profile& profile, const Scenario& s) const;
  Profile unpack(const Vector& x, const Scenario& s) const;
  /// Potential value 0.5 x'Px + q'x + sum of absolute-value terms.
  double value(const Vector& x) const;
};

PotentialProblem build_potential(const Scenario& s);

/// P(u) = sum_i g_i(u_i) + 1/2 sum_h d_h (sigma_h^2 + sum_i p^mg_ih^2), where
/// g_i holds the device, trade and d b p^mg terms.
double potential_value(const std::vector<ProsumerDecision>& prosumers, const Scenario& s);
/// Gradient of the potential with respect to each u_i, read off the stacked
/// QP data; |t| contributes sign(t) with sign(0) = 0.
std::vector<ProsumerDecision> potential_gradient(const std::vector<ProsumerDecision>& prosumers, const Scenario& s);

struct VgneSolution {
  Profile profile;
  std::vector<std::map<int, Vector>> mu_tr;
  Vector lambda_mg;
  Vector mu_tg;
  Matrix mu_pb;
  std::vector<double> costs;
  QpSolution qp;
};

QpSettings default_oracle_settings();

/// Minimizes the potential over the joint feasible set. Throws InfeasibleError
/// when the solver certifies infeasibility and NumericalError when it stalls.
VgneSolution solve_vgne(const Scenario& s, const QpSettings& settings = default_oracle_settings());

struct ComparisonReport {
  double p_di = 0.0;
  double p_ch = 0.0;
  double p_ds = 0.0;
  double p_mg = 0.0;
  double p_tr = 0.0;
  double theta = 0.0;
  double v = 0.0;
  double p_tg = 0.0;
  double p_l = 0.0;
  double q_l = 0.0;
  std::vector<double> cost_gap;

  /// Largest distance over the power components that are unique at a
  /// strictly convex equilibrium: prosumer variables, p_tg and p_l.
  double power_distance() const;
  double max_cost_gap() const;
};

ComparisonReport compare(const Profile& a, const Profile& b, const Scenario& s);

/// Same layout as the clearing report's profile section.
nlohmann::json oracle_to_json(const VgneSolution& sol, const Scenario& s);
/// Compares two report documents (clearing or oracle) without the scenario.
/// Cost gaps use the costs stored in each report.
ComparisonReport compare_reports(const nlohmann::json& a, const nlohmann::json& b);
nlohmann::json to_json(const ComparisonReport& r);

}  // namespace p2pm
