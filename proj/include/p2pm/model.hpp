#pragma once

#include "p2pm/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace p2pm {

struct TimeGrid {
  int horizon = 24;
  double sampling_hours = 1.0;
};

/// Dispatchable generator. Coefficient vectors have length H after loading.
struct DispatchableUnit {
  Vector quad_coeff;
  Vector lin_coeff;
  double p_min = 0.0;
  double p_max = 0.0;
};

struct StorageUnit {
  double cost_coeff = 0.0;
  double capacity = 1.0;
  double leakage = 1.0;
  double charge_eff = 1.0;
  double discharge_eff = 1.0;
  double soc_min = 0.0;
  double soc_max = 1.0;
  double p_ch_max = 0.0;
  double p_ds_max = 0.0;
  double soc_init = 0.5;
};

struct Prosumer {
  int id = 0;
  int bus_id = 0;
  Vector demand;
  std::optional<DispatchableUnit> dispatchable;
  std::optional<StorageUnit> storage;
};

struct PassiveConsumer {
  int bus_id = 0;
  Vector demand;
};

/// Unordered trading pair between prosumer ids.
struct TradeLink {
  int i = 0;
  int j = 0;
  double cost = 0.0;
  double capacity = 0.0;
};

struct GridPricing {
  Vector price_coeff;
  double tariff = 0.0;
  double agg_min = 0.0;
  double agg_max = 0.0;
};

struct Bus {
  int id = 0;
  double theta_min = 0.0;
  double theta_max = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  bool grid_connected = false;
};

/// Unordered physical line between bus ids.
struct Line {
  int from = 0;
  int to = 0;
  double susceptance = 0.0;
  double conductance = 0.0;
  double capacity = 0.0;
};

enum class GameMode { gne, wardrop };

std::string to_string(GameMode mode);
GameMode parse_game_mode(const std::string& s);

/// Settings stored alongside a scenario; consumed by the clearing loop.
struct AlgorithmDefaults {
  GameMode mode = GameMode::gne;
  double step_safety = 0.9;
  double tol_primal = 1e-4;
  double tol_coupling = 1e-4;
  int max_iter = 5000;
  bool enforce_line_limits = true;
};

/// Raw, editable market description. Turn it into a Scenario to use it.
struct ScenarioData {
  TimeGrid time;
  std::vector<Prosumer> prosumers;
  std::vector<PassiveConsumer> passive_consumers;
  std::vector<TradeLink> trade_links;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  GridPricing pricing;
  AlgorithmDefaults defaults;
};

/// Validated, immutable market instance with index caches. Prosumers, buses
/// and lines are addressed by position; ids only matter for I/O.
class Scenario {
 public:
  explicit Scenario(ScenarioData data);

  const ScenarioData& data() const { return data_; }
  int horizon() const { return data_.time.horizon; }
  double sampling_hours() const { return data_.time.sampling_hours; }
  int num_prosumers() const { return static_cast<int>(data_.prosumers.size()); }
  int num_buses() const { return static_cast<int>(data_.buses.size()); }
  int num_lines() const { return static_cast<int>(data_.lines.size()); }
  int num_arcs() const { return 2 * num_lines(); }

  const Prosumer& prosumer(int i) const { return data_.prosumers[i]; }
  const Bus& bus(int y) const { return data_.buses[y]; }
  const Line& line(int l) const { return data_.lines[l]; }
  const GridPricing& pricing() const { return data_.pricing; }
  const AlgorithmDefaults& defaults() const { return data_.defaults; }

  /// Sorted neighbor indices of prosumer i.
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  /// Index into trade_links for the pair (i, j).
  int link_index(int i, int j) const;
  const TradeLink& link(int i, int j) const { return data_.trade_links[link_index(i, j)]; }
  int num_links() const { return static_cast<int>(data_.trade_links.size()); }

  int prosumer_bus(int i) const { return prosumer_bus_[i]; }
  const std::vector<int>& prosumers_at(int y) const { return prosumers_at_bus_[y]; }
  /// Outgoing arcs of bus y.
  const std::vector<int>& arcs_from(int y) const { return arcs_from_[y]; }
  int arc_tail(int a) const { return arc_tail_[a]; }
  int arc_head(int a) const { return arc_head_[a]; }
  int arc_line(int a) const { return a / 2; }

  /// Aggregate passive load b (length H).
  const Vector& passive_load() const { return passive_load_; }
  /// Passive demand per bus, (buses x H).
  const Matrix& passive_bus_demand() const { return passive_bus_demand_; }

  int bus_index(int bus_id) const;
  int prosumer_index(int prosumer_id) const;

 private:
  ScenarioData data_;
  std::vector<std::vector<int>> neighbors_;
  std::map<std::pair<int, int>, int> link_lookup_;
  std::vector<int> prosumer_bus_;
  std::vector<std::vector<int>> prosumers_at_bus_;
  std::vector<std::vector<int>> arcs_from_;
  std::vector<int> arc_tail_;
  std::vector<int> arc_head_;
  Vector passive_load_;
  Matrix passive_bus_demand_;
  std::map<int, int> bus_index_;
  std::map<int, int> prosumer_index_;
};

/// Default feasibility tolerance in kW / SoC fraction.
inline constexpr double kFeasibilityTol = 1e-6;

namespace detail {
inline void require_length(Eigen::Index n, int horizon, const char* what) {
  if (n != horizon) throw ModelError(std::string(what) + ": length mismatch");
}
}  // namespace detail

/// ||p||^2_Q + c^T p with diagonal Q.
template <typename Scalar>
Scalar eval_dispatch_cost(const VectorX<Scalar>& p_di, const DispatchableUnit& unit,
                          const TimeGrid& time) {
  detail::require_length(p_di.size(), time.horizon, "eval_dispatch_cost");
  detail::require_length(unit.quad_coeff.size(), time.horizon, "eval_dispatch_cost");
  detail::require_length(unit.lin_coeff.size(), time.horizon, "eval_dispatch_cost");
  const VectorX<Scalar> q = unit.quad_coeff.template cast<Scalar>();
  const VectorX<Scalar> c = unit.lin_coeff.template cast<Scalar>();
  return (q.array() * p_di.array().square()).sum() + c.dot(p_di);
}

template <typename Scalar>
Scalar eval_storage_cost(const VectorX<Scalar>& p_ch, const VectorX<Scalar>& p_ds,
                         const StorageUnit& unit) {
  if (p_ch.size() != p_ds.size()) throw ModelError("eval_storage_cost: length mismatch");
  return Scalar(unit.cost_coeff) * (p_ch.squaredNorm() + p_ds.squaredNorm());
}

/// Per-neighbor trading parameters as seen by one prosumer.
struct TradeTerms {
  double cost = 0.0;
  double capacity = 0.0;
};

template <typename Scalar>
Scalar eval_trade_cost(const std::map<int, VectorX<Scalar>>& trades,
                       const std::map<int, TradeTerms>& links, double tariff) {
  Scalar total(0);
  for (const auto& [j, p] : trades) {
    auto it = links.find(j);
    if (it == links.end()) throw ModelError("eval_trade_cost: no link parameters for neighbor " + std::to_string(j));
    total += Scalar(it->second.cost) * p.sum() + Scalar(tariff) * p.cwiseAbs().sum();
  }
  return total;
}

/// sum_h d_h (sigma_h + b_h) p_h, with sigma the full aggregate including p.
template <typename Scalar>
Scalar eval_grid_cost(const VectorX<Scalar>& p_mg, const VectorX<Scalar>& sigma,
                      const Vector& price_coeff, const Vector& passive_load) {
  if (p_mg.size() != sigma.size() || p_mg.size() != price_coeff.size() ||
      p_mg.size() != passive_load.size())
    throw ModelError("eval_grid_cost: length mismatch");
  const VectorX<Scalar> d = price_coeff.template cast<Scalar>();
  const VectorX<Scalar> b = passive_load.template cast<Scalar>();
  return (d.array() * (sigma + b).array() * p_mg.array()).sum();
}

std::map<int, TradeTerms> trade_terms(const Scenario& s, int i);

template <typename Scalar>
VectorX<Scalar> aggregate_grid_load(const std::vector<ProsumerDecisionT<Scalar>>& prosumers, int horizon) {
  VectorX<Scalar> sigma = VectorX<Scalar>::Zero(horizon);
  for (const auto& d : prosumers) sigma += d.p_mg;
  return sigma;
}

/// J_i of prosumer i given the full prosumer profile; i == N (the network
/// operator) always costs zero.
template <typename Scalar>
Scalar eval_total_cost(int i, const std::vector<ProsumerDecisionT<Scalar>>& prosumers,
                       const Scenario& s) {
  if (i == s.num_prosumers()) return Scalar(0);
  if (i < 0 || i > s.num_prosumers()) throw ModelError("eval_total_cost: bad agent index");
  if (static_cast<int>(prosumers.size()) != s.num_prosumers())
    throw ModelError("eval_total_cost: profile size mismatch");
  const auto& d = prosumers[i];
  const auto& pr = s.prosumer(i);
  Scalar cost(0);
  if (pr.dispatchable) cost += eval_dispatch_cost<Scalar>(d.p_di, *pr.dispatchable, s.data().time);
  if (pr.storage) cost += eval_storage_cost<Scalar>(d.p_ch, d.p_ds, *pr.storage);
  cost += eval_trade_cost<Scalar>(d.p_tr, trade_terms(s, i), s.pricing().tariff);
  const VectorX<Scalar> sigma = aggregate_grid_load(prosumers, s.horizon());
  cost += eval_grid_cost<Scalar>(d.p_mg, sigma, s.pricing().price_coeff, s.passive_load());
  return cost;
}

/// Partial gradient of J_i with respect to u_i (the pseudo-gradient block).
/// The absolute-value term uses sign(0) = 0.
ProsumerDecision cost_gradient(int i, const std::vector<ProsumerDecision>& prosumers, const Scenario& s);

/// SoC trajectory x_0 .. x_H.
Vector soc_trajectory(const StorageUnit& unit, const Vector& p_ch, const Vector& p_ds,
                      const TimeGrid& time);

/// eta_i = p^d - p^di - p^ds + p^ch.
Vector power_injection(int i, const ProsumerDecision& d, const Scenario& s);

struct LocalResiduals {
  double balance = 0.0;
  double device_bounds = 0.0;
  double soc_bounds = 0.0;
  double max() const { return std::max({balance, device_bounds, soc_bounds}); }
};

LocalResiduals local_residuals(int i, const ProsumerDecision& d, const Scenario& s);

struct CouplingResiduals {
  double reciprocity = 0.0;
  double aggregate = 0.0;
  double bus_balance = 0.0;
  double grid_exchange = 0.0;
  double max() const { return std::max({reciprocity, aggregate, bus_balance, grid_exchange}); }
};

CouplingResiduals coupling_residuals(const Profile& profile, const Scenario& s);

/// Bus balance residual per bus, (buses x H).
Matrix bus_balance_residual(const Profile& profile, const Scenario& s);
Matrix bus_balance_residual(const std::vector<ProsumerDecision>& prosumers, const GridDecision& grid,
                            const Scenario& s);

/// Grid-operator local residuals: flow equations, boxes, zero pattern, line disks.
struct GridResiduals {
  double flow = 0.0;
  double bounds = 0.0;
  double exchange_pattern = 0.0;
  double line_capacity = 0.0;
  double max() const { return std::max({flow, bounds, exchange_pattern, line_capacity}); }
};

GridResiduals grid_residuals(const GridDecision& g, const Scenario& s);

/// Largest ||(p, q)|| / s_bar over lines and steps, using the nominal capacities.
double max_line_saturation(const GridDecision& g, const Scenario& s);
/// Per-line maximum saturation over the horizon.
Vector line_saturation(const GridDecision& g, const Scenario& s);

Profile zero_profile(const Scenario& s);

}  // namespace p2pm
