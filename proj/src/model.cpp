#include "p2pm/model.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <set>

namespace p2pm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ModelError(what);
}

double box_violation(const Vector& x, double lo, double hi) {
  if (x.size() == 0) return 0.0;
  return std::max({0.0, (lo - x.array()).maxCoeff(), (x.array() - hi).maxCoeff()});
}

double inf_norm(const Vector& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

}  // namespace

std::string to_string(GameMode mode) { return mode == GameMode::gne ? "gne" : "wardrop"; }

GameMode parse_game_mode(const std::string& s) {
  if (s == "gne") return GameMode::gne;
  if (s == "wardrop") return GameMode::wardrop;
  throw ModelError("unknown mode '" + s + "' (expected gne or wardrop)");
}

Vector flatten(const GridDecision& g) {
  const Eigen::Index n = g.theta.size() + g.v.size() + g.p_tg.size() + g.p_l.size() + g.q_l.size();
  Vector x(n);
  Eigen::Index off = 0;
  for (const auto* block : {&g.theta, &g.v, &g.p_tg, &g.p_l, &g.q_l}) {
    x.segment(off, block->size()) = block->reshaped();
    off += block->size();
  }
  return x;
}

GridDecision unflatten_grid(const Vector& x, int buses, int arcs, int horizon) {
  GridDecision g = GridDecision::zeros(buses, arcs / 2, horizon);
  if (x.size() != 3 * buses * horizon + 2 * arcs * horizon)
    throw ModelError("unflatten_grid: size mismatch");
  Eigen::Index off = 0;
  for (auto* block : {&g.theta, &g.v, &g.p_tg, &g.p_l, &g.q_l}) {
    block->reshaped() = x.segment(off, block->size());
    off += block->size();
  }
  return g;
}

double max_abs_difference(const ProsumerDecision& a, const ProsumerDecision& b) {
  double m = std::max({inf_norm(a.p_di - b.p_di), inf_norm(a.p_ch - b.p_ch),
                       inf_norm(a.p_ds - b.p_ds), inf_norm(a.p_mg - b.p_mg)});
  for (const auto& [j, t] : a.p_tr) m = std::max(m, inf_norm(t - b.p_tr.at(j)));
  return m;
}

double max_abs_difference(const Profile& a, const Profile& b) {
  double m = max_abs(a.grid - b.grid);
  for (std::size_t i = 0; i < a.prosumers.size(); ++i)
    m = std::max(m, max_abs_difference(a.prosumers[i], b.prosumers[i]));
  return m;
}

Scenario::Scenario(ScenarioData data) : data_(std::move(data)) {
  const int H = data_.time.horizon;
  require(H >= 1, "time.horizon must be >= 1");
  require(data_.time.sampling_hours > 0.0, "time.sampling_hours must be > 0");

  require(!data_.buses.empty(), "scenario needs at least one bus");
  bool any_grid = false;
  for (std::size_t y = 0; y < data_.buses.size(); ++y) {
    const Bus& b = data_.buses[y];
    require(bus_index_.emplace(b.id, static_cast<int>(y)).second, "duplicate bus id " + std::to_string(b.id));
    require(b.theta_min <= b.theta_max, "bus " + std::to_string(b.id) + ": theta_min > theta_max");
    require(b.v_min <= b.v_max, "bus " + std::to_string(b.id) + ": v_min > v_max");
    any_grid = any_grid || b.grid_connected;
  }
  require(any_grid, "at least one bus must be grid connected");
  require(data_.buses[0].theta_min == 0.0 && data_.buses[0].theta_max == 0.0,
          "the first bus is the reference bus and needs theta_min = theta_max = 0");

  const int B = num_buses();
  arcs_from_.assign(B, {});
  std::set<std::pair<int, int>> seen_lines;
  for (std::size_t l = 0; l < data_.lines.size(); ++l) {
    const Line& ln = data_.lines[l];
    const int y = bus_index(ln.from);
    const int z = bus_index(ln.to);
    require(y != z, "line connects a bus to itself");
    require(seen_lines.emplace(std::min(y, z), std::max(y, z)).second, "duplicate line");
    require(ln.capacity > 0.0, "line capacity must be > 0");
    const int a = static_cast<int>(2 * l);
    arc_tail_.push_back(y);
    arc_head_.push_back(z);
    arc_tail_.push_back(z);
    arc_head_.push_back(y);
    arcs_from_[y].push_back(a);
    arcs_from_[z].push_back(a + 1);
  }
  {
    std::vector<bool> reached(B, false);
    std::queue<int> frontier;
    frontier.push(0);
    reached[0] = true;
    while (!frontier.empty()) {
      const int y = frontier.front();
      frontier.pop();
      for (int a : arcs_from_[y]) {
        const int z = arc_head_[a];
        if (!reached[z]) {
          reached[z] = true;
          frontier.push(z);
        }
      }
    }
    require(std::all_of(reached.begin(), reached.end(), [](bool r) { return r; }),
            "physical network is not connected");
  }

  const int N = num_prosumers();
  prosumer_bus_.resize(N);
  prosumers_at_bus_.assign(B, {});
  for (int i = 0; i < N; ++i) {
    const Prosumer& p = data_.prosumers[i];
    const std::string who = "prosumer " + std::to_string(p.id);
    require(prosumer_index_.emplace(p.id, i).second, "duplicate prosumer id " + std::to_string(p.id));
    require(p.demand.size() == H, who + ": demand length must equal horizon");
    prosumer_bus_[i] = bus_index(p.bus_id);
    prosumers_at_bus_[prosumer_bus_[i]].push_back(i);
    if (p.dispatchable) {
      const auto& u = *p.dispatchable;
      require(u.quad_coeff.size() == H && u.lin_coeff.size() == H, who + ": dispatchable coefficient length");
      require(u.p_min >= 0.0 && u.p_min < u.p_max, who + ": need 0 <= p_min < p_max");
      require((u.quad_coeff.array() >= 0.0).all(), who + ": quad_coeff must be >= 0");
    }
    if (p.storage) {
      const auto& st = *p.storage;
      auto in_unit = [](double e) { return e > 0.0 && e <= 1.0; };
      require(st.cost_coeff >= 0.0, who + ": storage cost_coeff must be >= 0");
      require(st.capacity > 0.0, who + ": storage capacity must be > 0");
      require(in_unit(st.leakage) && in_unit(st.charge_eff) && in_unit(st.discharge_eff),
              who + ": storage efficiencies must lie in (0, 1]");
      require(0.0 <= st.soc_min && st.soc_min <= st.soc_max && st.soc_max <= 1.0,
              who + ": need 0 <= soc_min <= soc_max <= 1");
      require(st.soc_min <= st.soc_init && st.soc_init <= st.soc_max, who + ": soc_init outside [soc_min, soc_max]");
      require(st.p_ch_max >= 0.0 && st.p_ds_max >= 0.0, who + ": storage power limits must be >= 0");
    }
  }

  neighbors_.assign(N, {});
  for (std::size_t k = 0; k < data_.trade_links.size(); ++k) {
    const TradeLink& tl = data_.trade_links[k];
    const int i = prosumer_index(tl.i);
    const int j = prosumer_index(tl.j);
    require(i != j, "trade link connects a prosumer to itself");
    require(tl.cost >= 0.0 && tl.capacity >= 0.0, "trade link cost and capacity must be >= 0");
    require(link_lookup_.emplace(std::pair{std::min(i, j), std::max(i, j)}, static_cast<int>(k)).second,
            "duplicate trade link");
    neighbors_[i].push_back(j);
    neighbors_[j].push_back(i);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());

  passive_load_ = Vector::Zero(H);
  passive_bus_demand_ = Matrix::Zero(B, H);
  for (const auto& pc : data_.passive_consumers) {
    require(pc.demand.size() == H, "passive consumer demand length must equal horizon");
    passive_bus_demand_.row(bus_index(pc.bus_id)) += pc.demand.transpose();
    passive_load_ += pc.demand;
  }

  const GridPricing& pr = data_.pricing;
  require(pr.price_coeff.size() == H, "pricing.price_coeff length must equal horizon");
  require((pr.price_coeff.array() > 0.0).all(), "pricing.price_coeff entries must be > 0");
  require(pr.tariff >= 0.0, "pricing.tariff must be >= 0");
  require(pr.agg_min >= 0.0 && pr.agg_max > pr.agg_min, "pricing needs agg_max > agg_min >= 0");

  const AlgorithmDefaults& d = data_.defaults;
  require(d.step_safety > 0.0 && d.step_safety < 1.0, "step_safety must lie in (0, 1)");
  require(d.tol_primal > 0.0 && d.tol_coupling > 0.0, "tolerances must be > 0");
  require(d.max_iter >= 1, "max_iter must be >= 1");
}

int Scenario::link_index(int i, int j) const {
  auto it = link_lookup_.find({std::min(i, j), std::max(i, j)});
  if (it == link_lookup_.end())
    throw ModelError("no trade link between prosumers " + std::to_string(i) + " and " + std::to_string(j));
  return it->second;
}

int Scenario::bus_index(int bus_id) const {
  auto it = bus_index_.find(bus_id);
  if (it == bus_index_.end()) throw ModelError("unknown bus id " + std::to_string(bus_id));
  return it->second;
}

int Scenario::prosumer_index(int prosumer_id) const {
  auto it = prosumer_index_.find(prosumer_id);
  if (it == prosumer_index_.end()) throw ModelError("unknown prosumer id " + std::to_string(prosumer_id));
  return it->second;
}

std::map<int, TradeTerms> trade_terms(const Scenario& s, int i) {
  std::map<int, TradeTerms> terms;
  for (int j : s.neighbors(i)) {
    const TradeLink& tl = s.link(i, j);
    terms.emplace(j, TradeTerms{tl.cost, tl.capacity});
  }
  return terms;
}

ProsumerDecision cost_gradient(int i, const std::vector<ProsumerDecision>& prosumers, const Scenario& s) {
  const int H = s.horizon();
  const auto& d = prosumers[i];
  const auto& pr = s.prosumer(i);
  ProsumerDecision g = ProsumerDecision::zeros(H, s.neighbors(i));
  if (pr.dispatchable)
    g.p_di = 2.0 * pr.dispatchable->quad_coeff.cwiseProduct(d.p_di) + pr.dispatchable->lin_coeff;
  if (pr.storage) {
    g.p_ch = 2.0 * pr.storage->cost_coeff * d.p_ch;
    g.p_ds = 2.0 * pr.storage->cost_coeff * d.p_ds;
  }
  const Vector sigma = aggregate_grid_load(prosumers, H);
  const Vector& dm = s.pricing().price_coeff;
  g.p_mg = dm.cwiseProduct(sigma + s.passive_load()) + dm.cwiseProduct(d.p_mg);
  const double tariff = s.pricing().tariff;
  for (const auto& [j, t] : d.p_tr) {
    const double c = s.link(i, j).cost;
    g.p_tr[j] = t.unaryExpr([&](double x) { return c + tariff * static_cast<double>((x > 0) - (x < 0)); });
  }
  return g;
}

Vector soc_trajectory(const StorageUnit& unit, const Vector& p_ch, const Vector& p_ds, const TimeGrid& time) {
  detail::require_length(p_ch.size(), time.horizon, "soc_trajectory");
  detail::require_length(p_ds.size(), time.horizon, "soc_trajectory");
  const double k = time.sampling_hours / unit.capacity;
  Vector x(time.horizon + 1);
  x(0) = unit.soc_init;
  for (int h = 0; h < time.horizon; ++h)
    x(h + 1) = unit.leakage * x(h) + k * (unit.charge_eff * p_ch(h) - p_ds(h) / unit.discharge_eff);
  return x;
}

Vector power_injection(int i, const ProsumerDecision& d, const Scenario& s) {
  return s.prosumer(i).demand - d.p_di - d.p_ds + d.p_ch;
}

LocalResiduals local_residuals(int i, const ProsumerDecision& d, const Scenario& s) {
  const auto& pr = s.prosumer(i);
  LocalResiduals r;
  Vector lhs = d.p_di + d.p_ds - d.p_ch + d.p_mg;
  for (const auto& [j, t] : d.p_tr) lhs += t;
  r.balance = inf_norm(lhs - pr.demand);

  double dev = pr.dispatchable ? box_violation(d.p_di, pr.dispatchable->p_min, pr.dispatchable->p_max)
                               : inf_norm(d.p_di);
  if (pr.storage) {
    dev = std::max({dev, box_violation(d.p_ch, 0.0, pr.storage->p_ch_max),
                    box_violation(d.p_ds, 0.0, pr.storage->p_ds_max)});
  } else {
    dev = std::max({dev, inf_norm(d.p_ch), inf_norm(d.p_ds)});
  }
  for (const auto& [j, t] : d.p_tr) {
    const double cap = s.link(i, j).capacity;
    dev = std::max(dev, box_violation(t, -cap, cap));
  }
  r.device_bounds = dev;

  if (pr.storage) {
    const Vector x = soc_trajectory(*pr.storage, d.p_ch, d.p_ds, s.data().time);
    r.soc_bounds = box_violation(x, pr.storage->soc_min, pr.storage->soc_max);
  }
  return r;
}

Matrix bus_balance_residual(const std::vector<ProsumerDecision>& prosumers, const GridDecision& grid,
                            const Scenario& s) {
  Matrix r = s.passive_bus_demand() - grid.p_tg;
  for (int i = 0; i < s.num_prosumers(); ++i)
    r.row(s.prosumer_bus(i)) += power_injection(i, prosumers[i], s).transpose();
  for (int y = 0; y < s.num_buses(); ++y)
    for (int a : s.arcs_from(y)) r.row(y) -= grid.p_l.row(a);
  return r;
}

Matrix bus_balance_residual(const Profile& profile, const Scenario& s) {
  return bus_balance_residual(profile.prosumers, profile.grid, s);
}

CouplingResiduals coupling_residuals(const Profile& profile, const Scenario& s) {
  CouplingResiduals r;
  for (const TradeLink& tl : s.data().trade_links) {
    const int i = s.prosumer_index(tl.i);
    const int j = s.prosumer_index(tl.j);
    r.reciprocity = std::max(r.reciprocity,
                             inf_norm(profile.prosumers[i].p_tr.at(j) + profile.prosumers[j].p_tr.at(i)));
  }
  const Vector load = aggregate_grid_load(profile.prosumers, s.horizon()) + s.passive_load();
  r.aggregate = box_violation(load, s.pricing().agg_min, s.pricing().agg_max);
  const Matrix bus = bus_balance_residual(profile, s);
  r.bus_balance = bus.size() == 0 ? 0.0 : bus.cwiseAbs().maxCoeff();
  r.grid_exchange = inf_norm(load - profile.grid.p_tg.colwise().sum().transpose());
  return r;
}

GridResiduals grid_residuals(const GridDecision& g, const Scenario& s) {
  GridResiduals r;
  for (int a = 0; a < s.num_arcs(); ++a) {
    const Line& ln = s.line(s.arc_line(a));
    const int y = s.arc_tail(a);
    const int z = s.arc_head(a);
    const Eigen::RowVectorXd dth = g.theta.row(y) - g.theta.row(z);
    const Eigen::RowVectorXd dv = g.v.row(y) - g.v.row(z);
    const Eigen::RowVectorXd rp = g.p_l.row(a) - (ln.susceptance * dth - ln.conductance * dv);
    const Eigen::RowVectorXd rq = g.q_l.row(a) - (ln.conductance * dth + ln.susceptance * dv);
    r.flow = std::max({r.flow, rp.cwiseAbs().maxCoeff(), rq.cwiseAbs().maxCoeff()});
    if (s.defaults().enforce_line_limits) {
      const Eigen::RowVectorXd mag = (g.p_l.row(a).array().square() + g.q_l.row(a).array().square()).sqrt();
      r.line_capacity = std::max(r.line_capacity, (mag.array() - ln.capacity).maxCoeff());
    }
  }
  for (int y = 0; y < s.num_buses(); ++y) {
    const Bus& b = s.bus(y);
    r.bounds = std::max({r.bounds, box_violation(g.theta.row(y).transpose(), b.theta_min, b.theta_max),
                         box_violation(g.v.row(y).transpose(), b.v_min, b.v_max)});
    if (!b.grid_connected) r.exchange_pattern = std::max(r.exchange_pattern, inf_norm(g.p_tg.row(y).transpose()));
  }
  r.line_capacity = std::max(r.line_capacity, 0.0);
  return r;
}

Vector line_saturation(const GridDecision& g, const Scenario& s) {
  Vector sat = Vector::Zero(s.num_lines());
  for (int a = 0; a < s.num_arcs(); ++a) {
    const int l = s.arc_line(a);
    const double mag = (g.p_l.row(a).array().square() + g.q_l.row(a).array().square()).sqrt().maxCoeff();
    sat(l) = std::max(sat(l), mag / s.line(l).capacity);
  }
  return sat;
}

double max_line_saturation(const GridDecision& g, const Scenario& s) {
  const Vector sat = line_saturation(g, s);
  return sat.size() == 0 ? 0.0 : sat.maxCoeff();
}

Profile zero_profile(const Scenario& s) {
  Profile p;
  for (int i = 0; i < s.num_prosumers(); ++i)
    p.prosumers.push_back(ProsumerDecision::zeros(s.horizon(), s.neighbors(i)));
  p.grid = GridDecision::zeros(s.num_buses(), s.num_lines(), s.horizon());
  return p;
}

}  // namespace p2pm
