#include "p2pm/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace p2pm {

namespace {

double bump(double t, double center, double width) {
  double d = std::fmod(std::abs(t - center), 24.0);
  d = std::min(d, 24.0 - d);
  return std::exp(-(d / width) * (d / width));
}

double plateau(double t, double start, double end) {
  return 1.0 / (1.0 + std::exp(-2.0 * (t - start))) / (1.0 + std::exp(2.0 * (t - end)));
}

double archetype_at(Archetype kind, double t) {
  switch (kind) {
    case Archetype::household: return 0.4 + 0.6 * bump(t, 7.5, 1.2) + 1.6 * bump(t, 19.5, 2.0);
    case Archetype::multi_household: return 4.0 * archetype_at(Archetype::household, t);
    case Archetype::restaurant: return 1.0 + 4.0 * bump(t, 12.5, 1.3) + 5.0 * bump(t, 19.5, 1.6);
    case Archetype::office: return 1.5 + 6.0 * plateau(t, 8.0, 18.0);
    case Archetype::hospital: return 12.0 + 4.0 * bump(t, 12.0, 4.0);
    case Archetype::school: return 1.0 + 8.0 * plateau(t, 8.0, 15.0);
  }
  return 0.0;
}

Vector constant(int horizon, double value) { return Vector::Constant(horizon, value); }

Vector price_from_passive(const ScenarioData& d) {
  Vector b = Vector::Zero(d.time.horizon);
  for (const auto& pc : d.passive_consumers) b += pc.demand;
  return (0.1624 / b.array()).matrix();
}

DispatchableUnit dispatchable(int horizon, double quad, double lin, double p_max) {
  return {constant(horizon, quad), constant(horizon, lin), 0.0, p_max};
}

StorageUnit storage(double cost, double capacity) {
  StorageUnit st;
  st.cost_coeff = cost;
  st.capacity = capacity;
  st.leakage = 0.99;
  st.charge_eff = 0.95;
  st.discharge_eff = 0.95;
  st.soc_min = 0.1;
  st.soc_max = 0.9;
  st.p_ch_max = capacity / 4.0;
  st.p_ds_max = capacity / 4.0;
  st.soc_init = 0.5;
  return st;
}

void finish_pricing(ScenarioData& d, double tariff) {
  d.pricing.price_coeff = price_from_passive(d);
  d.pricing.tariff = tariff;
  double peak = 0.0;
  Vector total = Vector::Zero(d.time.horizon);
  for (const auto& pc : d.passive_consumers) total += pc.demand;
  for (const auto& p : d.prosumers) total += p.demand.cwiseMax(0.0);
  peak = total.maxCoeff();
  d.pricing.agg_min = 0.0;
  d.pricing.agg_max = 2.0 * peak + 10.0;
}

}  // namespace

Vector archetype_profile(Archetype kind, int horizon, double sampling_hours) {
  Vector p(horizon);
  for (int h = 0; h < horizon; ++h) p(h) = archetype_at(kind, std::fmod(h * sampling_hours, 24.0));
  return p;
}

Vector solar_profile(int horizon, double sampling_hours, double peak_kw) {
  Vector p(horizon);
  for (int h = 0; h < horizon; ++h) {
    const double t = std::fmod(h * sampling_hours, 24.0);
    p(h) = (t > 6.0 && t < 18.0) ? peak_kw * std::sin(std::numbers::pi * (t - 6.0) / 12.0) : 0.0;
  }
  return p;
}

std::vector<std::pair<int, int>> random_trading_graph(int n, double connectivity, std::uint64_t seed) {
  if (n < 2) throw ModelError("random_trading_graph: need n >= 2");
  if (!(connectivity > 0.0 && connectivity <= 1.0)) throw ModelError("random_trading_graph: connectivity must lie in (0, 1]");
  const long long total = static_cast<long long>(n) * (n - 1) / 2;
  const long long edges = std::llround(connectivity * static_cast<double>(total));
  if (edges < n - 1) {
    const double minimum = static_cast<double>(n - 1) / static_cast<double>(total);
    throw ModelError("random_trading_graph: connectivity too low to connect " + std::to_string(n) +
                     " vertices; minimum is " + std::to_string(minimum));
  }
  Rng rng(seed);
  std::vector<int> order(n);
  for (int k = 0; k < n; ++k) order[k] = k;
  for (int k = n - 1; k > 0; --k) std::swap(order[k], order[rng.index(k + 1)]);

  std::set<std::pair<int, int>> chosen;
  for (int k = 1; k < n; ++k) {
    const int a = order[k];
    const int b = order[rng.index(k)];
    chosen.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<std::pair<int, int>> rest;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!chosen.count({i, j})) rest.emplace_back(i, j);
  const long long extra = edges - (n - 1);
  for (long long k = 0; k < extra; ++k) {
    const int pick = static_cast<int>(k) + rng.index(static_cast<int>(rest.size() - k));
    std::swap(rest[k], rest[pick]);
    chosen.insert(rest[k]);
  }
  return {chosen.begin(), chosen.end()};
}

const std::vector<int>& ieee37_bus_ids() {
  static const std::vector<int> ids = {799, 701, 702, 703, 704, 705, 706, 707, 708, 709, 710, 711, 712,
                                       713, 714, 718, 720, 722, 724, 725, 727, 728, 729, 730, 731, 732,
                                       733, 734, 735, 736, 737, 738, 740, 741, 742, 744, 775};
  return ids;
}

const std::vector<FeederSegment>& ieee37_segments() {
  static const std::vector<FeederSegment> segs = {
      {799, 701, 1850}, {701, 702, 960},  {702, 705, 400},  {702, 713, 360},  {702, 703, 1320},
      {703, 727, 240},  {703, 730, 600},  {704, 714, 80},   {704, 720, 800},  {705, 742, 320},
      {705, 712, 240},  {706, 725, 280},  {707, 724, 760},  {707, 722, 120},  {708, 733, 320},
      {708, 732, 320},  {709, 731, 600},  {709, 708, 320},  {710, 735, 200},  {710, 736, 1280},
      {711, 741, 400},  {711, 740, 200},  {713, 704, 520},  {714, 718, 520},  {720, 707, 920},
      {720, 706, 600},  {727, 744, 280},  {730, 709, 200},  {733, 734, 560},  {734, 737, 640},
      {734, 710, 520},  {737, 738, 400},  {738, 711, 400},  {744, 728, 200},  {744, 729, 280},
      {709, 775, 0}};
  return segs;
}

namespace {

std::vector<Bus> feeder_buses() {
  std::vector<Bus> buses;
  for (int id : ieee37_bus_ids()) {
    Bus b;
    b.id = id;
    b.theta_min = id == 799 ? 0.0 : -0.5;
    b.theta_max = id == 799 ? 0.0 : 0.5;
    b.v_min = 0.9;
    b.v_max = 1.1;
    b.grid_connected = id == 799;
    buses.push_back(b);
  }
  return buses;
}

std::vector<Line> feeder_lines(double capacity) {
  std::vector<Line> lines;
  for (const auto& seg : ieee37_segments()) {
    const double kft = std::max(seg.length_ft, 100.0) / 1000.0;
    Line ln;
    ln.from = seg.from;
    ln.to = seg.to;
    ln.susceptance = 2000.0 / kft;
    ln.conductance = 0.6 * ln.susceptance;
    ln.capacity = capacity;
    lines.push_back(ln);
  }
  return lines;
}

Prosumer random_prosumer(Rng& rng, int id, int bus_id, int horizon, double sampling_hours, double dispatchable_share,
                         double storage_share) {
  Prosumer p;
  p.id = id;
  p.bus_id = bus_id;
  const Archetype kind = kArchetypes[rng.index(6)];
  const Vector load = rng.uniform(0.8, 1.5) * archetype_profile(kind, horizon, sampling_hours);
  const double peak = load.maxCoeff();
  p.demand = load - solar_profile(horizon, sampling_hours, rng.uniform(0.2, 0.6) * peak);
  if (rng.uniform() < dispatchable_share)
    p.dispatchable = dispatchable(horizon, 0.0, 0.045, rng.uniform(0.3, 0.8) * peak + 1.0);
  if (rng.uniform() < storage_share) p.storage = storage(0.0, rng.uniform(10.0, 40.0));
  return p;
}

}  // namespace

ScenarioData builtin_ieee37_data(int n_prosumers, std::uint64_t seed, const Ieee37Options& opt) {
  if (n_prosumers < 1) throw ModelError("builtin_ieee37: need at least one prosumer");
  ScenarioData d;
  d.time = {opt.horizon, opt.sampling_hours};
  d.buses = feeder_buses();
  d.lines = feeder_lines(opt.line_capacity);
  Rng rng(seed);
  const auto& ids = ieee37_bus_ids();
  const int loads = static_cast<int>(ids.size()) - 1;
  for (int i = 0; i < n_prosumers; ++i) {
    const int bus = ids[1 + rng.index(loads)];
    d.prosumers.push_back(random_prosumer(rng, i + 1, bus, opt.horizon, opt.sampling_hours, opt.dispatchable_share,
                                          opt.storage_share));
  }
  bool has_dispatchable = false;
  for (const auto& p : d.prosumers) has_dispatchable = has_dispatchable || p.dispatchable.has_value();
  if (!has_dispatchable)
    d.prosumers[0].dispatchable = dispatchable(opt.horizon, 0.0, 0.045, d.prosumers[0].demand.maxCoeff() + 1.0);
  for (int k = 0; k < opt.passive_consumers; ++k) {
    PassiveConsumer pc;
    pc.bus_id = ids[1 + rng.index(loads)];
    const Archetype kind = rng.uniform() < 0.7 ? Archetype::household : Archetype::multi_household;
    pc.demand = rng.uniform(1.0, 3.0) * archetype_profile(kind, opt.horizon, opt.sampling_hours);
    d.passive_consumers.push_back(pc);
  }
  if (n_prosumers >= 2) {
    for (auto [i, j] : random_trading_graph(n_prosumers, opt.connectivity, rng.next()))
      d.trade_links.push_back({i + 1, j + 1, 0.08, opt.trade_capacity});
  }
  finish_pricing(d, 0.01);
  return d;
}

Scenario builtin_ieee37(int n_prosumers, std::uint64_t seed, const Ieee37Options& opt) {
  return Scenario(builtin_ieee37_data(n_prosumers, seed, opt));
}

ScenarioData random_small_instance(const SmallInstanceOptions& opt, std::uint64_t seed) {
  if (opt.prosumers < 1 || opt.horizon < 1) throw ModelError("random_small_instance: bad size");
  ScenarioData d;
  d.time = {opt.horizon, 24.0 / opt.horizon};
  for (int y = 0; y < 4; ++y) {
    Bus b;
    b.id = y + 1;
    b.theta_min = y == 0 ? 0.0 : -0.5;
    b.theta_max = y == 0 ? 0.0 : 0.5;
    b.v_min = 0.9;
    b.v_max = 1.1;
    b.grid_connected = y == 0;
    d.buses.push_back(b);
  }
  for (auto [from, to] : {std::pair{1, 2}, std::pair{2, 3}, std::pair{2, 4}})
    d.lines.push_back({from, to, 500.0, 300.0, opt.line_capacity});

  Rng rng(seed);
  const int H = opt.horizon;
  const double Ts = d.time.sampling_hours;
  for (int i = 0; i < opt.prosumers; ++i) {
    Prosumer p;
    p.id = i + 1;
    p.bus_id = 1 + rng.index(4);
    const Vector load = rng.uniform(0.8, 1.5) * archetype_profile(kArchetypes[rng.index(6)], H, Ts);
    p.demand = load - solar_profile(H, Ts, rng.uniform(0.2, 0.6) * load.maxCoeff());
    const bool gen = i == 0 || rng.uniform() < 0.5;
    const bool bat = i == opt.prosumers - 1 || rng.uniform() < 0.5;
    const double quad = opt.strictly_convex ? rng.uniform(0.005, 0.02) : 0.0;
    if (gen) p.dispatchable = dispatchable(H, quad, rng.uniform(0.03, 0.06), rng.uniform(2.0, 8.0));
    if (bat) {
      p.storage = storage(opt.strictly_convex ? rng.uniform(0.005, 0.02) : 0.0, rng.uniform(10.0, 30.0));
    }
    d.prosumers.push_back(p);
  }
  for (int k = 0; k < 2; ++k) {
    PassiveConsumer pc;
    pc.bus_id = 2 + rng.index(3);
    pc.demand = rng.uniform(1.0, 2.0) * archetype_profile(Archetype::household, H, Ts);
    d.passive_consumers.push_back(pc);
  }
  if (opt.prosumers >= 2) {
    std::vector<std::pair<int, int>> edges;
    if (opt.tree_trading) {
      for (int i = 1; i < opt.prosumers; ++i) edges.emplace_back(rng.index(i), i);
    } else {
      edges = random_trading_graph(opt.prosumers, opt.connectivity, rng.next());
    }
    for (auto [i, j] : edges) d.trade_links.push_back({i + 1, j + 1, 0.08, opt.trade_capacity});
  }
  finish_pricing(d, 0.01);
  return d;
}

ScenarioData line_safety_instance(std::uint64_t seed) {
  Ieee37Options opt;
  opt.line_capacity = 400.0;
  opt.connectivity = 0.3;
  ScenarioData d = builtin_ieee37_data(25, seed, opt);
  constexpr int kHeavy = 10;
  constexpr int kLeaf = 741;
  Prosumer& heavy = d.prosumers[kHeavy - 1];
  heavy.bus_id = kLeaf;
  heavy.demand = Vector::Constant(opt.horizon, 90.0) + 30.0 * archetype_profile(Archetype::office, opt.horizon, 1.0) / 7.5;
  heavy.dispatchable = dispatchable(opt.horizon, 0.0, 1.0, 150.0);
  heavy.storage.reset();
  for (auto& tl : d.trade_links)
    if (tl.i == heavy.id || tl.j == heavy.id) tl.capacity = 0.0;
  for (auto& ln : d.lines)
    if (ln.from == kLeaf || ln.to == kLeaf) ln.capacity = 40.0;
  finish_pricing(d, 0.01);
  return d;
}

}  // namespace p2pm
