#pragma once

#include "p2pm/generators.hpp"
#include "p2pm/model.hpp"
#include "p2pm/qp_solver.hpp"

#include <string>

namespace p2pm::test {

// Two buses (reference + load bus), one line, N device-free prosumers on bus 2.
inline ScenarioData bare_market(int N, int H, double demand = 0.0) {
  ScenarioData d;
  d.time = {H, 1.0};
  d.buses = {{1, 0.0, 0.0, 0.95, 1.05, true}, {2, -0.3, 0.3, 0.95, 1.05, false}};
  d.lines = {{1, 2, 400.0, 200.0, 1000.0}};
  for (int i = 0; i < N; ++i) {
    Prosumer p;
    p.id = i + 1;
    p.bus_id = 2;
    p.demand = Vector::Constant(H, demand);
    d.prosumers.push_back(p);
  }
  d.pricing.price_coeff = Vector::Constant(H, 0.1);
  d.pricing.tariff = 0.01;
  d.pricing.agg_min = 0.0;
  d.pricing.agg_max = 1e4;
  return d;
}

inline DispatchableUnit unit(int H, double quad, double lin, double p_min, double p_max) {
  return {Vector::Constant(H, quad), Vector::Constant(H, lin), p_min, p_max};
}

inline Scenario small_instance(int N, int H, std::uint64_t seed) {
  SmallInstanceOptions o;
  o.prosumers = N;
  o.horizon = H;
  return Scenario(random_small_instance(o, seed));
}

inline Vector random_vector(Rng& rng, int n, double lo, double hi) {
  Vector v(n);
  for (int k = 0; k < n; ++k) v(k) = rng.uniform(lo, hi);
  return v;
}

// Random prosumer strategies with trades bounded away from zero.
inline std::vector<ProsumerDecision> random_prosumers(Rng& rng, const Scenario& s) {
  std::vector<ProsumerDecision> u;
  const int H = s.horizon();
  for (int i = 0; i < s.num_prosumers(); ++i) {
    ProsumerDecision d = ProsumerDecision::zeros(H, s.neighbors(i));
    d.p_di = random_vector(rng, H, 0.1, 5);
    d.p_ch = random_vector(rng, H, 0.1, 3);
    d.p_ds = random_vector(rng, H, 0.1, 3);
    d.p_mg = random_vector(rng, H, -10, 10);
    for (auto& [j, t] : d.p_tr) {
      t = random_vector(rng, H, 0.1, 5);
      for (int h = 0; h < H; ++h)
        if (rng.uniform() < 0.5) t(h) = -t(h);
    }
    u.push_back(d);
  }
  return u;
}

inline GridDecision random_grid_point(Rng& rng, const Scenario& s, double flow_scale) {
  GridDecision u = GridDecision::zeros(s.num_buses(), s.num_lines(), s.horizon());
  for (int k = 0; k < u.theta.size(); ++k) u.theta.data()[k] = rng.uniform(-0.2, 0.2);
  for (int k = 0; k < u.v.size(); ++k) u.v.data()[k] = 1.0 + rng.uniform(-0.2, 0.2);
  for (auto* m : {&u.p_tg, &u.p_l, &u.q_l})
    for (int k = 0; k < m->size(); ++k) m->data()[k] = rng.uniform(-flow_scale, flow_scale);
  return u;
}

// min ||x - u||^2 over the operator's feasible set, written out directly from
// the flow equations p = B dtheta - G dv, q = G dtheta + B dv.
inline QpProblem grid_projection_qp(const Scenario& s, const GridDecision& u, bool lines) {
  const int B = s.num_buses(), A = s.num_arcs(), H = s.horizon();
  const int n = (3 * B + 2 * A) * H;
  QpProblem qp = QpProblem::free(n);
  std::vector<Triplet> pt;
  for (int k = 0; k < n; ++k) pt.emplace_back(k, k, 1.0);
  qp.P.setFromTriplets(pt.begin(), pt.end());
  qp.q = -flatten(u);
  auto th = [&](int y, int h) { return h * B + y; };
  auto vv = [&](int y, int h) { return B * H + h * B + y; };
  auto tg = [&](int y, int h) { return 2 * B * H + h * B + y; };
  auto pl = [&](int a, int h) { return 3 * B * H + h * A + a; };
  auto ql = [&](int a, int h) { return 3 * B * H + A * H + h * A + a; };
  std::vector<Triplet> at;
  int row = 0;
  for (int h = 0; h < H; ++h)
    for (int a = 0; a < A; ++a) {
      const Line& L = s.line(s.arc_line(a));
      const int y = s.arc_tail(a), z = s.arc_head(a);
      at.emplace_back(row, pl(a, h), 1.0);
      at.emplace_back(row, th(y, h), -L.susceptance);
      at.emplace_back(row, th(z, h), L.susceptance);
      at.emplace_back(row, vv(y, h), L.conductance);
      at.emplace_back(row, vv(z, h), -L.conductance);
      ++row;
      at.emplace_back(row, ql(a, h), 1.0);
      at.emplace_back(row, th(y, h), -L.conductance);
      at.emplace_back(row, th(z, h), L.conductance);
      at.emplace_back(row, vv(y, h), -L.susceptance);
      at.emplace_back(row, vv(z, h), L.susceptance);
      ++row;
      if (lines) qp.disks.push_back({pl(a, h), ql(a, h), L.capacity});
    }
  qp.A_eq.resize(row, n);
  qp.A_eq.setFromTriplets(at.begin(), at.end());
  qp.b_eq = Vector::Zero(row);
  for (int h = 0; h < H; ++h)
    for (int y = 0; y < B; ++y) {
      qp.lo(th(y, h)) = s.bus(y).theta_min;
      qp.hi(th(y, h)) = s.bus(y).theta_max;
      qp.lo(vv(y, h)) = s.bus(y).v_min;
      qp.hi(vv(y, h)) = s.bus(y).v_max;
      if (!s.bus(y).grid_connected) qp.lo(tg(y, h)) = qp.hi(tg(y, h)) = 0.0;
    }
  return qp;
}

inline std::string data_path(const std::string& name) { return std::string(P2PM_TEST_DATA_DIR) + "/" + name; }

}  // namespace p2pm::test
