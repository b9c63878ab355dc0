#include "p2pm/oracle.hpp"

#include "p2pm/clearing.hpp"

#include <algorithm>
#include <cmath>

namespace p2pm {

namespace {

double inf_norm(const Vector& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }
double inf_norm(const Matrix& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

// Largest elementwise gap between two equally shaped nested numeric arrays.
double json_gap(const nlohmann::json& a, const nlohmann::json& b, const std::string& what) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (!a.is_array() || !b.is_array() || a.size() != b.size()) throw ModelError("compare: shape mismatch in " + what);
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, json_gap(a[k], b[k], what));
  return m;
}

double sign0(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

// Block offsets inside one prosumer's slice.
struct Slice {
  int di, ch, ds, mg, tr, soc;
};

Slice slice_of(const PotentialProblem& pp, int i, int H, int nn) {
  const int o = pp.prosumer_offset[i];
  return {o, o + H, o + 2 * H, o + 3 * H, o + 4 * H, o + (4 + nn) * H};
}

}  // namespace

PotentialProblem build_potential(const Scenario& s) {
  const int N = s.num_prosumers();
  const int H = s.horizon();
  const int B = s.num_buses();
  const int A = s.num_arcs();
  const bool limits = s.defaults().enforce_line_limits;
  const Vector& d = s.pricing().price_coeff;
  const Vector& b = s.passive_load();

  PotentialProblem pp;
  pp.horizon = H;
  int n = 0;
  for (int i = 0; i < N; ++i) {
    const int nn = static_cast<int>(s.neighbors(i).size());
    pp.prosumer_offset.push_back(n);
    pp.prosumer_size.push_back((4 + nn) * H + (s.prosumer(i).storage ? H : 0));
    n += pp.prosumer_size.back();
  }
  pp.grid_offset = n;
  n += (3 * B + 2 * A) * H;
  pp.aux_offset = n;
  n += H;

  QpProblem qp = QpProblem::free(n);
  std::vector<Triplet> pt;
  std::vector<Triplet> at;
  std::vector<double> rhs;
  auto new_row = [&](double r) {
    rhs.push_back(r);
    return static_cast<int>(rhs.size()) - 1;
  };

  // Prosumer blocks: costs, local balance, SoC dynamics, device boxes.
  for (int i = 0; i < N; ++i) {
    const Prosumer& pr = s.prosumer(i);
    const auto& nb = s.neighbors(i);
    const int nn = static_cast<int>(nb.size());
    const Slice sl = slice_of(pp, i, H, nn);
    for (int h = 0; h < H; ++h) {
      if (pr.dispatchable) {
        pt.emplace_back(sl.di + h, sl.di + h, 2.0 * pr.dispatchable->quad_coeff(h));
        qp.q(sl.di + h) = pr.dispatchable->lin_coeff(h);
        qp.lo(sl.di + h) = pr.dispatchable->p_min;
        qp.hi(sl.di + h) = pr.dispatchable->p_max;
      } else {
        qp.lo(sl.di + h) = qp.hi(sl.di + h) = 0.0;
      }
      if (pr.storage) {
        pt.emplace_back(sl.ch + h, sl.ch + h, 2.0 * pr.storage->cost_coeff);
        pt.emplace_back(sl.ds + h, sl.ds + h, 2.0 * pr.storage->cost_coeff);
        qp.lo(sl.ch + h) = qp.lo(sl.ds + h) = 0.0;
        qp.hi(sl.ch + h) = pr.storage->p_ch_max;
        qp.hi(sl.ds + h) = pr.storage->p_ds_max;
        qp.lo(sl.soc + h) = pr.storage->soc_min;
        qp.hi(sl.soc + h) = pr.storage->soc_max;
      } else {
        qp.lo(sl.ch + h) = qp.hi(sl.ch + h) = 0.0;
        qp.lo(sl.ds + h) = qp.hi(sl.ds + h) = 0.0;
      }
      qp.q(sl.mg + h) = d(h) * b(h);
      const int r = new_row(pr.demand(h));
      at.emplace_back(r, sl.di + h, 1.0);
      at.emplace_back(r, sl.ds + h, 1.0);
      at.emplace_back(r, sl.ch + h, -1.0);
      at.emplace_back(r, sl.mg + h, 1.0);
      for (int k = 0; k < nn; ++k) at.emplace_back(r, sl.tr + k * H + h, 1.0);
    }
    for (int k = 0; k < nn; ++k) {
      const TradeLink& link = s.link(i, nb[k]);
      for (int h = 0; h < H; ++h) {
        const int idx = sl.tr + k * H + h;
        qp.q(idx) = link.cost;
        qp.lo(idx) = -link.capacity;
        qp.hi(idx) = link.capacity;
        if (s.pricing().tariff > 0.0) pp.abs_terms.push_back({idx, s.pricing().tariff});
      }
    }
    if (pr.storage) {
      const StorageUnit& st = *pr.storage;
      const double kcap = s.sampling_hours() / st.capacity;
      for (int h = 0; h < H; ++h) {
        const int r = new_row(h == 0 ? st.leakage * st.soc_init : 0.0);
        at.emplace_back(r, sl.soc + h, 1.0);
        if (h > 0) at.emplace_back(r, sl.soc + h - 1, -st.leakage);
        at.emplace_back(r, sl.ch + h, -kcap * st.charge_eff);
        at.emplace_back(r, sl.ds + h, kcap / st.discharge_eff);
      }
    }
  }

  // Aggregative grid term: 1/2 d_h (sigma_h^2 + sum_i p_ih^2).
  for (int h = 0; h < H; ++h) {
    for (int i = 0; i < N; ++i) {
      const int a = pp.prosumer_offset[i] + 3 * H + h;
      for (int j = 0; j < N; ++j) {
        const int c = pp.prosumer_offset[j] + 3 * H + h;
        pt.emplace_back(a, c, i == j ? 2.0 * d(h) : d(h));
      }
    }
  }

  // Reciprocity, one row per link and step.
  pp.reciprocity_row = static_cast<int>(rhs.size());
  for (int l = 0; l < s.num_links(); ++l) {
    const TradeLink& link = s.data().trade_links[l];
    const int i = s.prosumer_index(link.i);
    const int j = s.prosumer_index(link.j);
    const auto& ni = s.neighbors(i);
    const auto& nj = s.neighbors(j);
    const int ki = static_cast<int>(std::find(ni.begin(), ni.end(), j) - ni.begin());
    const int kj = static_cast<int>(std::find(nj.begin(), nj.end(), i) - nj.begin());
    for (int h = 0; h < H; ++h) {
      const int r = new_row(0.0);
      at.emplace_back(r, pp.prosumer_offset[i] + (4 + ki) * H + h, 1.0);
      at.emplace_back(r, pp.prosumer_offset[j] + (4 + kj) * H + h, 1.0);
    }
  }

  // Grid block indices in flatten() order.
  const int g0 = pp.grid_offset;
  auto theta = [&](int y, int h) { return g0 + h * B + y; };
  auto volt = [&](int y, int h) { return g0 + B * H + h * B + y; };
  auto ptg = [&](int y, int h) { return g0 + 2 * B * H + h * B + y; };
  auto pl = [&](int a, int h) { return g0 + 3 * B * H + h * A + a; };
  auto ql = [&](int a, int h) { return g0 + 3 * B * H + A * H + h * A + a; };

  // Aggregate auxiliary s_h = sigma_h + b_h within the aggregate bounds.
  pp.aggregate_row = static_cast<int>(rhs.size());
  for (int h = 0; h < H; ++h) {
    const int r = new_row(b(h));
    at.emplace_back(r, pp.aux_offset + h, 1.0);
    for (int i = 0; i < N; ++i) at.emplace_back(r, pp.prosumer_offset[i] + 3 * H + h, -1.0);
    qp.lo(pp.aux_offset + h) = s.pricing().agg_min;
    qp.hi(pp.aux_offset + h) = s.pricing().agg_max;
  }

  // Grid exchange: sigma + b - sum_y p_tg = 0.
  pp.exchange_row = static_cast<int>(rhs.size());
  for (int h = 0; h < H; ++h) {
    const int r = new_row(-b(h));
    for (int i = 0; i < N; ++i) at.emplace_back(r, pp.prosumer_offset[i] + 3 * H + h, 1.0);
    for (int y = 0; y < B; ++y) at.emplace_back(r, ptg(y, h), -1.0);
  }

  // Bus balance, written as (affine part) = -(constant part).
  pp.bus_row = static_cast<int>(rhs.size());
  const Matrix& passive = s.passive_bus_demand();
  for (int h = 0; h < H; ++h) {
    for (int y = 0; y < B; ++y) {
      double demand = passive(y, h);
      for (int i : s.prosumers_at(y)) demand += s.prosumer(i).demand(h);
      const int r = new_row(-demand);
      for (int i : s.prosumers_at(y)) {
        const int o = pp.prosumer_offset[i];
        at.emplace_back(r, o + h, -1.0);
        at.emplace_back(r, o + 2 * H + h, -1.0);
        at.emplace_back(r, o + H + h, 1.0);
      }
      at.emplace_back(r, ptg(y, h), -1.0);
      for (int a : s.arcs_from(y)) at.emplace_back(r, pl(a, h), -1.0);
    }
  }

  // Linearized flows on both arc directions.
  pp.flow_row = static_cast<int>(rhs.size());
  for (int h = 0; h < H; ++h) {
    for (int a = 0; a < A; ++a) {
      const Line& line = s.line(s.arc_line(a));
      const int y = s.arc_tail(a), z = s.arc_head(a);
      int r = new_row(0.0);
      at.emplace_back(r, pl(a, h), 1.0);
      at.emplace_back(r, theta(y, h), -line.susceptance);
      at.emplace_back(r, theta(z, h), line.susceptance);
      at.emplace_back(r, volt(y, h), line.conductance);
      at.emplace_back(r, volt(z, h), -line.conductance);
      r = new_row(0.0);
      at.emplace_back(r, ql(a, h), 1.0);
      at.emplace_back(r, theta(y, h), -line.conductance);
      at.emplace_back(r, theta(z, h), line.conductance);
      at.emplace_back(r, volt(y, h), -line.susceptance);
      at.emplace_back(r, volt(z, h), line.susceptance);
      if (limits) qp.disks.push_back({pl(a, h), ql(a, h), line.capacity});
    }
  }

  for (int h = 0; h < H; ++h) {
    for (int y = 0; y < B; ++y) {
      const Bus& bus = s.bus(y);
      qp.lo(theta(y, h)) = bus.theta_min;
      qp.hi(theta(y, h)) = bus.theta_max;
      qp.lo(volt(y, h)) = bus.v_min;
      qp.hi(volt(y, h)) = bus.v_max;
      if (!bus.grid_connected) qp.lo(ptg(y, h)) = qp.hi(ptg(y, h)) = 0.0;
    }
  }

  qp.P.resize(n, n);
  qp.P.setFromTriplets(pt.begin(), pt.end());
  qp.A_eq.resize(static_cast<int>(rhs.size()), n);
  qp.A_eq.setFromTriplets(at.begin(), at.end());
  qp.b_eq = Eigen::Map<const Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  qp.validate();
  pp.qp = std::move(qp);
  return pp;
}

Vector PotentialProblem::pack(const Profile& profile, const Scenario& s) const {
  const int H = horizon;
  Vector x = Vector::Zero(qp.num_variables());
  for (int i = 0; i < s.num_prosumers(); ++i) {
    const ProsumerDecision& d = profile.prosumers.at(i);
    const auto& nb = s.neighbors(i);
    const int nn = static_cast<int>(nb.size());
    const Slice sl = slice_of(*this, i, H, nn);
    x.segment(sl.di, H) = d.p_di;
    x.segment(sl.ch, H) = d.p_ch;
    x.segment(sl.ds, H) = d.p_ds;
    x.segment(sl.mg, H) = d.p_mg;
    for (int k = 0; k < nn; ++k) x.segment(sl.tr + k * H, H) = d.p_tr.at(nb[k]);
    if (const auto& st = s.prosumer(i).storage)
      x.segment(sl.soc, H) = soc_trajectory(*st, d.p_ch, d.p_ds, s.data().time).tail(H);
  }
  const Vector g = flatten(profile.grid);
  if (g.size() != aux_offset - grid_offset) throw ModelError("PotentialProblem::pack: grid size mismatch");
  x.segment(grid_offset, g.size()) = g;
  x.segment(aux_offset, H) = aggregate_grid_load(profile.prosumers, H) + s.passive_load();
  return x;
}

Profile PotentialProblem::unpack(const Vector& x, const Scenario& s) const {
  if (x.size() != qp.num_variables()) throw ModelError("PotentialProblem::unpack: size mismatch");
  const int H = horizon;
  Profile p;
  for (int i = 0; i < s.num_prosumers(); ++i) {
    const auto& nb = s.neighbors(i);
    const int nn = static_cast<int>(nb.size());
    const Slice sl = slice_of(*this, i, H, nn);
    ProsumerDecision d;
    d.p_di = x.segment(sl.di, H);
    d.p_ch = x.segment(sl.ch, H);
    d.p_ds = x.segment(sl.ds, H);
    d.p_mg = x.segment(sl.mg, H);
    for (int k = 0; k < nn; ++k) d.p_tr.emplace(nb[k], x.segment(sl.tr + k * H, H));
    p.prosumers.push_back(std::move(d));
  }
  p.grid = unflatten_grid(x.segment(grid_offset, aux_offset - grid_offset), s.num_buses(), s.num_arcs(), H);
  return p;
}

double PotentialProblem::value(const Vector& x) const {
  double v = qp.objective(x);
  for (const AbsTerm& t : abs_terms) v += t.coeff * std::abs(x(t.index));
  return v;
}

double potential_value(const std::vector<ProsumerDecision>& prosumers, const Scenario& s) {
  const int H = s.horizon();
  const Vector& d = s.pricing().price_coeff;
  const Vector& b = s.passive_load();
  double v = 0.0;
  Vector sum_sq = Vector::Zero(H);
  for (int i = 0; i < s.num_prosumers(); ++i) {
    const ProsumerDecision& u = prosumers.at(i);
    const Prosumer& pr = s.prosumer(i);
    if (pr.dispatchable) v += eval_dispatch_cost<double>(u.p_di, *pr.dispatchable, s.data().time);
    if (pr.storage) v += eval_storage_cost<double>(u.p_ch, u.p_ds, *pr.storage);
    v += eval_trade_cost<double>(u.p_tr, trade_terms(s, i), s.pricing().tariff);
    v += d.cwiseProduct(b).dot(u.p_mg);
    sum_sq += u.p_mg.cwiseAbs2();
  }
  const Vector sigma = aggregate_grid_load(prosumers, H);
  v += 0.5 * d.dot(sigma.cwiseAbs2() + sum_sq);
  return v;
}

std::vector<ProsumerDecision> potential_gradient(const std::vector<ProsumerDecision>& prosumers,
                                                 const Scenario& s) {
  const PotentialProblem pp = build_potential(s);
  Profile profile{prosumers, GridDecision::zeros(s.num_buses(), s.num_lines(), s.horizon())};
  const Vector x = pp.pack(profile, s);
  Vector g = pp.qp.P * x + pp.qp.q;
  for (const AbsTerm& t : pp.abs_terms) g(t.index) += t.coeff * sign0(x(t.index));
  return pp.unpack(g, s).prosumers;
}

QpSettings default_oracle_settings() {
  QpSettings qs;
  qs.tol = 1e-9;
  qs.max_iter = 200000;
  return qs;
}

VgneSolution solve_vgne(const Scenario& s, const QpSettings& settings) {
  const PotentialProblem pp = build_potential(s);
  const AbsReformulation abs = abs_reformulate(pp.qp, pp.abs_terms);
  QpSolution ext = solve(abs.problem, settings);
  if (ext.status == QpStatus::infeasible_detected)
    throw InfeasibleError("solve_vgne: joint feasible set is empty");
  if (ext.status != QpStatus::solved)
    throw NumericalError("solve_vgne: solver stopped after " + std::to_string(ext.iterations) +
                         " iterations (primal " + std::to_string(ext.primal_residual) + ", dual " +
                         std::to_string(ext.dual_residual) + ")");

  const int H = s.horizon();
  const int B = s.num_buses();
  VgneSolution out;
  out.qp = ext;
  out.qp.x = abs.recover(ext.x);
  out.profile = pp.unpack(out.qp.x, s);

  const Vector& y = ext.y_eq;
  out.mu_tr.resize(s.num_prosumers());
  for (int l = 0; l < s.num_links(); ++l) {
    const TradeLink& link = s.data().trade_links[l];
    const int i = s.prosumer_index(link.i);
    const int j = s.prosumer_index(link.j);
    const Vector m = y.segment(pp.reciprocity_row + l * H, H);
    out.mu_tr[i].emplace(j, m);
    out.mu_tr[j].emplace(i, m);
  }
  // The aux bound multiplier is the aggregate-bound dual: positive on the
  // upper bound, negative on the lower one.
  const Vector yb = ext.y_bound.segment(pp.aux_offset, H);
  out.lambda_mg.resize(2 * H);
  out.lambda_mg.head(H) = yb.cwiseMax(0.0);
  out.lambda_mg.tail(H) = (-yb).cwiseMax(0.0);
  out.mu_tg = y.segment(pp.exchange_row, H);
  out.mu_pb = y.segment(pp.bus_row, B * H).reshaped(B, H);
  for (int i = 0; i < s.num_prosumers(); ++i)
    out.costs.push_back(eval_total_cost<double>(i, out.profile.prosumers, s));
  return out;
}

double ComparisonReport::power_distance() const {
  return std::max({p_di, p_ch, p_ds, p_mg, p_tr, p_tg, p_l});
}

double ComparisonReport::max_cost_gap() const {
  double m = 0.0;
  for (double g : cost_gap) m = std::max(m, std::abs(g));
  return m;
}

ComparisonReport compare(const Profile& a, const Profile& b, const Scenario& s) {
  const int N = s.num_prosumers();
  if (static_cast<int>(a.prosumers.size()) != N || static_cast<int>(b.prosumers.size()) != N)
    throw ModelError("compare: prosumer count mismatch");
  auto same_shape = [](const Matrix& x, const Matrix& y) { return x.rows() == y.rows() && x.cols() == y.cols(); };
  if (!same_shape(a.grid.theta, b.grid.theta) || !same_shape(a.grid.v, b.grid.v) ||
      !same_shape(a.grid.p_tg, b.grid.p_tg) || !same_shape(a.grid.p_l, b.grid.p_l) ||
      !same_shape(a.grid.q_l, b.grid.q_l))
    throw ModelError("compare: grid dimension mismatch");

  ComparisonReport r;
  for (int i = 0; i < N; ++i) {
    const ProsumerDecision& x = a.prosumers[i];
    const ProsumerDecision& y = b.prosumers[i];
    if (x.p_di.size() != y.p_di.size() || x.p_mg.size() != y.p_mg.size() || x.p_tr.size() != y.p_tr.size())
      throw ModelError("compare: prosumer " + std::to_string(i) + " dimension mismatch");
    r.p_di = std::max(r.p_di, inf_norm(Vector(x.p_di - y.p_di)));
    r.p_ch = std::max(r.p_ch, inf_norm(Vector(x.p_ch - y.p_ch)));
    r.p_ds = std::max(r.p_ds, inf_norm(Vector(x.p_ds - y.p_ds)));
    r.p_mg = std::max(r.p_mg, inf_norm(Vector(x.p_mg - y.p_mg)));
    for (const auto& [j, t] : x.p_tr) {
      auto it = y.p_tr.find(j);
      if (it == y.p_tr.end() || it->second.size() != t.size())
        throw ModelError("compare: trade layout mismatch for prosumer " + std::to_string(i));
      r.p_tr = std::max(r.p_tr, inf_norm(Vector(t - it->second)));
    }
    r.cost_gap.push_back(eval_total_cost<double>(i, a.prosumers, s) - eval_total_cost<double>(i, b.prosumers, s));
  }
  r.theta = inf_norm(Matrix(a.grid.theta - b.grid.theta));
  r.v = inf_norm(Matrix(a.grid.v - b.grid.v));
  r.p_tg = inf_norm(Matrix(a.grid.p_tg - b.grid.p_tg));
  r.p_l = inf_norm(Matrix(a.grid.p_l - b.grid.p_l));
  r.q_l = inf_norm(Matrix(a.grid.q_l - b.grid.q_l));
  return r;
}

nlohmann::json oracle_to_json(const VgneSolution& sol, const Scenario& s) {
  nlohmann::json out;
  out["status"] = to_string(sol.qp.status);
  out["iterations"] = sol.qp.iterations;
  out["objective"] = sol.qp.objective;
  DualSnapshot duals{sol.mu_tr, sol.lambda_mg, sol.mu_tg, sol.mu_pb};
  out.update(profile_to_json(sol.profile, duals, sol.costs, s));
  return out;
}

ComparisonReport compare_reports(const nlohmann::json& a, const nlohmann::json& b) {
  ComparisonReport r;
  try {
    const auto& pa = a.at("prosumers");
    const auto& pb = b.at("prosumers");
    if (pa.size() != pb.size()) throw ModelError("compare: prosumer count mismatch");
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const auto& x = pa[i];
      const auto& y = pb[i];
      if (x.at("id") != y.at("id")) throw ModelError("compare: prosumer order differs at position " + std::to_string(i));
      const std::string who = "prosumer " + x.at("id").dump();
      r.p_di = std::max(r.p_di, json_gap(x.at("p_di"), y.at("p_di"), who + " p_di"));
      r.p_ch = std::max(r.p_ch, json_gap(x.at("p_ch"), y.at("p_ch"), who + " p_ch"));
      r.p_ds = std::max(r.p_ds, json_gap(x.at("p_ds"), y.at("p_ds"), who + " p_ds"));
      r.p_mg = std::max(r.p_mg, json_gap(x.at("p_mg"), y.at("p_mg"), who + " p_mg"));
      const auto& tx = x.at("p_tr");
      const auto& ty = y.at("p_tr");
      if (tx.size() != ty.size()) throw ModelError("compare: trade layout mismatch for " + who);
      for (auto it = tx.begin(); it != tx.end(); ++it) {
        if (!ty.contains(it.key())) throw ModelError("compare: trade layout mismatch for " + who);
        r.p_tr = std::max(r.p_tr, json_gap(it.value(), ty.at(it.key()), who + " p_tr"));
      }
      r.cost_gap.push_back(x.at("cost").get<double>() - y.at("cost").get<double>());
    }
    const auto& ga = a.at("grid");
    const auto& gb = b.at("grid");
    r.theta = json_gap(ga.at("theta"), gb.at("theta"), "theta");
    r.v = json_gap(ga.at("v"), gb.at("v"), "v");
    r.p_tg = json_gap(ga.at("p_tg"), gb.at("p_tg"), "p_tg");
    r.p_l = json_gap(ga.at("p_l"), gb.at("p_l"), "p_l");
    r.q_l = json_gap(ga.at("q_l"), gb.at("q_l"), "q_l");
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("compare: malformed report: ") + e.what());
  }
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  return {{"p_di", r.p_di}, {"p_ch", r.p_ch}, {"p_ds", r.p_ds}, {"p_mg", r.p_mg}, {"p_tr", r.p_tr},
          {"theta", r.theta}, {"v", r.v}, {"p_tg", r.p_tg}, {"p_l", r.p_l}, {"q_l", r.q_l},
          {"cost_gap", r.cost_gap}, {"power_distance", r.power_distance()}, {"max_cost_gap", r.max_cost_gap()}};
}

}  // namespace p2pm
