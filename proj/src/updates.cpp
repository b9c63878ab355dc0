#include "p2pm/updates.hpp"

#include <algorithm>
#include <cmath>

namespace p2pm {

namespace {

void check_step(double value, double bound, const std::string& what) {
  if (!(value > 0.0)) throw ModelError("step size " + what + " must be > 0");
  if (!(value < bound))
    throw ModelError("step size " + what + " = " + std::to_string(value) + " violates its bound " +
                     std::to_string(bound));
}

}  // namespace

StepSizes step_size_bounds(const Scenario& s) {
  const int N = s.num_prosumers();
  const int B = s.num_buses();
  StepSizes b;
  const double dmax = s.pricing().price_coeff.maxCoeff();
  b.alpha = Vector::Constant(N, 1.0 / (3.0 + N * dmax));
  b.beta_tr = Vector::Constant(s.num_links(), 0.5);
  b.alpha_dno = 2.0;
  b.gamma_mg = 1.0 / std::max(N, 1);
  b.beta_tg = 1.0 / (N + B);
  b.beta_pb.resize(B);
  for (int y = 0; y < B; ++y) {
    const double ny = static_cast<double>(s.prosumers_at(y).size());
    const double by = static_cast<double>(s.arcs_from(y).size());
    b.beta_pb(y) = 1.0 / (1.0 + 2.0 * ny + by);
  }
  return b;
}

StepSizes default_step_sizes(const Scenario& s, double safety) {
  if (!(safety > 0.0 && safety < 1.0)) throw ModelError("step-size safety factor must lie in (0, 1)");
  StepSizes st = step_size_bounds(s);
  st.alpha *= safety;
  st.beta_tr *= safety;
  st.alpha_dno *= safety;
  st.gamma_mg *= safety;
  st.beta_tg *= safety;
  st.beta_pb *= safety;
  return st;
}

void validate_step_sizes(const StepSizes& steps, const Scenario& s) {
  const StepSizes b = step_size_bounds(s);
  if (steps.alpha.size() != b.alpha.size() || steps.beta_tr.size() != b.beta_tr.size() ||
      steps.beta_pb.size() != b.beta_pb.size())
    throw ModelError("step sizes do not match the scenario dimensions");
  for (int i = 0; i < b.alpha.size(); ++i) check_step(steps.alpha(i), b.alpha(i), "alpha[" + std::to_string(i) + "]");
  for (int k = 0; k < b.beta_tr.size(); ++k)
    check_step(steps.beta_tr(k), b.beta_tr(k), "beta_tr[" + std::to_string(k) + "]");
  check_step(steps.alpha_dno, b.alpha_dno, "alpha_dno");
  check_step(steps.gamma_mg, b.gamma_mg, "gamma_mg");
  check_step(steps.beta_tg, b.beta_tg, "beta_tg");
  for (int y = 0; y < b.beta_pb.size(); ++y)
    check_step(steps.beta_pb(y), b.beta_pb(y), "beta_pb[" + std::to_string(y) + "]");
}

ProsumerState initial_prosumer_state(const Scenario& s, int i, const StepSizes& steps) {
  ProsumerState st;
  st.index = i;
  st.u = ProsumerDecision::zeros(s.horizon(), s.neighbors(i));
  st.alpha = steps.alpha(i);
  for (int j : s.neighbors(i)) {
    st.mu_tr.emplace(j, Vector::Zero(s.horizon()));
    st.zeta_tr_prev.emplace(j, Vector::Zero(s.horizon()));
    st.beta_tr.emplace(j, steps.beta_tr(s.link_index(i, j)));
  }
  return st;
}

void prosumer_dual_update(ProsumerState& st, const std::map<int, Vector>& incoming) {
  for (auto& [j, mu] : st.mu_tr) {
    auto it = incoming.find(j);
    if (it == incoming.end())
      throw ModelError("prosumer " + std::to_string(st.index) + ": no trade message from neighbor " + std::to_string(j));
    const Vector zeta = st.u.p_tr.at(j) + it->second;
    Vector& prev = st.zeta_tr_prev.at(j);
    mu += st.beta_tr.at(j) * (2.0 * zeta - prev);
    prev = zeta;
  }
}

ProsumerDecision assemble_prosumer_shift(const ProsumerState& st, const Broadcast& bc, const Scenario& s) {
  const int H = s.horizon();
  if (bc.lambda_mg.size() != 2 * H || bc.mu_tg.size() != H || bc.mu_pb.cols() != H ||
      bc.mu_pb.rows() != s.num_buses())
    throw ModelError("assemble_prosumer_shift: broadcast dimension mismatch");
  const Vector mu_pb = bc.mu_pb.row(s.prosumer_bus(st.index)).transpose();
  const double a = st.alpha;
  ProsumerDecision psi = st.u;
  psi.p_di += a * mu_pb;
  psi.p_ch -= a * mu_pb;
  psi.p_ds += a * mu_pb;
  psi.p_mg -= a * (bc.lambda_mg.head(H) - bc.lambda_mg.tail(H) + bc.mu_tg);
  for (auto& [j, t] : psi.p_tr) t -= a * st.mu_tr.at(j);
  return psi;
}

ProsumerSubproblem::ProsumerSubproblem(const Scenario& s, int i, double alpha, GameMode mode,
                                       const QpSettings& settings)
    : s_(&s), i_(i), H_(s.horizon()), alpha_(alpha), mode_(mode), neighbors_(s.neighbors(i)), settings_(settings) {
  if (!(alpha > 0.0)) throw ModelError("ProsumerSubproblem: alpha must be > 0");
  const Prosumer& pr = s.prosumer(i);
  const int H = H_;
  const int nn = static_cast<int>(neighbors_.size());
  n_u_ = (4 + nn) * H;
  n_ = n_u_ + (pr.storage ? H : 0);
  const int di = 0, ch = H, ds = 2 * H, mg = 3 * H, tr = 4 * H, soc = n_u_;

  base_ = QpProblem::free(n_);
  std::vector<Triplet> pt;
  if (pr.dispatchable)
    for (int h = 0; h < H; ++h) pt.emplace_back(di + h, di + h, 2.0 * pr.dispatchable->quad_coeff(h));
  if (pr.storage)
    for (int h = 0; h < H; ++h) {
      pt.emplace_back(ch + h, ch + h, 2.0 * pr.storage->cost_coeff);
      pt.emplace_back(ds + h, ds + h, 2.0 * pr.storage->cost_coeff);
    }
  if (mode == GameMode::gne)
    for (int h = 0; h < H; ++h) pt.emplace_back(mg + h, mg + h, 2.0 * s.pricing().price_coeff(h));
  base_.P.setFromTriplets(pt.begin(), pt.end());

  const int rows = H + (pr.storage ? H : 0);
  std::vector<Triplet> at;
  base_.b_eq = Vector::Zero(rows);
  for (int h = 0; h < H; ++h) {
    at.emplace_back(h, di + h, 1.0);
    at.emplace_back(h, ds + h, 1.0);
    at.emplace_back(h, ch + h, -1.0);
    at.emplace_back(h, mg + h, 1.0);
    for (int k = 0; k < nn; ++k) at.emplace_back(h, tr + k * H + h, 1.0);
    base_.b_eq(h) = pr.demand(h);
  }
  if (pr.storage) {
    const StorageUnit& st = *pr.storage;
    const double kcap = s.sampling_hours() / st.capacity;
    for (int h = 0; h < H; ++h) {
      const int r = H + h;
      at.emplace_back(r, soc + h, 1.0);
      if (h > 0) at.emplace_back(r, soc + h - 1, -st.leakage);
      at.emplace_back(r, ch + h, -kcap * st.charge_eff);
      at.emplace_back(r, ds + h, kcap / st.discharge_eff);
    }
    base_.b_eq(H) = st.leakage * st.soc_init;
  }
  base_.A_eq.resize(rows, n_);
  base_.A_eq.setFromTriplets(at.begin(), at.end());

  for (int h = 0; h < H; ++h) {
    base_.lo(di + h) = pr.dispatchable ? pr.dispatchable->p_min : 0.0;
    base_.hi(di + h) = pr.dispatchable ? pr.dispatchable->p_max : 0.0;
    base_.lo(ch + h) = 0.0;
    base_.hi(ch + h) = pr.storage ? pr.storage->p_ch_max : 0.0;
    base_.lo(ds + h) = 0.0;
    base_.hi(ds + h) = pr.storage ? pr.storage->p_ds_max : 0.0;
    if (pr.storage) {
      base_.lo(soc + h) = pr.storage->soc_min;
      base_.hi(soc + h) = pr.storage->soc_max;
    }
  }
  for (int k = 0; k < nn; ++k) {
    const double cap = s.link(i, neighbors_[k]).capacity;
    base_.lo.segment(tr + k * H, H).setConstant(-cap);
    base_.hi.segment(tr + k * H, H).setConstant(cap);
  }

  std::vector<AbsTerm> terms;
  const double tariff = s.pricing().tariff;
  if (tariff > 0.0)
    for (int k = 0; k < nn * H; ++k) terms.push_back({tr + k, tariff});

  const Vector zero_center = Vector::Zero(n_u_);
  abs_ = abs_reformulate(with_prox(base_, zero_center, alpha_), terms);
  solver_ = std::make_unique<QpSolver>(abs_.problem, settings_);
}

Vector ProsumerSubproblem::pack(const ProsumerDecision& d) const {
  Vector x = Vector::Zero(n_);
  const int H = H_;
  x.segment(0, H) = d.p_di;
  x.segment(H, H) = d.p_ch;
  x.segment(2 * H, H) = d.p_ds;
  x.segment(3 * H, H) = d.p_mg;
  for (std::size_t k = 0; k < neighbors_.size(); ++k) x.segment((4 + k) * H, H) = d.p_tr.at(neighbors_[k]);
  return x;
}

ProsumerDecision ProsumerSubproblem::unpack(const Vector& x) const {
  const int H = H_;
  ProsumerDecision d;
  d.p_di = x.segment(0, H);
  d.p_ch = x.segment(H, H);
  d.p_ds = x.segment(2 * H, H);
  d.p_mg = x.segment(3 * H, H);
  for (std::size_t k = 0; k < neighbors_.size(); ++k) d.p_tr.emplace(neighbors_[k], x.segment((4 + k) * H, H));
  return d;
}

Vector ProsumerSubproblem::linear_term(const ProsumerDecision& psi, const Vector& sigma_others,
                                       const Vector& sigma_frozen, bool prox) const {
  const Scenario& s = *s_;
  const Prosumer& pr = s.prosumer(i_);
  const int H = H_;
  Vector q = Vector::Zero(n_);
  if (pr.dispatchable) q.segment(0, H) = pr.dispatchable->lin_coeff;
  const Vector& d = s.pricing().price_coeff;
  const Vector& load = mode_ == GameMode::gne ? sigma_others : sigma_frozen;
  q.segment(3 * H, H) = d.cwiseProduct(load + s.passive_load());
  for (std::size_t k = 0; k < neighbors_.size(); ++k)
    q.segment((4 + k) * H, H).setConstant(s.link(i_, neighbors_[k]).cost);
  if (prox) q.head(n_u_) -= pack(psi).head(n_u_) / alpha_;
  else q.head(n_u_) += pack(psi).head(n_u_);
  return q;
}

ProsumerDecision ProsumerSubproblem::solve(const ProsumerDecision& psi, const Vector& sigma_others,
                                           const Vector& sigma_frozen) {
  solver_->update_linear(abs_.map_linear(linear_term(psi, sigma_others, sigma_frozen, true)));
  last_ = solver_->solve();
  if (last_.status != QpStatus::solved)
    throw ModelError("prosumer " + std::to_string(s_->prosumer(i_).id) + ": proximal QP " + to_string(last_.status));
  return unpack(abs_.recover(last_.x));
}

ProsumerDecision ProsumerSubproblem::best_response(const ProsumerDecision& linear_shift, const Vector& sigma_others,
                                                   const Vector& sigma_frozen) const {
  std::vector<AbsTerm> terms;
  const double tariff = s_->pricing().tariff;
  if (tariff > 0.0)
    for (int k = 0; k < static_cast<int>(neighbors_.size()) * H_; ++k) terms.push_back({4 * H_ + k, tariff});
  QpProblem base = base_;
  base.q = linear_term(linear_shift, sigma_others, sigma_frozen, false);
  const AbsReformulation ar = abs_reformulate(base, terms);
  const QpSolution sol = p2pm::solve(ar.problem, settings_);
  if (sol.status != QpStatus::solved)
    throw ModelError("prosumer " + std::to_string(s_->prosumer(i_).id) + ": best-response QP " + to_string(sol.status));
  return unpack(ar.recover(sol.x));
}

ProsumerDecision prosumer_primal_update(ProsumerState& st, const Broadcast& bc, ProsumerSubproblem& sub,
                                        const Scenario& s) {
  const ProsumerDecision psi = assemble_prosumer_shift(st, bc, s);
  const Vector sigma_others = bc.sigma_mg - st.u.p_mg;
  st.u = sub.solve(psi, sigma_others, bc.sigma_mg);
  return st.u;
}

DnoState initial_dno_state(const Scenario& s, const GridSets& sets, const StepSizes& steps,
                           const std::vector<ProsumerDecision>& prosumers, const DrsConfig& drs) {
  const int H = s.horizon();
  DnoState st;
  GridDecision flat = GridDecision::zeros(s.num_buses(), s.num_lines(), H);
  for (int y = 0; y < s.num_buses(); ++y) flat.v.row(y).setConstant(0.5 * (s.bus(y).v_min + s.bus(y).v_max));
  const DrsResult r = project_grid_feasible(sets, flat, drs);
  st.u = r.z;
  st.drs_xi = r.xi;
  st.has_drs_xi = true;
  st.lambda_mg = Vector::Zero(2 * H);
  st.mu_tg = Vector::Zero(H);
  st.mu_pb = Matrix::Zero(s.num_buses(), H);
  st.sigma_mg = aggregate_grid_load(prosumers, H);
  st.sigma_tg = st.u.p_tg.colwise().sum().transpose();
  st.zeta_tg = st.sigma_mg + s.passive_load() - st.sigma_tg;
  st.zeta_pb = bus_balance_residual(prosumers, st.u, s);
  st.alpha = steps.alpha_dno;
  st.gamma_mg = steps.gamma_mg;
  st.beta_tg = steps.beta_tg;
  st.beta_pb = steps.beta_pb;
  return st;
}

Broadcast make_broadcast(const DnoState& st) { return {st.sigma_mg, st.lambda_mg, st.mu_tg, st.mu_pb}; }

DrsResult dno_primal_update(DnoState& st, const GridSets& sets, const DrsConfig& drs, bool warm_start) {
  GridDecision target = st.u;
  const double step = 1.0 / st.alpha;
  for (int y = 0; y < st.u.buses(); ++y)
    target.p_tg.row(y) += step * (st.mu_tg + st.mu_pb.row(y).transpose()).transpose();
  // p^l_(y,z) is shifted by the multiplier of its tail bus y.
  for (int a = 0; a < st.u.arcs(); ++a) target.p_l.row(a) += step * st.mu_pb.row(sets.arc_tail(a));
  DrsResult r;
  if (warm_start && st.has_drs_xi) {
    r = project_grid_feasible(sets, target, drs, &st.drs_xi);
  } else {
    r = project_grid_feasible(sets, target, drs);
  }
  st.u = r.z;
  st.drs_xi = r.xi;
  st.has_drs_xi = true;
  return r;
}

void dno_dual_update(DnoState& st, const std::vector<ProsumerDecision>& prosumers, const Scenario& s) {
  const int H = s.horizon();
  if (static_cast<int>(prosumers.size()) != s.num_prosumers()) throw ModelError("dno_dual_update: missing prosumer message");
  const Vector sigma = aggregate_grid_load(prosumers, H);
  const Vector& b = s.passive_load();
  const Vector reflected = 2.0 * sigma - st.sigma_mg;
  Vector delta(2 * H);
  delta.head(H) = reflected - (Vector::Constant(H, s.pricing().agg_max) - b);
  delta.tail(H) = -reflected - (-Vector::Constant(H, s.pricing().agg_min) + b);
  st.lambda_mg = (st.lambda_mg + st.gamma_mg * delta).cwiseMax(0.0);

  const Vector sigma_tg = st.u.p_tg.colwise().sum().transpose();
  const Vector zeta_tg = sigma + b - sigma_tg;
  st.mu_tg += st.beta_tg * (2.0 * zeta_tg - st.zeta_tg);

  const Matrix zeta_pb = bus_balance_residual(prosumers, st.u, s);
  for (int y = 0; y < s.num_buses(); ++y)
    st.mu_pb.row(y) += st.beta_pb(y) * (2.0 * zeta_pb.row(y) - st.zeta_pb.row(y));

  st.sigma_mg = sigma;
  st.sigma_tg = sigma_tg;
  st.zeta_tg = zeta_tg;
  st.zeta_pb = zeta_pb;
}

}  // namespace p2pm
