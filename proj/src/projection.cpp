#include "p2pm/projection.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2pm {

namespace {

double inf_norm(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Radial projection onto the disk of radius cap. The scale is nudged down
// until the rounded result lies inside, so a second call is a no-op.
void clip_to_disk(double& p, double& q, double cap) {
  const double len = std::hypot(p, q);
  if (len <= cap) return;
  double scale = cap / len;
  while (std::hypot(p * scale, q * scale) > cap) scale = std::nextafter(scale, 0.0);
  p *= scale;
  q *= scale;
}

double max_abs_diff(const GridDecision& a, const GridDecision& b) {
  return std::max({inf_norm(a.theta - b.theta), inf_norm(a.v - b.v), inf_norm(a.p_tg - b.p_tg),
                   inf_norm(a.p_l - b.p_l), inf_norm(a.q_l - b.q_l)});
}

}  // namespace

GridSets::GridSets(const Scenario& s, bool enforce_line_limits)
    : buses_(s.num_buses()), arcs_(s.num_arcs()), horizon_(s.horizon()), enforce_lines_(enforce_line_limits) {
  theta_lo_.resize(buses_);
  theta_hi_.resize(buses_);
  v_lo_.resize(buses_);
  v_hi_.resize(buses_);
  grid_bus_.resize(buses_);
  for (int y = 0; y < buses_; ++y) {
    const Bus& b = s.bus(y);
    theta_lo_(y) = b.theta_min;
    theta_hi_(y) = b.theta_max;
    v_lo_(y) = b.v_min;
    v_hi_(y) = b.v_max;
    grid_bus_[y] = b.grid_connected;
  }
  capacity_.resize(arcs_);
  std::vector<Triplet> t;
  t.reserve(8 * arcs_);
  for (int a = 0; a < arcs_; ++a) {
    const Line& ln = s.line(s.arc_line(a));
    capacity_(a) = enforce_lines_ ? ln.capacity : std::numeric_limits<double>::infinity();
    const int y = s.arc_tail(a);
    const int z = s.arc_head(a);
    arc_tail_.push_back(y);
    const double B = ln.susceptance;
    const double G = ln.conductance;
    // p = B (th_y - th_z) - G (v_y - v_z)
    t.emplace_back(a, y, B);
    t.emplace_back(a, z, -B);
    t.emplace_back(a, buses_ + y, -G);
    t.emplace_back(a, buses_ + z, G);
    // q = G (th_y - th_z) + B (v_y - v_z)
    t.emplace_back(arcs_ + a, y, G);
    t.emplace_back(arcs_ + a, z, -G);
    t.emplace_back(arcs_ + a, buses_ + y, B);
    t.emplace_back(arcs_ + a, buses_ + z, -B);
  }
  M_.resize(2 * arcs_, 2 * buses_);
  M_.setFromTriplets(t.begin(), t.end());
  M_.makeCompressed();
  Mt_ = M_.transpose();
  SparseMatrix normal = Mt_ * M_;
  SparseMatrix eye(2 * buses_, 2 * buses_);
  eye.setIdentity();
  normal += eye;
  normal_.compute(normal);
  if (normal_.info() != Eigen::Success) throw ModelError("GridSets: factorization of I + M'M failed");

  Vector pin_values = Vector::Zero(2 * buses_);
  for (int k = 0; k < 2 * buses_; ++k) {
    const double lo = k < buses_ ? theta_lo_(k) : v_lo_(k - buses_);
    const double hi = k < buses_ ? theta_hi_(k) : v_hi_(k - buses_);
    if (lo == hi) {
      pinned_w_.push_back(k);
      pin_values(k) = lo;
    } else {
      free_w_.push_back(k);
    }
  }
  pinned_value_ = pin_values(pinned_w_);
  pinned_flow_ = M_ * pin_values;
  std::vector<int> col_pos(2 * buses_, -1);
  for (std::size_t k = 0; k < free_w_.size(); ++k) col_pos[free_w_[k]] = static_cast<int>(k);
  std::vector<Triplet> tf;
  for (int c = 0; c < M_.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(M_, c); it; ++it)
      if (col_pos[c] >= 0) tf.emplace_back(it.row(), col_pos[c], it.value());
  const int nf = static_cast<int>(free_w_.size());
  M_free_.resize(2 * arcs_, nf);
  M_free_.setFromTriplets(tf.begin(), tf.end());
  M_free_t_ = M_free_.transpose();
  SparseMatrix normal_free = M_free_t_ * M_free_;
  SparseMatrix eye_free(nf, nf);
  eye_free.setIdentity();
  normal_free += eye_free;
  normal_free_.compute(normal_free);
  if (normal_free_.info() != Eigen::Success) throw ModelError("GridSets: factorization of the pinned system failed");
  M_dense_ = Matrix(M_);
}

Matrix GridSets::stack(const GridDecision& u) const {
  Matrix x(3 * buses_ + 2 * arcs_, horizon_);
  x.middleRows(0, buses_) = u.theta;
  x.middleRows(buses_, buses_) = u.v;
  x.middleRows(2 * buses_, buses_) = u.p_tg;
  x.middleRows(3 * buses_, arcs_) = u.p_l;
  x.middleRows(3 * buses_ + arcs_, arcs_) = u.q_l;
  return x;
}

GridDecision GridSets::unstack(const Matrix& x) const {
  GridDecision u;
  u.theta = x.middleRows(0, buses_);
  u.v = x.middleRows(buses_, buses_);
  u.p_tg = x.middleRows(2 * buses_, buses_);
  u.p_l = x.middleRows(3 * buses_, arcs_);
  u.q_l = x.middleRows(3 * buses_ + arcs_, arcs_);
  return u;
}

void GridSets::project_s1_stacked(Matrix& x) const {
  for (int h = 0; h < horizon_; ++h) {
    double* col = x.col(h).data();
    for (int y = 0; y < buses_; ++y) {
      col[y] = std::clamp(col[y], theta_lo_(y), theta_hi_(y));
      col[buses_ + y] = std::clamp(col[buses_ + y], v_lo_(y), v_hi_(y));
      if (!grid_bus_[y]) col[2 * buses_ + y] = 0.0;
    }
    if (!enforce_lines_) continue;
    double* p = col + 3 * buses_;
    double* q = p + arcs_;
    for (int a = 0; a < arcs_; ++a) clip_to_disk(p[a], q[a], capacity_(a));
  }
}

void GridSets::project_s2_pinned_stacked(Matrix& x) const {
  auto w = x.topRows(2 * buses_);
  auto f = x.middleRows(3 * buses_, 2 * arcs_);
  const Matrix shifted = f.colwise() - pinned_flow_;
  const Matrix rhs = w(free_w_, Eigen::all) + M_free_t_ * shifted;
  const Matrix w_free = normal_free_.solve(rhs);
  f = (M_free_ * w_free).colwise() + pinned_flow_;
  w(free_w_, Eigen::all) = w_free;
  for (std::size_t k = 0; k < pinned_w_.size(); ++k) w.row(pinned_w_[k]).setConstant(pinned_value_(k));
}

void GridSets::project_s1_inplace(GridDecision& u) const {
  for (int y = 0; y < buses_; ++y) {
    u.theta.row(y) = u.theta.row(y).cwiseMax(theta_lo_(y)).cwiseMin(theta_hi_(y));
    u.v.row(y) = u.v.row(y).cwiseMax(v_lo_(y)).cwiseMin(v_hi_(y));
    if (!grid_bus_[y]) u.p_tg.row(y).setZero();
  }
  if (!enforce_lines_) return;
  for (int h = 0; h < horizon_; ++h) {
    for (int a = 0; a < arcs_; ++a) clip_to_disk(u.p_l(a, h), u.q_l(a, h), capacity_(a));
  }
}

void GridSets::project_s2_inplace(GridDecision& u) const {
  Matrix w(2 * buses_, horizon_);
  w.topRows(buses_) = u.theta;
  w.bottomRows(buses_) = u.v;
  Matrix f(2 * arcs_, horizon_);
  f.topRows(arcs_) = u.p_l;
  f.bottomRows(arcs_) = u.q_l;
  Matrix rhs = w + Mt_ * f;
  w = normal_.solve(rhs);
  f = M_ * w;
  u.theta = w.topRows(buses_);
  u.v = w.bottomRows(buses_);
  u.p_l = f.topRows(arcs_);
  u.q_l = f.bottomRows(arcs_);
}

GridDecision GridSets::project_s1(const GridDecision& u) const {
  GridDecision out = u;
  project_s1_inplace(out);
  return out;
}

GridDecision GridSets::project_s2(const GridDecision& u) const {
  GridDecision out = u;
  project_s2_inplace(out);
  return out;
}

double GridSets::s2_residual(const GridDecision& u) const {
  Matrix w(2 * buses_, horizon_);
  w.topRows(buses_) = u.theta;
  w.bottomRows(buses_) = u.v;
  Matrix f(2 * arcs_, horizon_);
  f.topRows(arcs_) = u.p_l;
  f.bottomRows(arcs_) = u.q_l;
  return inf_norm(f - M_ * w);
}

double GridSets::s1_residual(const GridDecision& u) const { return max_abs_diff(u, project_s1(u)); }

bool GridSets::polish_stacked(const Matrix& target, const Matrix& z, const Matrix& xi, Matrix& z_out,
                              Matrix& xi_out) const {
  const int nw = 2 * buses_;
  const int nf = 2 * arcs_;
  const int lines = arcs_ / 2;
  z_out.resize(target.rows(), target.cols());
  xi_out.resize(target.rows(), target.cols());
  auto lower = [&](int k) { return k < buses_ ? theta_lo_(k) : v_lo_(k - buses_); };
  auto upper = [&](int k) { return k < buses_ ? theta_hi_(k) : v_hi_(k - buses_); };
  enum Side : signed char { none = 0, at_lo = -1, at_hi = 1 };

  for (int h = 0; h < horizon_; ++h) {
    const Vector w0 = target.col(h).head(nw);
    const Vector f0 = target.col(h).segment(3 * buses_, nf);
    const double tol = 1e-9 * (1.0 + target.col(h).cwiseAbs().maxCoeff());

    // Initial guess from the splitting iterate.
    std::vector<Side> side(nw, none);
    for (int k = 0; k < nw; ++k) {
      if (z(k, h) <= lower(k)) side[k] = at_lo;
      else if (z(k, h) >= upper(k)) side[k] = at_hi;
    }
    std::vector<bool> tight(lines, false);
    Vector kappa = Vector::Zero(lines);
    if (enforce_lines_)
      for (int l = 0; l < lines; ++l) {
        const int a = 2 * l;
        if (std::hypot(z(3 * buses_ + a, h), z(3 * buses_ + arcs_ + a, h)) < capacity_(a) * (1.0 - 1e-9)) continue;
        tight[l] = true;
        double est = 0.0;
        for (int b : {a, a + 1}) {
          const int rp = 3 * buses_ + b, rq = rp + arcs_;
          est += 0.5 *
                 ((xi(rp, h) + target(rp, h) - 2.0 * z(rp, h)) * z(rp, h) +
                  (xi(rq, h) + target(rq, h) - 2.0 * z(rq, h)) * z(rq, h)) /
                 (capacity_(a) * capacity_(a));
        }
        kappa(l) = std::max(est, 0.0);
      }

    Vector w(nw), f(nf), weight(nf), grad_w(nw);
    bool settled = false;
    int box_resets = 0;
    for (int round = 0; round < 60 && !settled; ++round) {
      std::vector<int> act, fre, disk;
      Vector c = Vector::Zero(nw);
      for (int k = 0; k < nw; ++k) {
        const bool pinned = lower(k) == upper(k);
        if (pinned || side[k] != none) {
          act.push_back(k);
          c(k) = pinned || side[k] == at_lo ? lower(k) : upper(k);
        } else {
          fre.push_back(k);
        }
      }
      for (int l = 0; l < lines; ++l)
        if (tight[l]) disk.push_back(l);

      // Equality-constrained projection; tight disks are met by Newton on
      // their multipliers.
      const Matrix MF = M_dense_(Eigen::all, fre);
      const Vector fixed_flow = M_dense_(Eigen::all, act) * c(act);
      Eigen::LLT<Matrix> llt;
      w = c;
      bool solved = false;
      bool released = false;
      Vector phi;
      for (int it = 0; it < 40; ++it) {
        weight.setOnes();
        for (int l : disk)
          for (int b : {2 * l, 2 * l + 1}) weight(b) = weight(arcs_ + b) = 1.0 + kappa(l);
        Matrix K = MF.transpose() * weight.asDiagonal() * MF;
        K.diagonal().array() += 1.0;
        llt.compute(K);
        if (llt.info() != Eigen::Success) return false;
        const Vector w_free = llt.solve(w0(fre) + MF.transpose() * (f0 - weight.cwiseProduct(fixed_flow)));
        w(fre) = w_free;
        f = M_dense_ * w;
        const int nd = static_cast<int>(disk.size());
        phi.resize(nd);
        for (int m = 0; m < nd; ++m) {
          const int a = 2 * disk[m];
          phi(m) = std::hypot(f(a), f(arcs_ + a)) - capacity_(a);
        }
        if (nd == 0 || phi.cwiseAbs().maxCoeff() <= 1e-3 * tol) {
          solved = true;
          break;
        }
        // A disk that stays slack with a zero multiplier is not active.
        for (int m = 0; m < nd; ++m)
          if (kappa(disk[m]) <= 0.0 && phi(m) < 0.0) {
            tight[disk[m]] = false;
            kappa(disk[m]) = 0.0;
            released = true;
          }
        if (released) break;
        Matrix J(nd, nd);
        for (int m = 0; m < nd; ++m) {
          Vector ef = Vector::Zero(nf);
          for (int b : {2 * disk[m], 2 * disk[m] + 1}) {
            ef(b) = f(b);
            ef(arcs_ + b) = f(arcs_ + b);
          }
          const Vector df = -(MF * llt.solve(MF.transpose() * ef));
          for (int r = 0; r < nd; ++r) {
            const int a = 2 * disk[r];
            J(r, m) = (f(a) * df(a) + f(arcs_ + a) * df(arcs_ + a)) / std::hypot(f(a), f(arcs_ + a));
          }
        }
        const Vector delta = J.partialPivLu().solve(phi);
        if (!delta.allFinite() || delta.cwiseAbs().maxCoeff() > 1e12) break;
        for (int m = 0; m < nd; ++m) kappa(disk[m]) = std::max(kappa(disk[m]) - delta(m), 0.0);
      }
      if (released) continue;
      if (!solved) {
        // Flows held by active boxes can leave a disk out of reach of its
        // multiplier. Drop slack disks, else free the boxes and let the outer
        // loop re-add them.
        bool dropped = false;
        for (int m = 0; m < static_cast<int>(disk.size()); ++m)
          if (phi(m) < 0.0) {
            tight[disk[m]] = false;
            kappa(disk[m]) = 0.0;
            dropped = true;
          }
        if (!dropped) {
          if (++box_resets > 3) return false;
          for (int k = 0; k < nw; ++k) side[k] = none;
          for (int l : disk) kappa(l) = 0.0;
        }
        continue;
      }

      grad_w = (w - w0) + M_dense_.transpose() * (weight.cwiseProduct(f) - f0);
      settled = true;
      for (int k = 0; k < nw; ++k) {
        if (lower(k) == upper(k)) continue;
        if (side[k] == at_hi && -grad_w(k) < -tol) side[k] = none, settled = false;
        else if (side[k] == at_lo && -grad_w(k) > tol) side[k] = none, settled = false;
        else if (side[k] == none && w(k) > upper(k) + tol) side[k] = at_hi, settled = false;
        else if (side[k] == none && w(k) < lower(k) - tol) side[k] = at_lo, settled = false;
      }
      for (int l = 0; l < lines; ++l) {
        const int a = 2 * l;
        if (tight[l] && kappa(l) < -tol) {
          tight[l] = false;
          kappa(l) = 0.0;
          settled = false;
        } else if (!tight[l] && std::hypot(f(a), f(arcs_ + a)) > capacity_(a) * (1.0 + 1e-9)) {
          tight[l] = true;
          settled = false;
        }
      }
    }
    if (!settled) return false;

    for (int k = 0; k < nw; ++k) w(k) = std::clamp(w(k), lower(k), upper(k));
    const Vector wf = weight.cwiseProduct(f);
    auto zc = z_out.col(h);
    zc.head(nw) = w;
    for (int y = 0; y < buses_; ++y) zc(nw + y) = grid_bus_[y] ? target(nw + y, h) : 0.0;
    zc.segment(3 * buses_, nf) = f;
    auto xc = xi_out.col(h);
    xc = zc;
    xc.head(nw) = w - M_dense_.transpose() * (wf - f0);
    xc.segment(3 * buses_, nf) = f + wf - f0;
  }
  return true;
}

DrsResult project_grid_feasible(const GridSets& sets, const GridDecision& u, const DrsConfig& cfg,
                                const GridDecision* xi0) {
  if (!(cfg.eta > 0.0 && cfg.eta < 2.0)) throw ModelError("DrsConfig: eta must lie in (0, 2)");
  if (!(cfg.tol > 0.0) || cfg.max_iter < 1 || cfg.polish_interval < 0) throw ModelError("DrsConfig: bad tolerance or iteration limit");
  if (u.buses() != sets.buses() || u.arcs() != sets.arcs() || u.horizon() != sets.horizon())
    throw ModelError("project_grid_feasible: dimension mismatch");

  const Matrix target = sets.stack(u);
  Matrix xi = xi0 ? sets.stack(*xi0) : target;
  Matrix z(target.rows(), target.cols());
  Matrix z_prev(target.rows(), target.cols());
  Matrix reflect(target.rows(), target.cols());
  DrsResult r;
  for (int k = 1; k <= cfg.max_iter; ++k) {
    z.noalias() = 0.5 * (xi + target);
    sets.project_s1_stacked(z);
    reflect.noalias() = 2.0 * z - xi;
    sets.project_s2_pinned_stacked(reflect);
    reflect -= z;
    xi.noalias() += cfg.eta * reflect;
    r.step = reflect.cwiseAbs().maxCoeff();
    const double change = k == 1 ? std::numeric_limits<double>::infinity() : (z - z_prev).cwiseAbs().maxCoeff();
    r.iterations = k;
    if (r.step <= cfg.tol && change <= cfg.tol) {
      r.status = DrsStatus::converged;
      break;
    }
    if (cfg.polish_interval > 0 && k % cfg.polish_interval == 0 && sets.polish_stacked(target, z, xi, z_prev, reflect)) {
      z = z_prev;
      xi = reflect;
      r.step = 0.0;
      r.status = DrsStatus::converged;
      r.polished = true;
      break;
    }
    z_prev = z;
  }
  r.z = sets.unstack(z);
  r.xi = sets.unstack(xi);
  r.s2_residual = sets.s2_residual(r.z);
  return r;
}

}  // namespace p2pm
