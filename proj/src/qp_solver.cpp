#include "p2pm/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Ldlt = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Row classes of the stacked constraint matrix.
enum RowState : signed char { kInactive = 0, kLower = 1, kUpper = 2, kFixed = 3 };

}  // namespace

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::solved: return "solved";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible_detected: return "infeasible_detected";
  }
  return "unknown";
}

QpProblem QpProblem::free(int n) {
  QpProblem p;
  p.P = SparseMatrix(n, n);
  p.q = Vector::Zero(n);
  p.A_eq = SparseMatrix(0, n);
  p.b_eq = Vector(0);
  p.lo = Vector::Constant(n, -kInf);
  p.hi = Vector::Constant(n, kInf);
  return p;
}

void QpProblem::validate() const {
  const int n = num_variables();
  if (P.rows() != n || P.cols() != n) throw ModelError("QpProblem: P dimension mismatch");
  if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) throw ModelError("QpProblem: A_eq dimension mismatch");
  if (lo.size() != n || hi.size() != n) throw ModelError("QpProblem: bound dimension mismatch");
  if ((lo.array() > hi.array()).any()) throw ModelError("QpProblem: lo > hi");
  const SparseMatrix asym = SparseMatrix(P.transpose()) - P;
  for (int k = 0; k < asym.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(asym, k); it; ++it)
      if (std::abs(it.value()) > 1e-12) throw ModelError("QpProblem: P is not symmetric");
  for (const auto& d : disks) {
    if (d.radius <= 0.0) throw ModelError("QpProblem: disk radius must be > 0");
    if (d.a < 0 || d.b < 0 || d.a >= n || d.b >= n || d.a == d.b) throw ModelError("QpProblem: bad disk indices");
  }
}

struct QpSolver::Workspace {
  int n = 0;
  int m_eq = 0;
  int m_box = 0;
  int m_disk = 0;
  int m_lin = 0;  // eq + box rows
  int m = 0;

  // Scaled data: x = D xs, constraint rows scaled by E, cost by c.
  SparseMatrix A;
  Vector l;
  Vector u;
  SparseMatrix P;
  Vector q;
  std::vector<int> box_var;
  std::vector<double> disk_radius;
  std::vector<int> disk_var;
  Vector D;
  Vector E;
  double c = 1.0;

  // Unscaled stacked constraints, for residuals and certificates.
  SparseMatrix A_raw;
  Vector l_raw;
  Vector u_raw;
  std::vector<double> radius_raw;

  double rho = 0.1;
  Vector rho_vec;
  SparseMatrix kkt;
  std::vector<double*> kkt_rho_diag;
  Ldlt ldlt;

  Vector x, z, y;

  // Polishing cache keyed by the active set.
  std::vector<signed char> polish_key;
  std::unique_ptr<Ldlt> polish_ldlt;
  SparseMatrix polish_A;
  SparseMatrix polish_kkt_exact;
  std::vector<int> polish_rows;
  bool polish_key_valid = false;
  bool polish_key_failed = false;
  std::vector<signed char> last_good_active;

  static constexpr double kPolishDelta = 1e-7;

  void build(const QpProblem& p, const QpSettings& s) {
    n = p.num_variables();
    m_eq = p.num_equalities();
    for (int k = 0; k < n; ++k)
      if (std::isfinite(p.lo(k)) || std::isfinite(p.hi(k))) box_var.push_back(k);
    m_box = static_cast<int>(box_var.size());
    m_disk = 2 * static_cast<int>(p.disks.size());
    m_lin = m_eq + m_box;
    m = m_lin + m_disk;

    std::vector<Triplet> t;
    t.reserve(p.A_eq.nonZeros() + m_box + m_disk);
    for (int k = 0; k < p.A_eq.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.A_eq, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    l.resize(m_lin);
    u.resize(m_lin);
    l.head(m_eq) = p.b_eq;
    u.head(m_eq) = p.b_eq;
    for (int r = 0; r < m_box; ++r) {
      t.emplace_back(m_eq + r, box_var[r], 1.0);
      l(m_eq + r) = p.lo(box_var[r]);
      u(m_eq + r) = p.hi(box_var[r]);
    }
    for (std::size_t d = 0; d < p.disks.size(); ++d) {
      t.emplace_back(m_lin + 2 * d, p.disks[d].a, 1.0);
      t.emplace_back(m_lin + 2 * d + 1, p.disks[d].b, 1.0);
      disk_radius.push_back(p.disks[d].radius);
      disk_var.push_back(p.disks[d].a);
      disk_var.push_back(p.disks[d].b);
    }
    A_raw.resize(m, n);
    A_raw.setFromTriplets(t.begin(), t.end());
    A_raw.makeCompressed();
    l_raw = l;
    u_raw = u;
    radius_raw = disk_radius;
    equilibrate(p, s.scaling_iters);

    rho = s.rho;
    rho_vec.resize(m);
    set_rho_vec();

    // Lower triangle of [P + sigma I, A'; A, -diag(1/rho)].
    std::vector<Triplet> k;
    k.reserve(p.P.nonZeros() + n + A.nonZeros() + m);
    for (int c = 0; c < P.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(P, c); it; ++it)
        if (it.row() > it.col()) k.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n; ++i) k.emplace_back(i, i, P.coeff(i, i) + s.sigma);
    for (int c = 0; c < A.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(A, c); it; ++it) k.emplace_back(n + it.row(), it.col(), it.value());
    for (int r = 0; r < m; ++r) k.emplace_back(n + r, n + r, -1.0 / rho_vec(r));
    kkt.resize(n + m, n + m);
    kkt.setFromTriplets(k.begin(), k.end());
    kkt.makeCompressed();
    kkt_rho_diag.resize(m);
    for (int r = 0; r < m; ++r) kkt_rho_diag[r] = &kkt.coeffRef(n + r, n + r);
    ldlt.analyzePattern(kkt);
    factorize();

    x = Vector::Zero(n);
    z = Vector::Zero(m);
    y = Vector::Zero(m);
  }

  // Ruiz equilibration of [P A'; A 0]. Both coordinates of a disk share
  // one column factor and both disk rows one row factor, so disks stay disks.
  void equilibrate(const QpProblem& p, int passes) {
    P = p.P;
    A = A_raw;
    D = Vector::Ones(n);
    E = Vector::Ones(m);
    auto clamp_scale = [](double v) { return std::clamp(v, 1e-4, 1e4); };
    for (int pass = 0; pass < passes; ++pass) {
      Vector col = Vector::Zero(n);
      Vector row = Vector::Zero(m);
      for (int k = 0; k < P.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(P, k); it; ++it) col(k) = std::max(col(k), std::abs(it.value()));
      for (int k = 0; k < A.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
          col(k) = std::max(col(k), std::abs(it.value()));
          row(it.row()) = std::max(row(it.row()), std::abs(it.value()));
        }
      Vector dc(n), dr(m);
      for (int k = 0; k < n; ++k) dc(k) = col(k) > 0.0 ? clamp_scale(1.0 / std::sqrt(col(k))) : 1.0;
      for (int r = 0; r < m; ++r) dr(r) = row(r) > 0.0 ? clamp_scale(1.0 / std::sqrt(row(r))) : 1.0;
      for (int d = 0; d < m_disk / 2; ++d) {
        const int r = m_lin + 2 * d;
        const int a = pair_var(r), b = pair_var(r + 1);
        const double sc = std::sqrt(dc(a) * dc(b));
        dc(a) = dc(b) = sc;
        const double sr = std::sqrt(dr(r) * dr(r + 1));
        dr(r) = dr(r + 1) = sr;
      }
      P = dc.asDiagonal() * P * dc.asDiagonal();
      A = dr.asDiagonal() * A * dc.asDiagonal();
      D = D.cwiseProduct(dc);
      E = E.cwiseProduct(dr);
    }
    // A variable in two disks could break the pairing; undo scaling then.
    for (int d = 0; d < m_disk / 2; ++d) {
      const int r = m_lin + 2 * d;
      if (D(pair_var(r)) != D(pair_var(r + 1)) || E(r) != E(r + 1)) {
        P = p.P;
        A = A_raw;
        D.setOnes();
        E.setOnes();
        break;
      }
    }
    double pcol = 0.0;
    for (int k = 0; k < P.outerSize(); ++k) {
      double mx = 0.0;
      for (SparseMatrix::InnerIterator it(P, k); it; ++it) mx = std::max(mx, std::abs(it.value()));
      pcol += mx;
    }
    pcol = n > 0 ? pcol / n : 0.0;
    const double qn = inf_norm(D.cwiseProduct(p.q));
    const double cost_norm = std::max(pcol, qn);
    c = passes > 0 && cost_norm > 0.0 ? std::clamp(1.0 / cost_norm, 1e-4, 1e4) : 1.0;
    P *= c;
    A.makeCompressed();
    P.makeCompressed();
    set_linear(p.q);
    for (int r = 0; r < m_lin; ++r) {
      l(r) = std::isfinite(l_raw(r)) ? E(r) * l_raw(r) : l_raw(r);
      u(r) = std::isfinite(u_raw(r)) ? E(r) * u_raw(r) : u_raw(r);
    }
    for (int d = 0; d < m_disk / 2; ++d) disk_radius[d] = E(m_lin + 2 * d) * radius_raw[d];
  }

  // Variable behind disk row r.
  int pair_var(int r) const { return disk_var[r - m_lin]; }

  void set_linear(const Vector& q_raw) { q = c * D.cwiseProduct(q_raw); }

  // Unscaled residuals of a scaled iterate.
  double unscaled_primal(const Vector& ax_minus_z) const { return inf_norm(ax_minus_z.cwiseQuotient(E)); }
  double unscaled_dual(const Vector& grad) const { return inf_norm(grad.cwiseQuotient(D)) / c; }

  void set_rho_vec() {
    for (int r = 0; r < m; ++r) {
      const bool fixed = r < m_lin && l(r) == u(r);
      rho_vec(r) = fixed ? 1e3 * rho : rho;
    }
  }

  void factorize() {
    for (int r = 0; r < m; ++r) *kkt_rho_diag[r] = -1.0 / rho_vec(r);
    ldlt.factorize(kkt);
    if (ldlt.info() != Eigen::Success) throw ModelError("QpSolver: KKT factorization failed");
  }

  void project(Vector& v) const {
    for (int r = 0; r < m_lin; ++r) v(r) = std::clamp(v(r), l(r), u(r));
    for (int d = 0; d < m_disk / 2; ++d) {
      const int r = m_lin + 2 * d;
      const double norm = std::hypot(v(r), v(r + 1));
      if (norm > disk_radius[d]) {
        const double s = disk_radius[d] / norm;
        v(r) *= s;
        v(r + 1) *= s;
      }
    }
  }

  // Constraint violation of an unscaled point ax = A_raw x.
  double primal_violation(const Vector& ax) const {
    double viol = 0.0;
    for (int r = 0; r < m_lin; ++r) viol = std::max({viol, l_raw(r) - ax(r), ax(r) - u_raw(r)});
    for (int d = 0; d < m_disk / 2; ++d) {
      const int r = m_lin + 2 * d;
      viol = std::max(viol, std::hypot(ax(r), ax(r + 1)) - radius_raw[d]);
    }
    return viol;
  }

  // dy_scaled is a change of the scaled multipliers.
  bool certify_infeasible(const Vector& dy_scaled, double eps) const {
    const Vector dy = E.cwiseProduct(dy_scaled);
    const double norm = inf_norm(dy);
    if (norm < 1e-12) return false;
    if (inf_norm(A_raw.transpose() * dy) > eps * norm) return false;
    double support = 0.0;
    for (int r = 0; r < m_lin; ++r) {
      if (dy(r) > 0.0) {
        if (!std::isfinite(u_raw(r))) return false;
        support += u_raw(r) * dy(r);
      } else if (dy(r) < 0.0) {
        if (!std::isfinite(l_raw(r))) return false;
        support += l_raw(r) * dy(r);
      }
    }
    for (int d = 0; d < m_disk / 2; ++d) {
      const int r = m_lin + 2 * d;
      support += radius_raw[d] * std::hypot(dy(r), dy(r + 1));
    }
    return support < -eps * norm;
  }

  std::vector<signed char> guess_active() const {
    std::vector<signed char> state(m_lin, kInactive);
    for (int r = 0; r < m_lin; ++r) {
      if (l(r) == u(r))
        state[r] = kFixed;
      else if (z(r) - l(r) < -y(r))
        state[r] = kLower;
      else if (u(r) - z(r) < y(r))
        state[r] = kUpper;
    }
    return state;
  }

  bool disks_inactive() const {
    for (int d = 0; d < m_disk / 2; ++d) {
      const int r = m_lin + 2 * d;
      if (std::hypot(z(r), z(r + 1)) >= disk_radius[d] * (1.0 - 1e-9) || y(r) != 0.0 || y(r + 1) != 0.0)
        return false;
    }
    return true;
  }

  // Solves the equality-constrained problem on the guessed active set. On
  // success x, z, y hold the polished point.
  bool polish(const std::vector<signed char>& key, double tol, double& prim, double& dual) {
    if (!disks_inactive()) return false;
    if (!polish_key_valid || key != polish_key) {
      polish_rows.clear();
      for (int r = 0; r < m_lin; ++r)
        if (key[r] != kInactive) polish_rows.push_back(r);
      const int na = static_cast<int>(polish_rows.size());
      std::vector<int> row_pos(m_lin, -1);
      for (int k = 0; k < na; ++k) row_pos[polish_rows[k]] = k;
      std::vector<Triplet> ta;
      for (int c = 0; c < A.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(A, c); it; ++it)
          if (it.row() < m_lin && row_pos[it.row()] >= 0) ta.emplace_back(row_pos[it.row()], it.col(), it.value());
      polish_A.resize(na, n);
      polish_A.setFromTriplets(ta.begin(), ta.end());

      std::vector<Triplet> k;
      std::vector<Triplet> kx;
      for (int c = 0; c < P.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(P, c); it; ++it) {
          kx.emplace_back(it.row(), it.col(), it.value());
          if (it.row() >= it.col()) k.emplace_back(it.row(), it.col(), it.value());
        }
      for (int i = 0; i < n; ++i) k.emplace_back(i, i, kPolishDelta);
      for (const auto& tr : ta) {
        k.emplace_back(n + tr.row(), tr.col(), tr.value());
        kx.emplace_back(n + tr.row(), tr.col(), tr.value());
        kx.emplace_back(tr.col(), n + tr.row(), tr.value());
      }
      for (int r = 0; r < na; ++r) k.emplace_back(n + r, n + r, -kPolishDelta);
      SparseMatrix kreg(n + na, n + na);
      kreg.setFromTriplets(k.begin(), k.end());
      polish_kkt_exact.resize(n + na, n + na);
      polish_kkt_exact.setFromTriplets(kx.begin(), kx.end());
      polish_ldlt = std::make_unique<Ldlt>();
      polish_ldlt->compute(kreg);
      polish_key = key;
      polish_key_valid = true;
      polish_key_failed = false;
      if (polish_ldlt->info() != Eigen::Success) {
        polish_key_failed = true;
        return false;
      }
    } else if (polish_key_failed) {
      return false;
    }

    const int na = static_cast<int>(polish_rows.size());
    Vector rhs(n + na);
    rhs.head(n) = -q;
    for (int k = 0; k < na; ++k) {
      const int r = polish_rows[k];
      rhs(n + k) = key[r] == kUpper ? u(r) : l(r);
    }
    Vector sol = polish_ldlt->solve(rhs);
    for (int it = 0; it < 8; ++it) {
      const Vector res = rhs - polish_kkt_exact * sol;
      if (inf_norm(res) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += polish_ldlt->solve(res);
    }
    if (!sol.allFinite()) return false;

    Vector xp = sol.head(n);
    Vector yp = Vector::Zero(m);
    for (int k = 0; k < na; ++k) yp(polish_rows[k]) = sol(n + k);

    const Vector ax = A * xp;
    prim = std::max(0.0, primal_violation(ax.cwiseQuotient(E)));
    dual = unscaled_dual(P * xp + q + A.transpose() * yp);
    bool signs_ok = true;
    for (int k = 0; k < na; ++k) {
      const int r = polish_rows[k];
      if (key[r] == kLower && yp(r) > tol) signs_ok = false;
      if (key[r] == kUpper && yp(r) < -tol) signs_ok = false;
    }
    if (!(signs_ok && prim <= tol && dual <= tol)) {
      polish_key_failed = true;
      return false;
    }
    x = xp;
    z = ax;
    project(z);
    y = yp;
    last_good_active = key;
    return true;
  }
};

QpSolver::QpSolver(QpProblem problem, QpSettings settings)
    : problem_(std::move(problem)), settings_(settings), ws_(std::make_unique<Workspace>()) {
  problem_.validate();
  ws_->build(problem_, settings_);
}

QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;

void QpSolver::update_linear(const Vector& q) {
  if (q.size() != problem_.num_variables()) throw ModelError("QpSolver::update_linear: size mismatch");
  problem_.q = q;
  ws_->set_linear(q);
}

QpSolution QpSolver::solve(const Vector& x0) {
  if (x0.size() != problem_.num_variables()) throw ModelError("QpSolver::solve: start size mismatch");
  Workspace& w = *ws_;
  w.x = x0.cwiseQuotient(w.D);
  w.z = w.A * w.x;
  w.project(w.z);
  w.y.setZero();
  w.last_good_active.clear();
  return solve();
}

QpSolution QpSolver::solve() {
  Workspace& w = *ws_;
  const QpProblem& p = problem_;
  const QpSettings& s = settings_;
  const int n = w.n;
  const int m = w.m;

  auto finish = [&](QpStatus status, int iters, double prim, double dual, bool polished) {
    QpSolution sol;
    sol.x = w.D.cwiseProduct(w.x);
    const Vector y = w.E.cwiseProduct(w.y) / w.c;
    sol.y_eq = y.head(w.m_eq);
    sol.y_bound = Vector::Zero(n);
    for (int r = 0; r < w.m_box; ++r) sol.y_bound(w.box_var[r]) = y(w.m_eq + r);
    sol.y_disk = y.tail(w.m_disk);
    sol.objective = p.objective(sol.x);
    sol.primal_residual = prim;
    sol.dual_residual = dual;
    sol.iterations = iters;
    sol.status = status;
    sol.polished = polished;
    return sol;
  };

  double prim = 0.0;
  double dual = 0.0;
  if (s.polish && !w.last_good_active.empty()) {
    if (w.polish(w.last_good_active, s.tol, prim, dual)) return finish(QpStatus::solved, 0, prim, dual, true);
  }

  Vector rhs(n + m);
  Vector x_tilde(n);
  Vector z_tilde(m);
  Vector y_prev(m);
  const double alpha = s.relaxation;
  int rho_updates = 0;
  for (int iter = 1; iter <= s.max_iter; ++iter) {
    rhs.head(n) = s.sigma * w.x - w.q;
    rhs.tail(m) = w.z - w.y.cwiseQuotient(w.rho_vec);
    const Vector sol = w.ldlt.solve(rhs);
    x_tilde = sol.head(n);
    z_tilde = w.z + (sol.tail(m) - w.y).cwiseQuotient(w.rho_vec);
    w.x = alpha * x_tilde + (1.0 - alpha) * w.x;
    const Vector z_relaxed = alpha * z_tilde + (1.0 - alpha) * w.z;
    Vector z_next = z_relaxed + w.y.cwiseQuotient(w.rho_vec);
    w.project(z_next);
    y_prev = w.y;
    w.y += w.rho_vec.cwiseProduct(z_relaxed - z_next);
    w.z = std::move(z_next);

    if (iter % s.check_interval != 0 && iter != s.max_iter) continue;

    const Vector ax = w.A * w.x;
    const Vector px = w.P * w.x;
    const Vector aty = w.A.transpose() * w.y;
    prim = w.unscaled_primal(ax - w.z);
    dual = w.unscaled_dual(px + w.q + aty);
    if (prim <= s.tol && dual <= s.tol) return finish(QpStatus::solved, iter, prim, dual, false);

    if (w.certify_infeasible(w.y - y_prev, s.infeasibility_tol))
      return finish(QpStatus::infeasible_detected, iter, prim, dual, false);

    if (s.polish && prim <= s.polish_trigger && dual <= s.polish_trigger) {
      const auto key = w.guess_active();
      if (!(w.polish_key_valid && w.polish_key_failed && key == w.polish_key)) {
        const Vector x_keep = w.x, z_keep = w.z, y_keep = w.y;
        double pp = 0.0, pd = 0.0;
        if (w.polish(key, s.tol, pp, pd)) return finish(QpStatus::solved, iter, pp, pd, true);
        w.x = x_keep;
        w.z = z_keep;
        w.y = y_keep;
      }
    }

    if (s.adaptive_rho) {
      const double prim_scale = std::max({inf_norm(ax), inf_norm(w.z), 1e-10});
      const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(w.q), 1e-10});
      const double prim_s = inf_norm(ax - w.z);
      const double dual_s = inf_norm(px + w.q + aty);
      const double ratio = std::sqrt((prim_s / prim_scale) / std::max(dual_s / dual_scale, 1e-30));
      const double new_rho = std::clamp(w.rho * ratio, 1e-6, 1e6);
      if ((new_rho > 5.0 * w.rho || new_rho < 0.2 * w.rho) && rho_updates < s.max_rho_updates) {
        ++rho_updates;
        w.rho = new_rho;
        w.set_rho_vec();
        w.factorize();
      }
    }
  }
  return finish(QpStatus::max_iter, s.max_iter, prim, dual, false);
}

QpSolution solve(const QpProblem& problem, const QpSettings& settings, const Vector* x0) {
  QpSolver solver(problem, settings);
  return x0 ? solver.solve(*x0) : solver.solve();
}

QpProblem with_prox(const QpProblem& problem, const Vector& center, double alpha) {
  if (!(alpha > 0.0)) throw ModelError("with_prox: alpha must be > 0");
  if (center.size() > problem.num_variables()) throw ModelError("with_prox: center too long");
  QpProblem out = problem;
  SparseMatrix d(problem.num_variables(), problem.num_variables());
  std::vector<Triplet> t;
  for (int k = 0; k < center.size(); ++k) t.emplace_back(k, k, 1.0 / alpha);
  d.setFromTriplets(t.begin(), t.end());
  out.P = problem.P + d;
  out.q.head(center.size()) -= center / alpha;
  return out;
}

QpSolution prox_quadratic(const QpProblem& problem, const Vector& center, double alpha, const QpSettings& settings) {
  return solve(with_prox(problem, center, alpha), settings);
}

namespace {

// T maps extended variables to original ones: x = T x_ext.
SparseMatrix abs_lift_matrix(int n, std::span<const AbsTerm> terms) {
  std::vector<Triplet> t;
  for (int k = 0; k < n; ++k) t.emplace_back(k, k, 1.0);
  for (std::size_t k = 0; k < terms.size(); ++k) t.emplace_back(terms[k].index, n + static_cast<int>(k), -1.0);
  SparseMatrix T(n, n + static_cast<int>(terms.size()));
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

}  // namespace

AbsReformulation abs_reformulate(const QpProblem& base, std::span<const AbsTerm> terms) {
  base.validate();
  const int n = base.num_variables();
  const int k = static_cast<int>(terms.size());
  std::vector<bool> seen(n, false);
  for (const auto& term : terms) {
    if (term.index < 0 || term.index >= n) throw ModelError("abs_reformulate: index out of range");
    if (term.coeff < 0.0) throw ModelError("abs_reformulate: absolute-value coefficient must be >= 0");
    if (seen[term.index]) throw ModelError("abs_reformulate: duplicate absolute-value term");
    seen[term.index] = true;
  }
  for (const auto& d : base.disks)
    if (seen[d.a] || seen[d.b]) throw ModelError("abs_reformulate: disk on an absolute-value variable");

  const SparseMatrix T = abs_lift_matrix(n, terms);
  AbsReformulation out;
  out.original_size = n;
  out.terms.assign(terms.begin(), terms.end());
  QpProblem& p = out.problem;
  p.P = SparseMatrix(T.transpose() * base.P * T);
  p.A_eq = SparseMatrix(base.A_eq * T);
  p.b_eq = base.b_eq;
  p.lo.resize(n + k);
  p.hi.resize(n + k);
  p.lo.head(n) = base.lo;
  p.hi.head(n) = base.hi;
  for (int j = 0; j < k; ++j) {
    const int i = terms[j].index;
    const double lo = base.lo(i);
    const double hi = base.hi(i);
    p.lo(i) = std::max(lo, 0.0);
    p.hi(i) = std::max(hi, 0.0);
    p.lo(n + j) = std::max(-hi, 0.0);
    p.hi(n + j) = std::max(-lo, 0.0);
  }
  p.disks = base.disks;
  p.q = out.map_linear(base.q);
  return out;
}

Vector AbsReformulation::map_linear(const Vector& q_orig) const {
  const int n = original_size;
  const int k = static_cast<int>(terms.size());
  Vector q(n + k);
  q.head(n) = q_orig;
  for (int j = 0; j < k; ++j) {
    q(n + j) = -q_orig(terms[j].index) + terms[j].coeff;
    q(terms[j].index) += terms[j].coeff;
  }
  return q;
}

Vector AbsReformulation::recover(const Vector& x_ext) const {
  Vector x = x_ext.head(original_size);
  for (std::size_t j = 0; j < terms.size(); ++j) x(terms[j].index) -= x_ext(original_size + j);
  return x;
}

Vector AbsReformulation::lift(const Vector& x_orig) const {
  Vector x(original_size + terms.size());
  x.head(original_size) = x_orig;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const double t = x_orig(terms[j].index);
    x(terms[j].index) = std::max(t, 0.0);
    x(original_size + j) = std::max(-t, 0.0);
  }
  return x;
}

}  // namespace p2pm
