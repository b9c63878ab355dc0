#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pm {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Thrown when inputs violate a documented precondition or invariant.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a problem is certified infeasible.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an iterate becomes non-finite or a solver fails numerically.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strategy u_i of one prosumer. Trades are keyed by neighbor index.
template <typename Scalar>
struct ProsumerDecisionT {
  VectorX<Scalar> p_di;
  VectorX<Scalar> p_ch;
  VectorX<Scalar> p_ds;
  VectorX<Scalar> p_mg;
  std::map<int, VectorX<Scalar>> p_tr;

  static ProsumerDecisionT zeros(int horizon, const std::vector<int>& neighbors) {
    ProsumerDecisionT d;
    d.p_di = VectorX<Scalar>::Zero(horizon);
    d.p_ch = VectorX<Scalar>::Zero(horizon);
    d.p_ds = VectorX<Scalar>::Zero(horizon);
    d.p_mg = VectorX<Scalar>::Zero(horizon);
    for (int j : neighbors) d.p_tr.emplace(j, VectorX<Scalar>::Zero(horizon));
    return d;
  }

  template <typename Other>
  ProsumerDecisionT<Other> cast() const {
    ProsumerDecisionT<Other> d;
    d.p_di = p_di.template cast<Other>();
    d.p_ch = p_ch.template cast<Other>();
    d.p_ds = p_ds.template cast<Other>();
    d.p_mg = p_mg.template cast<Other>();
    for (const auto& [j, t] : p_tr) d.p_tr.emplace(j, t.template cast<Other>());
    return d;
  }
};

/// Strategy u_{N+1} of the network operator. Bus quantities are (buses x H);
/// arc quantities are (2 * lines x H) with arc 2l = (from, to) and
/// arc 2l + 1 = (to, from) of line l.
template <typename Scalar>
struct GridDecisionT {
  MatrixX<Scalar> theta;
  MatrixX<Scalar> v;
  MatrixX<Scalar> p_tg;
  MatrixX<Scalar> p_l;
  MatrixX<Scalar> q_l;

  static GridDecisionT zeros(int buses, int lines, int horizon) {
    GridDecisionT g;
    g.theta = MatrixX<Scalar>::Zero(buses, horizon);
    g.v = MatrixX<Scalar>::Zero(buses, horizon);
    g.p_tg = MatrixX<Scalar>::Zero(buses, horizon);
    g.p_l = MatrixX<Scalar>::Zero(2 * lines, horizon);
    g.q_l = MatrixX<Scalar>::Zero(2 * lines, horizon);
    return g;
  }

  int buses() const { return static_cast<int>(theta.rows()); }
  int arcs() const { return static_cast<int>(p_l.rows()); }
  int horizon() const { return static_cast<int>(theta.cols()); }
};

using ProsumerDecision = ProsumerDecisionT<double>;
using GridDecision = GridDecisionT<double>;

/// Complete decision profile: all prosumers plus the network operator.
struct Profile {
  std::vector<ProsumerDecision> prosumers;
  GridDecision grid;
};

// Elementwise helpers on decisions; all operands must share the same layout.

template <typename Scalar>
GridDecisionT<Scalar> operator+(const GridDecisionT<Scalar>& a, const GridDecisionT<Scalar>& b) {
  return {a.theta + b.theta, a.v + b.v, a.p_tg + b.p_tg, a.p_l + b.p_l, a.q_l + b.q_l};
}

template <typename Scalar>
GridDecisionT<Scalar> operator-(const GridDecisionT<Scalar>& a, const GridDecisionT<Scalar>& b) {
  return {a.theta - b.theta, a.v - b.v, a.p_tg - b.p_tg, a.p_l - b.p_l, a.q_l - b.q_l};
}

template <typename Scalar>
GridDecisionT<Scalar> operator*(Scalar s, const GridDecisionT<Scalar>& a) {
  return {s * a.theta, s * a.v, s * a.p_tg, s * a.p_l, s * a.q_l};
}

template <typename Scalar>
Scalar max_abs(const GridDecisionT<Scalar>& g) {
  Scalar m(0);
  for (const auto* block : {&g.theta, &g.v, &g.p_tg, &g.p_l, &g.q_l}) {
    if (block->size() > 0) m = std::max(m, block->cwiseAbs().maxCoeff());
  }
  return m;
}

template <typename Scalar>
Scalar squared_norm(const GridDecisionT<Scalar>& g) {
  return g.theta.squaredNorm() + g.v.squaredNorm() + g.p_tg.squaredNorm() + g.p_l.squaredNorm() +
         g.q_l.squaredNorm();
}

/// Stacks a grid decision as theta, v, p_tg, p_l, q_l (each column-major).
Vector flatten(const GridDecision& g);
GridDecision unflatten_grid(const Vector& x, int buses, int arcs, int horizon);

double max_abs_difference(const ProsumerDecision& a, const ProsumerDecision& b);
double max_abs_difference(const Profile& a, const Profile& b);

}  // namespace p2pm
