#pragma once

#include "p2pm/model.hpp"

#include <Eigen/SparseCholesky>

namespace p2pm {

/// Splits the operator's feasible set into S1 (angle/voltage boxes, exchange
/// pattern, line disks) and S2 (the linear flow equations). S2 is handled in
/// graph form f = M w with w = (theta, v) and f = (p_l, q_l), so its
/// projection only needs the SPD matrix I + M'M, factored once.
class GridSets {
 public:
  GridSets(const Scenario& s, bool enforce_line_limits);
  explicit GridSets(const Scenario& s) : GridSets(s, s.defaults().enforce_line_limits) {}

  int buses() const { return buses_; }
  int arcs() const { return arcs_; }
  int horizon() const { return horizon_; }
  bool enforce_line_limits() const { return enforce_lines_; }

  GridDecision project_s1(const GridDecision& u) const;
  GridDecision project_s2(const GridDecision& u) const;
  void project_s1_inplace(GridDecision& u) const;
  void project_s2_inplace(GridDecision& u) const;

  /// Infinity-norm residual of the flow equations.
  double s2_residual(const GridDecision& u) const;
  /// Infinity-norm distance of u from S1.
  double s1_residual(const GridDecision& u) const;

  /// Stacked per-step layout used by the splitting loop: rows theta, v,
  /// p_tg, p_l, q_l; one column per step.
  Matrix stack(const GridDecision& u) const;
  GridDecision unstack(const Matrix& x) const;
  void project_s1_stacked(Matrix& x) const;
  /// Projection onto S2 intersected with the pinned angle/voltage
  /// coordinates (buses whose box has zero width). S1 already enforces those
  /// pins, so the intersection with S1 is unchanged.
  void project_s2_pinned_stacked(Matrix& x) const;

  /// Exact projection of each column of target, assuming the active boxes
  /// and line disks are those of the splitting iterate z. Succeeds only when
  /// the resulting point satisfies the full optimality conditions; on
  /// success z_out holds the projection and xi_out a matching fixed point of
  /// the splitting iteration.
  bool polish_stacked(const Matrix& target, const Matrix& z, const Matrix& xi, Matrix& z_out, Matrix& xi_out) const;

  /// Flow operator M, (2 * arcs) x (2 * buses).
  const SparseMatrix& flow_operator() const { return M_; }
  double arc_capacity(int a) const { return capacity_(a); }
  int arc_tail(int a) const { return arc_tail_[a]; }

 private:
  int buses_ = 0;
  int arcs_ = 0;
  int horizon_ = 0;
  bool enforce_lines_ = true;
  Vector theta_lo_, theta_hi_, v_lo_, v_hi_;
  std::vector<bool> grid_bus_;
  std::vector<int> arc_tail_;
  Vector capacity_;
  SparseMatrix M_;
  SparseMatrix Mt_;
  Eigen::SimplicialLLT<SparseMatrix> normal_;
  std::vector<int> free_w_;
  std::vector<int> pinned_w_;
  Vector pinned_value_;
  SparseMatrix M_free_;
  SparseMatrix M_free_t_;
  Vector pinned_flow_;
  Eigen::SimplicialLLT<SparseMatrix> normal_free_;
  Matrix M_dense_;
};

struct DrsConfig {
  double eta = 1.0;
  double tol = 1e-9;
  int max_iter = 200000;
  /// Attempt an active-set finish every this many iterations; 0 disables it.
  int polish_interval = 50;
};

enum class DrsStatus { converged, max_iter };

struct DrsResult {
  GridDecision z;
  /// Final governing sequence; can seed the next call.
  GridDecision xi;
  int iterations = 0;
  DrsStatus status = DrsStatus::max_iter;
  double step = 0.0;
  double s2_residual = 0.0;
  bool polished = false;
};

/// Best approximation of u in S1 n S2 by Douglas-Rachford splitting. The
/// governing sequence starts at xi0 when given, else at u.
DrsResult project_grid_feasible(const GridSets& sets, const GridDecision& u, const DrsConfig& cfg = {},
                                const GridDecision* xi0 = nullptr);

}  // namespace p2pm
