#pragma once

#include "p2pm/types.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2pm {

/// x_a^2 + x_b^2 <= radius^2.
struct DiskConstraint {
  int a = 0;
  int b = 0;
  double radius = 0.0;
};

/// minimize 0.5 x'Px + q'x  s.t.  A_eq x = b_eq,  lo <= x <= hi,  disks.
/// P is stored in full (both triangles). Bounds may be +-infinity.
struct QpProblem {
  SparseMatrix P;
  Vector q;
  SparseMatrix A_eq;
  Vector b_eq;
  Vector lo;
  Vector hi;
  std::vector<DiskConstraint> disks;

  /// Empty problem over n free variables.
  static QpProblem free(int n);

  int num_variables() const { return static_cast<int>(q.size()); }
  int num_equalities() const { return static_cast<int>(b_eq.size()); }
  double objective(const Vector& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }
  void validate() const;
};

enum class QpStatus { solved, max_iter, infeasible_detected };

std::string to_string(QpStatus status);

struct QpSolution {
  Vector x;
  /// Multipliers with the convention P x + q + A_eq' y_eq + y_bound + D' y_disk = 0.
  Vector y_eq;
  Vector y_bound;
  Vector y_disk;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::max_iter;
  bool polished = false;
};

struct QpSettings {
  double tol = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double relaxation = 1.6;
  bool adaptive_rho = true;
  /// Rho is frozen after this many changes; repeated changes can stall ADMM.
  int max_rho_updates = 5;
  int check_interval = 10;
  bool polish = true;
  /// Residual level at which an active-set polish is attempted.
  double polish_trigger = 1e-3;
  double infeasibility_tol = 1e-5;
  /// Ruiz equilibration passes applied before solving; 0 disables scaling.
  int scaling_iters = 10;
};

/// ADMM solver over the splitting (equality-constrained quadratic) x
/// (box and disk constraints). The KKT factorization is computed once and
/// refreshed numerically when the penalty changes; only the linear term may
/// be updated between solves. Consecutive solves warm start from the
/// previous iterate and retry the previous active set first.
class QpSolver {
 public:
  explicit QpSolver(QpProblem problem, QpSettings settings = {});
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;

  const QpProblem& problem() const { return problem_; }
  const QpSettings& settings() const { return settings_; }

  void update_linear(const Vector& q);
  /// Solve from the stored iterate (zeros on the first call).
  QpSolution solve();
  /// Solve from primal start x0; multipliers restart at zero.
  QpSolution solve(const Vector& x0);

 private:
  struct Workspace;
  QpProblem problem_;
  QpSettings settings_;
  std::unique_ptr<Workspace> ws_;
};

QpSolution solve(const QpProblem& problem, const QpSettings& settings = {},
                 const Vector* x0 = nullptr);

/// Adds (1 / (2 alpha)) ||x_S - center||^2 on the leading center.size() variables.
QpProblem with_prox(const QpProblem& problem, const Vector& center, double alpha);

/// argmin of the problem objective plus the proximal term over its feasible set.
QpSolution prox_quadratic(const QpProblem& problem, const Vector& center, double alpha,
                          const QpSettings& settings = {});

/// coeff * |x_index| added to a problem objective.
struct AbsTerm {
  int index = 0;
  double coeff = 0.0;
};

/// Result of splitting every |t| into t+ + t- with t = t+ - t-, t+- >= 0.
/// The positive part keeps the original slot; negative parts are appended.
struct AbsReformulation {
  QpProblem problem;
  int original_size = 0;
  std::vector<AbsTerm> terms;

  Vector recover(const Vector& x_ext) const;
  Vector lift(const Vector& x_orig) const;
  /// Linear term of the extended problem for a new original linear term.
  Vector map_linear(const Vector& q_orig) const;
};

AbsReformulation abs_reformulate(const QpProblem& base, std::span<const AbsTerm> terms);

}  // namespace p2pm
