#pragma once

#include "p2pm/model.hpp"
#include "p2pm/projection.hpp"
#include "p2pm/qp_solver.hpp"

#include <map>
#include <memory>

namespace p2pm {

struct StepSizes {
  /// Per prosumer.
  Vector alpha;
  /// Per trade link, shared by both endpoints.
  Vector beta_tr;
  double alpha_dno = 0.0;
  double gamma_mg = 0.0;
  double beta_tg = 0.0;
  /// Per bus.
  Vector beta_pb;
};

/// Strict upper bounds on every step size.
StepSizes step_size_bounds(const Scenario& s);
/// Each step size set to safety * its bound.
StepSizes default_step_sizes(const Scenario& s, double safety);
/// Throws ModelError naming the first nonpositive or bound-violating entry.
void validate_step_sizes(const StepSizes& steps, const Scenario& s);

/// Operator broadcast at the end of an outer iteration.
struct Broadcast {
  Vector sigma_mg;
  /// [upper; lower] bound multipliers, length 2H.
  Vector lambda_mg;
  Vector mu_tg;
  /// Bus balance multipliers, (buses x H).
  Matrix mu_pb;
};

struct ProsumerState {
  int index = 0;
  ProsumerDecision u;
  /// Keyed by neighbor index.
  std::map<int, Vector> mu_tr;
  std::map<int, Vector> zeta_tr_prev;
  double alpha = 0.0;
  std::map<int, double> beta_tr;
};

ProsumerState initial_prosumer_state(const Scenario& s, int i, const StepSizes& steps);

/// Reflected residual step on the reciprocity multipliers. incoming maps
/// neighbor j to p^tr_(j,i)(k).
void prosumer_dual_update(ProsumerState& st, const std::map<int, Vector>& incoming);

/// Proximal centre psi_i; returned in decision layout.
ProsumerDecision assemble_prosumer_shift(const ProsumerState& st, const Broadcast& bc, const Scenario& s);

/// Cached proximal QP of one prosumer. Only the linear term changes between
/// outer iterations, so the solver and its factorizations are reused.
class ProsumerSubproblem {
 public:
  ProsumerSubproblem(const Scenario& s, int i, double alpha, GameMode mode, const QpSettings& settings = {});

  /// argmin J_i(xi, u_-i) + ||xi - psi||^2 / (2 alpha) over U_i. sigma_others
  /// is sum_{j != i} p^mg_j(k); in wardrop mode sigma_frozen is the broadcast
  /// aggregate used in place of the prosumer's own contribution.
  ProsumerDecision solve(const ProsumerDecision& psi, const Vector& sigma_others, const Vector& sigma_frozen);

  /// Same problem without the proximal term (best response), from scratch.
  ProsumerDecision best_response(const ProsumerDecision& linear_shift, const Vector& sigma_others,
                                 const Vector& sigma_frozen) const;

  int num_variables() const { return n_; }
  const QpSolution& last_solution() const { return last_; }

 private:
  Vector linear_term(const ProsumerDecision& psi, const Vector& sigma_others, const Vector& sigma_frozen,
                     bool prox) const;
  ProsumerDecision unpack(const Vector& x) const;
  Vector pack(const ProsumerDecision& d) const;

  const Scenario* s_;
  int i_;
  int H_;
  double alpha_;
  GameMode mode_;
  std::vector<int> neighbors_;
  int n_ = 0;
  int n_u_ = 0;
  QpProblem base_;
  Vector base_q_;
  AbsReformulation abs_;
  std::unique_ptr<QpSolver> solver_;
  QpSettings settings_;
  QpSolution last_;
};

/// u_i(k+1). sigma_k is the broadcast aggregate sigma^mg(k).
ProsumerDecision prosumer_primal_update(ProsumerState& st, const Broadcast& bc, ProsumerSubproblem& sub,
                                        const Scenario& s);

struct DnoState {
  GridDecision u;
  Vector lambda_mg;
  Vector mu_tg;
  Matrix mu_pb;
  Vector zeta_tg;
  Matrix zeta_pb;
  Vector sigma_mg;
  Vector sigma_tg;
  double alpha = 0.0;
  double gamma_mg = 0.0;
  double beta_tg = 0.0;
  Vector beta_pb;
  /// Governing sequence of the last projection, reused as a warm start.
  GridDecision drs_xi;
  bool has_drs_xi = false;
};

/// Zero multipliers; the grid decision is the projection of zero, and the
/// residual memories are evaluated at the given initial profile.
DnoState initial_dno_state(const Scenario& s, const GridSets& sets, const StepSizes& steps,
                           const std::vector<ProsumerDecision>& prosumers, const DrsConfig& drs = {});

Broadcast make_broadcast(const DnoState& st);

/// Operator primal step; returns the projection diagnostics.
DrsResult dno_primal_update(DnoState& st, const GridSets& sets, const DrsConfig& drs, bool warm_start);

/// Operator dual step given the new prosumer decisions.
void dno_dual_update(DnoState& st, const std::vector<ProsumerDecision>& prosumers, const Scenario& s);

}  // namespace p2pm
