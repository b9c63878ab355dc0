#include "support.hpp"

#include "p2pm/oracle.hpp"

#include <doctest.h>

using namespace p2pm;
using doctest::Approx;

TEST_CASE("zero demand gives the zero profile") {
  ScenarioData d = test::bare_market(3, 2, 0.0);
  d.trade_links = {{1, 2, 0.08, 30.0}, {2, 3, 0.08, 30.0}};
  d.prosumers[0].dispatchable = test::unit(2, 0.01, 0.045, 0.0, 5.0);
  const Scenario s(d);
  const VgneSolution sol = solve_vgne(s);
  CHECK(compare(sol.profile, zero_profile(s), s).power_distance() <= 1e-6);
  for (double c : sol.costs) CHECK(std::abs(c) <= 1e-6);
}

TEST_CASE("single grid-only prosumer") {
  ScenarioData d = test::bare_market(1, 1, 1.0);
  d.passive_consumers = {{2, Vector::Constant(1, 4.0)}};
  d.pricing.price_coeff.setConstant(0.05);
  const Scenario s(d);
  const VgneSolution sol = solve_vgne(s);
  CHECK(sol.profile.prosumers[0].p_mg(0) == Approx(1.0).epsilon(1e-7));
  CHECK(sol.costs[0] == Approx(0.05 * (1.0 + 4.0)).epsilon(1e-7));
  // Stationarity in p^mg: the constraint forces balance the marginal grid
  // price d (2 p + b) = 0.05 * 6.
  const PotentialProblem pp = build_potential(s);
  const int col = pp.prosumer_offset[0] + 3;
  const Vector force = pp.qp.A_eq.transpose() * sol.qp.y_eq;
  CHECK(-force(col) == Approx(0.05 * 6.0).epsilon(1e-6));
}

TEST_CASE("potential gradient equals the pseudo-gradient") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Scenario s = test::small_instance(3, 4, seed);
    Rng rng(seed + 100);
    for (int trial = 0; trial < 20; ++trial) {
      const auto u = test::random_prosumers(rng, s);
      const auto grad = potential_gradient(u, s);
      for (int i = 0; i < s.num_prosumers(); ++i) {
        const ProsumerDecision g = cost_gradient(i, u, s);
        const double scale = 1.0 + max_abs_difference(g, ProsumerDecision::zeros(4, s.neighbors(i)));
        CHECK(max_abs_difference(g, grad[i]) <= 1e-8 * scale);
      }
    }
  }
}

TEST_CASE("potential value matches the stacked problem") {
  const Scenario s = test::small_instance(3, 4, 2);
  const PotentialProblem pp = build_potential(s);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Profile p = zero_profile(s);
    p.prosumers = test::random_prosumers(rng, s);
    const Vector x = pp.pack(p, s);
    CHECK(pp.value(x) == Approx(potential_value(p.prosumers, s)).epsilon(1e-10));
  }
}

TEST_CASE("single agent: the potential is the agent's cost up to a constant") {
  ScenarioData d = test::bare_market(1, 2, 2.0);
  d.prosumers[0].dispatchable = test::unit(2, 0.03, 0.05, 0.0, 4.0);
  d.passive_consumers = {{1, Vector{{3.0, 1.0}}}};
  const Scenario s(d);
  Rng rng(9);
  auto u = test::random_prosumers(rng, s);
  const double base = potential_value(u, s) - eval_total_cost<double>(0, u, s);
  for (int trial = 0; trial < 10; ++trial) {
    u = test::random_prosumers(rng, s);
    CHECK(potential_value(u, s) - eval_total_cost<double>(0, u, s) == Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("oracle solution is feasible and variationally optimal") {
  SmallInstanceOptions o;
  o.prosumers = 3;
  o.horizon = 4;
  ScenarioData d = random_small_instance(o, 14);
  // The tariff makes the pseudo-gradient set-valued at zero trades; drop it
  // so the variational inequality can be sampled with a plain gradient.
  d.pricing.tariff = 0.0;
  const Scenario s(d);
  const VgneSolution sol = solve_vgne(s);
  for (int i = 0; i < 3; ++i) CHECK(local_residuals(i, sol.profile.prosumers[i], s).max() <= 1e-6);
  CHECK(coupling_residuals(sol.profile, s).max() <= 1e-6);
  CHECK(grid_residuals(sol.profile.grid, s).max() <= 1e-6);

  std::vector<ProsumerDecision> F;
  for (int i = 0; i < 3; ++i) F.push_back(cost_gradient(i, sol.profile.prosumers, s));
  // Feasible points of the joint set: minimizers of random linear objectives.
  PotentialProblem pp = build_potential(s);
  Rng rng(15);
  QpSettings st = default_oracle_settings();
  st.tol = 1e-8;
  int sampled = 0;
  for (int k = 0; k < 100; ++k) {
    QpProblem lp = pp.qp;
    lp.P = SparseMatrix(lp.P.rows(), lp.P.cols());
    std::vector<Triplet> t;
    for (int c = 0; c < lp.P.rows(); ++c) t.emplace_back(c, c, 1e-2);
    lp.P.setFromTriplets(t.begin(), t.end());
    lp.q = test::random_vector(rng, lp.num_variables(), -1, 1);
    const QpSolution w = solve(lp, st);
    if (w.status != QpStatus::solved) continue;
    ++sampled;
    const Profile pw = pp.unpack(w.x, s);
    double ip = 0.0;
    for (int i = 0; i < 3; ++i) {
      const ProsumerDecision& a = pw.prosumers[i];
      const ProsumerDecision& b = sol.profile.prosumers[i];
      ip += (a.p_di - b.p_di).dot(F[i].p_di) + (a.p_ch - b.p_ch).dot(F[i].p_ch) +
            (a.p_ds - b.p_ds).dot(F[i].p_ds) + (a.p_mg - b.p_mg).dot(F[i].p_mg);
      for (const auto& [j, x] : a.p_tr) ip += (x - b.p_tr.at(j)).dot(F[i].p_tr.at(j));
    }
    CHECK(ip >= -1e-6);
  }
  CHECK(sampled >= 90);
}

TEST_CASE("compare") {
  const Scenario s = test::small_instance(3, 2, 4);
  Profile a = zero_profile(s);
  const ComparisonReport same = compare(a, a, s);
  CHECK(same.power_distance() == 0.0);
  CHECK(same.max_cost_gap() == 0.0);

  Profile b = a;
  const int j = s.neighbors(0).front();
  b.prosumers[0].p_tr[j](1) = 1.0;
  const ComparisonReport one = compare(a, b, s);
  CHECK(one.p_tr == 1.0);
  CHECK(one.p_mg == 0.0);
  CHECK(one.power_distance() == 1.0);
  const ComparisonReport back = compare(b, a, s);
  CHECK(back.p_tr == one.p_tr);

  Profile c = a;
  c.prosumers.pop_back();
  CHECK_THROWS_AS(compare(a, c, s), ModelError);
}

TEST_CASE("report documents compare like profiles") {
  const Scenario s = test::small_instance(3, 2, 4);
  const VgneSolution sol = solve_vgne(s);
  const nlohmann::json a = oracle_to_json(sol, s);
  CHECK(compare_reports(a, a).power_distance() == 0.0);
  VgneSolution shifted = sol;
  const int j = s.neighbors(1).front();
  shifted.profile.prosumers[1].p_tr[j](0) += 0.25;
  const ComparisonReport r = compare_reports(a, oracle_to_json(shifted, s));
  CHECK(r.p_tr == Approx(0.25));
  nlohmann::json broken = a;
  broken["prosumers"].erase(0);
  CHECK_THROWS_AS(compare_reports(a, broken), ModelError);
}

TEST_CASE("infeasible scenarios are reported") {
  ScenarioData d = test::bare_market(1, 1, 5.0);
  d.pricing.agg_max = 1.0;
  const Scenario s(d);
  CHECK_THROWS_AS(solve_vgne(s), InfeasibleError);
}
