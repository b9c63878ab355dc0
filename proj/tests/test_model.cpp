#include "support.hpp"

#include <doctest.h>

using namespace p2pm;
using doctest::Approx;

TEST_CASE("dispatch cost") {
  TimeGrid t24{24, 1.0};
  CHECK(eval_dispatch_cost<double>(Vector::Zero(24), test::unit(24, 0.0, 0.045, 0, 10), t24) == 0.0);
  CHECK(eval_dispatch_cost<double>(Vector::Ones(24), test::unit(24, 0.0, 0.045, 0, 10), t24) == Approx(1.08));
  TimeGrid t2{2, 1.0};
  CHECK(eval_dispatch_cost<double>(Vector{{2.0, 3.0}}, test::unit(2, 0.01, 0.0, 0, 10), t2) == Approx(0.13));
  CHECK_THROWS_AS(eval_dispatch_cost<double>(Vector::Ones(3), test::unit(2, 0.01, 0.0, 0, 10), t2), ModelError);
}

TEST_CASE("storage cost") {
  StorageUnit st;
  st.cost_coeff = 1.0;
  CHECK(eval_storage_cost<double>(Vector::Zero(2), Vector::Zero(2), st) == 0.0);
  CHECK(eval_storage_cost<double>(Vector{{1.0, 0.0}}, Vector{{0.0, 2.0}}, st) == Approx(5.0));
  st.cost_coeff = 0.0;
  CHECK(eval_storage_cost<double>(Vector{{7.0, -3.0}}, Vector{{2.0, 9.0}}, st) == 0.0);
  CHECK_THROWS_AS(eval_storage_cost<double>(Vector::Zero(2), Vector::Zero(3), st), ModelError);
}

TEST_CASE("trade cost") {
  std::map<int, TradeTerms> links{{1, {0.08, 30.0}}};
  CHECK(eval_trade_cost<double>({{1, Vector::Zero(2)}}, links, 0.01) == 0.0);
  CHECK(eval_trade_cost<double>({{1, Vector{{1.0, -1.0}}}}, links, 0.01) == Approx(0.02));
  CHECK(eval_trade_cost<double>({{1, Vector{{-1.0, -1.0}}}}, links, 0.0) == Approx(-0.16));
  CHECK_THROWS_AS(eval_trade_cost<double>({{2, Vector::Zero(2)}}, links, 0.01), ModelError);
}

TEST_CASE("reciprocal pair linear trade costs cancel exactly") {
  Rng rng(5);
  std::map<int, TradeTerms> link{{0, {0.08, 30.0}}};
  for (int k = 0; k < 20; ++k) {
    const Vector p = test::random_vector(rng, 6, -10, 10);
    const double ij = eval_trade_cost<double>({{0, p}}, link, 0.0);
    const double ji = eval_trade_cost<double>({{0, Vector(-p)}}, link, 0.0);
    CHECK(ij + ji == 0.0);
  }
}

TEST_CASE("grid cost") {
  CHECK(eval_grid_cost<double>(Vector::Zero(1), Vector::Constant(1, 5), Vector::Constant(1, 0.1),
                               Vector::Constant(1, 5)) == 0.0);
  CHECK(eval_grid_cost<double>(Vector::Constant(1, 2), Vector::Constant(1, 5), Vector::Constant(1, 0.1),
                               Vector::Constant(1, 5)) == Approx(2.0));
  const Vector b{{40.0, 55.0, 70.0}};
  const Vector d = (0.1624 / b.array()).matrix();
  CHECK(eval_grid_cost<double>(b, Vector::Zero(3), d, b) == Approx(0.1624 * b.sum()));
  CHECK_THROWS_AS(eval_grid_cost<double>(Vector::Zero(2), Vector::Zero(3), d, b), ModelError);
}

TEST_CASE("total cost is the sum of the components and zero for the operator") {
  ScenarioData d = test::bare_market(2, 2, 1.0);
  d.prosumers[0].dispatchable = test::unit(2, 0.01, 0.045, 0.0, 5.0);
  StorageUnit st;
  st.cost_coeff = 0.5;
  st.capacity = 10.0;
  st.p_ch_max = st.p_ds_max = 3.0;
  d.prosumers[0].storage = st;
  d.trade_links = {{1, 2, 0.08, 30.0}};
  d.passive_consumers = {{2, Vector{{3.0, 4.0}}}};
  const Scenario s(d);

  auto zero = zero_profile(s).prosumers;
  CHECK(eval_total_cost<double>(0, zero, s) == 0.0);
  CHECK(eval_total_cost<double>(2, zero, s) == 0.0);

  auto u = zero;
  u[0].p_di = Vector{{2.0, 3.0}};
  u[0].p_ch = Vector{{1.0, 0.0}};
  u[0].p_ds = Vector{{0.0, 2.0}};
  u[0].p_mg = Vector{{1.5, -0.5}};
  u[0].p_tr[1] = Vector{{1.0, -1.0}};
  u[1].p_mg = Vector{{0.5, 0.5}};
  const Vector sigma = u[0].p_mg + u[1].p_mg;
  const double expected = eval_dispatch_cost<double>(u[0].p_di, *d.prosumers[0].dispatchable, d.time) +
                          eval_storage_cost<double>(u[0].p_ch, u[0].p_ds, st) +
                          eval_trade_cost<double>(u[0].p_tr, {{1, {0.08, 30.0}}}, 0.01) +
                          eval_grid_cost<double>(u[0].p_mg, sigma, d.pricing.price_coeff, s.passive_load());
  CHECK(eval_total_cost<double>(0, u, s) == Approx(expected).epsilon(1e-14));
  CHECK(eval_total_cost<double>(2, u, s) == 0.0);
  CHECK(eval_total_cost<double>(0, u, s) == eval_total_cost<double>(0, u, s));
}

TEST_CASE("soc trajectory") {
  StorageUnit st;
  st.capacity = 1.0;
  st.soc_init = 0.5;
  TimeGrid t{3, 1.0};
  const Vector flat = soc_trajectory(st, Vector::Zero(3), Vector::Zero(3), t);
  REQUIRE(flat.size() == 4);
  CHECK((flat.array() == 0.5).all());

  const Vector x = soc_trajectory(st, Vector{{0.1, 0.0, 0.0}}, Vector::Zero(3), t);
  CHECK(x(1) == Approx(0.6));

  st.leakage = 0.9;
  st.soc_init = 1.0;
  const Vector decay = soc_trajectory(st, Vector::Zero(3), Vector::Zero(3), t);
  for (int h = 0; h <= 3; ++h) CHECK(decay(h) == Approx(std::pow(0.9, h)));

  st = StorageUnit{};
  st.capacity = 20.0;
  st.charge_eff = 0.95;
  st.discharge_eff = 0.9;
  st.leakage = 0.99;
  st.soc_init = 0.4;
  TimeGrid half{2, 0.5};
  const Vector y = soc_trajectory(st, Vector{{2.0, 0.0}}, Vector{{0.0, 1.8}}, half);
  CHECK(y(1) == Approx(0.99 * 0.4 + 0.5 / 20.0 * 0.95 * 2.0));
  CHECK(y(2) == Approx(0.99 * y(1) - 0.5 / 20.0 * 1.8 / 0.9));
}

TEST_CASE("power injection") {
  ScenarioData d = test::bare_market(1, 1, 1.0);
  d.prosumers[0].dispatchable = test::unit(1, 0.0, 0.045, 0.0, 5.0);
  StorageUnit st;
  st.p_ch_max = st.p_ds_max = 1.0;
  d.prosumers[0].storage = st;
  const Scenario s(d);
  ProsumerDecision u = ProsumerDecision::zeros(1, {});
  CHECK(power_injection(0, u, s)(0) == Approx(1.0));
  u.p_di(0) = 1.0;
  CHECK(power_injection(0, u, s)(0) == Approx(0.0));
  u.p_di(0) = 0.3;
  u.p_ds(0) = 0.2;
  u.p_ch(0) = 0.1;
  CHECK(power_injection(0, u, s)(0) == Approx(0.6));
}

TEST_CASE("local residuals") {
  ScenarioData d = test::bare_market(1, 2, 2.0);
  d.prosumers[0].dispatchable = test::unit(2, 0.0, 0.045, 0.0, 5.0);
  StorageUnit st;
  st.capacity = 10.0;
  st.soc_init = 0.5;
  st.soc_max = 0.9;
  st.p_ch_max = st.p_ds_max = 10.0;
  d.prosumers[0].storage = st;
  const Scenario s(d);

  ProsumerDecision u = ProsumerDecision::zeros(2, {});
  u.p_di = Vector::Constant(2, 2.0);
  CHECK(local_residuals(0, u, s).max() == 0.0);

  u.p_di.setZero();
  u.p_mg = Vector{{1.0, 2.0}};
  const LocalResiduals short1 = local_residuals(0, u, s);
  CHECK(short1.balance == Approx(1.0));
  CHECK(short1.device_bounds == 0.0);

  // One step of charging lifts the SoC from 0.5 to 0.95, 0.05 above the cap.
  u.p_mg = Vector{{2.0 + 4.5, 2.0}};
  u.p_ch = Vector{{4.5, 0.0}};
  const LocalResiduals over = local_residuals(0, u, s);
  CHECK(over.balance == Approx(0.0).epsilon(1e-12));
  CHECK(over.soc_bounds == Approx(0.05));

  u.p_ch(0) = 11.0;
  u.p_mg(0) = 13.0;
  CHECK(local_residuals(0, u, s).device_bounds == Approx(1.0));
}

TEST_CASE("coupling residuals") {
  ScenarioData d = test::bare_market(2, 1, 0.0);
  d.trade_links = {{1, 2, 0.08, 30.0}};
  const Scenario s(d);
  Profile p = zero_profile(s);
  CHECK(coupling_residuals(p, s).max() == 0.0);

  p.prosumers[0].p_tr[1](0) = 1.0;
  p.prosumers[1].p_tr[0](0) = -0.5;
  CHECK(coupling_residuals(p, s).reciprocity == Approx(0.5));

  // Mirrored trades with balanced buses: the bus balance holds because trades
  // do not inject power.
  p.prosumers[1].p_tr[0](0) = -1.0;
  p.prosumers[0].p_mg(0) = -1.0;
  p.prosumers[1].p_mg(0) = 1.0;
  const CouplingResiduals r = coupling_residuals(p, s);
  CHECK(r.reciprocity == 0.0);
  CHECK(r.aggregate == 0.0);
  CHECK(r.bus_balance == 0.0);
  CHECK(r.grid_exchange == 0.0);

  p.grid.p_tg(0, 0) = 2.0;
  CHECK(coupling_residuals(p, s).grid_exchange == Approx(2.0));
}

TEST_CASE("J_i is convex in u_i") {
  const Scenario s = test::small_instance(3, 4, 21);
  Rng rng(99);
  auto draw = [&](int i) {
    ProsumerDecision u = ProsumerDecision::zeros(4, s.neighbors(i));
    u.p_di = test::random_vector(rng, 4, 0, 5);
    u.p_ch = test::random_vector(rng, 4, 0, 3);
    u.p_ds = test::random_vector(rng, 4, 0, 3);
    u.p_mg = test::random_vector(rng, 4, -10, 10);
    for (auto& [j, t] : u.p_tr) t = test::random_vector(rng, 4, -5, 5);
    return u;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ProsumerDecision> a, b;
    for (int i = 0; i < 3; ++i) a.push_back(draw(i));
    b = a;
    const int i = trial % 3;
    b[i] = draw(i);
    const double lam = rng.uniform();
    auto mix = a;
    mix[i].p_di = lam * a[i].p_di + (1 - lam) * b[i].p_di;
    mix[i].p_ch = lam * a[i].p_ch + (1 - lam) * b[i].p_ch;
    mix[i].p_ds = lam * a[i].p_ds + (1 - lam) * b[i].p_ds;
    mix[i].p_mg = lam * a[i].p_mg + (1 - lam) * b[i].p_mg;
    for (auto& [j, t] : mix[i].p_tr) t = lam * a[i].p_tr.at(j) + (1 - lam) * b[i].p_tr.at(j);
    CHECK(eval_total_cost<double>(i, mix, s) <=
          lam * eval_total_cost<double>(i, a, s) + (1 - lam) * eval_total_cost<double>(i, b, s) + 1e-9);
  }
}

TEST_CASE("cost gradient matches central differences") {
  const Scenario s = test::small_instance(3, 4, 4);
  Rng rng(8);
  std::vector<ProsumerDecision> u;
  for (int i = 0; i < 3; ++i) {
    ProsumerDecision d = ProsumerDecision::zeros(4, s.neighbors(i));
    d.p_di = test::random_vector(rng, 4, 0.5, 5);
    d.p_ch = test::random_vector(rng, 4, 0.5, 3);
    d.p_ds = test::random_vector(rng, 4, 0.5, 3);
    d.p_mg = test::random_vector(rng, 4, -10, 10);
    for (auto& [j, t] : d.p_tr) t = test::random_vector(rng, 4, 0.5, 5);
    u.push_back(d);
  }
  const double eps = 1e-6;
  for (int i = 0; i < 3; ++i) {
    const ProsumerDecision g = cost_gradient(i, u, s);
    auto fd = [&](auto field) {
      Vector out(4);
      for (int h = 0; h < 4; ++h) {
        auto up = u, dn = u;
        field(up[i])(h) += eps;
        field(dn[i])(h) -= eps;
        out(h) = (eval_total_cost<double>(i, up, s) - eval_total_cost<double>(i, dn, s)) / (2 * eps);
      }
      return out;
    };
    CHECK((g.p_mg - fd([](ProsumerDecision& d) -> Vector& { return d.p_mg; })).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((g.p_di - fd([](ProsumerDecision& d) -> Vector& { return d.p_di; })).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((g.p_ch - fd([](ProsumerDecision& d) -> Vector& { return d.p_ch; })).cwiseAbs().maxCoeff() < 1e-6);
    for (int j : s.neighbors(i))
      CHECK((g.p_tr.at(j) - fd([j](ProsumerDecision& d) -> Vector& { return d.p_tr.at(j); })).cwiseAbs().maxCoeff() <
            1e-6);
  }
}

TEST_CASE("scenario invariants are enforced") {
  ScenarioData d = test::bare_market(2, 2);
  d.prosumers[0].dispatchable = test::unit(2, 0.0, 0.045, 3.0, 1.0);
  CHECK_THROWS_AS(Scenario{d}, ModelError);
  d = test::bare_market(2, 2);
  d.buses[1].grid_connected = false;
  d.buses[0].grid_connected = false;
  CHECK_THROWS_AS(Scenario{d}, ModelError);
  d = test::bare_market(2, 2);
  d.trade_links = {{1, 1, 0.08, 30.0}};
  CHECK_THROWS_AS(Scenario{d}, ModelError);
  d = test::bare_market(2, 2);
  d.pricing.price_coeff(1) = 0.0;
  CHECK_THROWS_AS(Scenario{d}, ModelError);
  d = test::bare_market(2, 2);
  d.passive_consumers = {{2, Vector{{1.0, 2.0}}}, {1, Vector{{0.5, 0.5}}}};
  const Scenario s(d);
  CHECK(s.passive_load()(0) == 1.5);
  CHECK(s.passive_load()(1) == 2.5);
}
