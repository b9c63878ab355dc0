#include "p2pm/clearing.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace p2pm {

namespace {

// Fixed set of workers running index ranges of one parallel section at a time.
class WorkerPool {
 public:
  explicit WorkerPool(int workers) {
    for (int w = 1; w < workers; ++w) threads_.emplace_back([this] { loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int n, const std::function<void(int)>& body) {
    if (threads_.empty() || n <= 1) {
      for (int k = 0; k < n; ++k) body(k);
      return;
    }
    {
      std::lock_guard lock(mutex_);
      body_ = &body;
      count_ = n;
      next_ = 0;
      pending_ = n;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    work();
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void work() {
    for (;;) {
      int k;
      {
        std::lock_guard lock(mutex_);
        if (!body_ || next_ >= count_) return;
        k = next_++;
      }
      std::exception_ptr err;
      try {
        (*body_)(k);
      } catch (...) {
        err = std::current_exception();
      }
      std::lock_guard lock(mutex_);
      if (err && !error_) error_ = err;
      if (--pending_ == 0) done_.notify_all();
    }
  }

  void loop() {
    long long seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int)>* body_ = nullptr;
  int count_ = 0;
  int next_ = 0;
  int pending_ = 0;
  long long generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

bool finite(const ProsumerDecision& d) {
  bool ok = d.p_di.allFinite() && d.p_ch.allFinite() && d.p_ds.allFinite() && d.p_mg.allFinite();
  for (const auto& [j, t] : d.p_tr) ok = ok && t.allFinite();
  return ok;
}

bool finite(const GridDecision& g) {
  return g.theta.allFinite() && g.v.allFinite() && g.p_tg.allFinite() && g.p_l.allFinite() && g.q_l.allFinite();
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vector(m.row(r).transpose())));
  return rows;
}

nlohmann::json to_json(const CouplingResiduals& c) {
  return {{"reciprocity", c.reciprocity}, {"aggregate", c.aggregate}, {"bus_balance", c.bus_balance},
          {"grid_exchange", c.grid_exchange}};
}

}  // namespace

std::string to_string(ClearingStatus status) { return status == ClearingStatus::converged ? "converged" : "max_iter"; }

ClearingConfig ClearingConfig::from_scenario(const Scenario& s) {
  ClearingConfig cfg;
  const AlgorithmDefaults& d = s.defaults();
  cfg.max_iter = d.max_iter;
  cfg.tol_primal = d.tol_primal;
  cfg.tol_coupling = d.tol_coupling;
  cfg.mode = d.mode;
  cfg.step_safety = d.step_safety;
  return cfg;
}

IterationResiduals residuals(const Profile& profile, const Profile& previous, const Scenario& s) {
  return {max_abs_difference(profile, previous), coupling_residuals(profile, s)};
}

ClearingReport run_clearing(const Scenario& s, const ClearingConfig& cfg) {
  if (!(cfg.tol_primal > 0.0 && cfg.tol_coupling > 0.0)) throw ModelError("clearing tolerances must be > 0");
  if (cfg.max_iter < 1 || cfg.trace_stride < 1) throw ModelError("max_iter and trace_stride must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const int N = s.num_prosumers();

  ClearingReport rep;
  rep.config = cfg;
  rep.steps = cfg.steps ? *cfg.steps : default_step_sizes(s, cfg.step_safety);
  validate_step_sizes(rep.steps, s);

  const GridSets sets(s);
  std::vector<ProsumerState> pros;
  std::vector<ProsumerSubproblem> subs;
  pros.reserve(N);
  subs.reserve(N);
  for (int i = 0; i < N; ++i) {
    pros.push_back(initial_prosumer_state(s, i, rep.steps));
    subs.emplace_back(s, i, rep.steps.alpha(i), cfg.mode, cfg.qp);
  }
  std::vector<ProsumerDecision> current(N);
  for (int i = 0; i < N; ++i) current[i] = pros[i].u;
  DnoState dno = initial_dno_state(s, sets, rep.steps, current, cfg.drs);

  const int workers = cfg.workers > 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  WorkerPool pool(std::min(workers, std::max(N, 1)));

  Profile previous{current, dno.u};
  std::vector<std::map<int, Vector>> incoming(N);
  for (int k = 0; k < cfg.max_iter; ++k) {
    const Broadcast bc = make_broadcast(dno);
    for (int i = 0; i < N; ++i) {
      incoming[i].clear();
      for (int j : s.neighbors(i)) incoming[i].emplace(j, current[j].p_tr.at(i));
    }
    pool.run(N, [&](int i) {
      prosumer_dual_update(pros[i], incoming[i]);
      prosumer_primal_update(pros[i], bc, subs[i], s);
    });
    for (int i = 0; i < N; ++i) {
      if (!finite(pros[i].u))
        throw NumericalError("non-finite decision of prosumer " + std::to_string(s.prosumer(i).id) + " at iteration " +
                             std::to_string(k));
      current[i] = pros[i].u;
    }

    const DrsResult proj = dno_primal_update(dno, sets, cfg.drs, cfg.drs_warm_start);
    rep.drs_iterations += proj.iterations;
    dno_dual_update(dno, current, s);
    if (!finite(dno.u) || !dno.lambda_mg.allFinite() || !dno.mu_tg.allFinite() || !dno.mu_pb.allFinite())
      throw NumericalError("non-finite operator state at iteration " + std::to_string(k));

    Profile next{current, dno.u};
    const IterationResiduals res = residuals(next, previous, s);
    rep.iterations = k + 1;
    rep.primal_change = res.primal_change;
    rep.coupling = res.coupling;
    const bool done = res.primal_change <= cfg.tol_primal && res.coupling.max() <= cfg.tol_coupling;
    if ((k + 1) % cfg.trace_stride == 0 || done || k + 1 == cfg.max_iter) {
      TraceRow row;
      row.iter = k + 1;
      row.primal_change = res.primal_change;
      row.coupling = res.coupling;
      row.drs_iterations = proj.iterations;
      for (int i = 0; i < N; ++i) row.costs.push_back(eval_total_cost(i, current, s));
      for (double c : row.costs) row.total_cost += c;
      rep.trace.push_back(std::move(row));
    }
    previous = std::move(next);
    if (done) {
      rep.status = ClearingStatus::converged;
      break;
    }
  }

  rep.profile = previous;
  rep.costs.clear();
  for (int i = 0; i < N; ++i) rep.costs.push_back(eval_total_cost(i, rep.profile.prosumers, s));
  rep.duals.mu_tr.resize(N);
  for (int i = 0; i < N; ++i) rep.duals.mu_tr[i] = pros[i].mu_tr;
  rep.duals.lambda_mg = dno.lambda_mg;
  rep.duals.mu_tg = dno.mu_tg;
  rep.duals.mu_pb = dno.mu_pb;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::string trace_csv(const ClearingReport& report) {
  std::ostringstream out;
  out << "iter,primal_change,recip_res,agg_res,bus_res,tg_res,total_cost\n";
  for (const auto& r : report.trace) {
    out << r.iter << ',' << fmt(r.primal_change) << ',' << fmt(r.coupling.reciprocity) << ','
        << fmt(r.coupling.aggregate) << ',' << fmt(r.coupling.bus_balance) << ',' << fmt(r.coupling.grid_exchange)
        << ',' << fmt(r.total_cost) << '\n';
  }
  return out.str();
}

nlohmann::json profile_to_json(const Profile& profile, const DualSnapshot& duals, const std::vector<double>& costs,
                               const Scenario& s) {
  using nlohmann::json;
  json out;
  json prosumers = json::array();
  for (int i = 0; i < s.num_prosumers(); ++i) {
    const ProsumerDecision& d = profile.prosumers[i];
    json trades = json::object();
    json mu = json::object();
    for (const auto& [j, t] : d.p_tr) {
      trades[std::to_string(s.prosumer(j).id)] = to_json(t);
      mu[std::to_string(s.prosumer(j).id)] = to_json(duals.mu_tr[i].at(j));
    }
    prosumers.push_back({{"id", s.prosumer(i).id},
                         {"cost", costs[i]},
                         {"p_di", to_json(d.p_di)},
                         {"p_ch", to_json(d.p_ch)},
                         {"p_ds", to_json(d.p_ds)},
                         {"p_mg", to_json(d.p_mg)},
                         {"p_tr", trades},
                         {"mu_tr", mu}});
  }
  out["prosumers"] = prosumers;
  const GridDecision& g = profile.grid;
  out["grid"] = {{"theta", to_json(g.theta)}, {"v", to_json(g.v)},     {"p_tg", to_json(g.p_tg)},
                 {"p_l", to_json(g.p_l)},     {"q_l", to_json(g.q_l)}, {"line_saturation", to_json(line_saturation(g, s))}};
  out["duals"] = {{"lambda_mg", to_json(duals.lambda_mg)},
                  {"mu_tg", to_json(duals.mu_tg)},
                  {"mu_pb", to_json(duals.mu_pb)}};
  return out;
}

nlohmann::json report_to_json(const ClearingReport& report, const Scenario& s) {
  using nlohmann::json;
  const ClearingConfig& c = report.config;
  json out;
  out["status"] = to_string(report.status);
  out["iterations"] = report.iterations;
  out["primal_change"] = report.primal_change;
  out["coupling_residuals"] = to_json(report.coupling);
  out["wall_seconds"] = report.wall_seconds;
  out["drs_iterations"] = report.drs_iterations;
  out["config"] = {{"max_iter", c.max_iter},       {"tol_primal", c.tol_primal},
                   {"tol_coupling", c.tol_coupling}, {"mode", to_string(c.mode)},
                   {"step_safety", c.step_safety}, {"seed", c.seed},
                   {"trace_stride", c.trace_stride}};
  out["step_sizes"] = {{"alpha", to_json(report.steps.alpha)},   {"beta_tr", to_json(report.steps.beta_tr)},
                       {"alpha_dno", report.steps.alpha_dno},      {"gamma_mg", report.steps.gamma_mg},
                       {"beta_tg", report.steps.beta_tg},          {"beta_pb", to_json(report.steps.beta_pb)}};
  out.update(profile_to_json(report.profile, report.duals, report.costs, s));
  return out;
}

void write_clearing_outputs(const ClearingReport& report, const Scenario& s, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::ofstream json_out(base / "report.json");
  json_out << report_to_json(report, s).dump(2) << '\n';
  std::ofstream csv_out(base / "trace.csv");
  csv_out << trace_csv(report);
  if (!json_out || !csv_out) throw std::runtime_error("cannot write clearing outputs to " + dir);
}

}  // namespace p2pm
