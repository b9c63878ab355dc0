#include "p2pm/experiments.hpp"

#include "p2pm/generators.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace p2pm {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(long long v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

// Runs independent cells on a fixed number of threads; results are written
// by index, so the output order never depends on scheduling.
void run_cells(const std::vector<std::function<void()>>& cells, int workers) {
  const int n = static_cast<int>(cells.size());
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (const auto& c : cells) c();
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int k = next++; k < n; k = next++) cells[k]();
    });
  for (auto& t : pool) t.join();
}

struct Cell {
  std::optional<ClearingReport> report;
  std::string error;
  std::string status() const { return report ? to_string(report->status) : "error"; }
  int iterations() const { return report ? report->iterations : 0; }
};

// A failed run is recorded in its cell and the experiment carries on.
void clear_into(Cell& cell, const Scenario& s, const ExperimentSpec& spec) {
  try {
    ClearingConfig cfg = ClearingConfig::from_scenario(s);
    if (spec.max_iter) cfg.max_iter = *spec.max_iter;
    if (spec.tol) cfg.tol_primal = cfg.tol_coupling = *spec.tol;
    cfg.workers = 1;
    cfg.seed = spec.seed;
    cfg.trace_stride = cfg.max_iter;
    cell.report = run_clearing(s, cfg);
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
}

Ieee37Options feeder_options(const ExperimentSpec& spec) {
  Ieee37Options opt;
  opt.horizon = spec.horizon;
  opt.sampling_hours = 24.0 / spec.horizon;
  opt.connectivity = spec.connectivity;
  opt.trade_capacity = spec.trade_capacity;
  return opt;
}

std::uint64_t replication_seed(const ExperimentSpec& spec, int r) { return spec.seed + static_cast<std::uint64_t>(r); }

json errors_of(const std::vector<Cell>& cells) {
  json out = json::array();
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (!cells[k].error.empty()) out.push_back({{"cell", k}, {"error", cells[k].error}});
  return out;
}

bool all_converged(const std::vector<Cell>& cells) {
  return std::all_of(cells.begin(), cells.end(), [](const Cell& c) { return c.report && c.report->converged(); });
}

Vector grid_price(const Profile& profile, const Scenario& s) {
  const Vector load = aggregate_grid_load(profile.prosumers, s.horizon()) + s.passive_load();
  return s.pricing().price_coeff.cwiseProduct(load);
}

ExperimentResult line_safety(const ExperimentSpec& spec) {
  const int R = spec.replications;
  std::vector<Scenario> scen;
  for (int r = 0; r < R; ++r) {
    ScenarioData d = line_safety_instance(replication_seed(spec, r));
    d.defaults.enforce_line_limits = true;
    scen.emplace_back(d);
    d.defaults.enforce_line_limits = false;
    scen.emplace_back(d);
  }
  std::vector<Cell> cells(scen.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < scen.size(); ++k) jobs.push_back([&, k] { clear_into(cells[k], scen[k], spec); });
  run_cells(jobs, spec.workers);

  ExperimentResult res;
  Table lines{"line_saturation", {"replication", "variant", "line_from", "line_to", "capacity_kw", "saturation_pct"}, {}};
  Table runs{"runs", {"replication", "variant", "status", "iterations", "max_saturation_pct", "total_cost"}, {}};
  double worst[2] = {0.0, 0.0};
  int overloaded = 0;
  for (std::size_t k = 0; k < scen.size(); ++k) {
    const int r = static_cast<int>(k / 2);
    const bool constrained = k % 2 == 0;
    const std::string variant = constrained ? "constrained" : "unconstrained";
    const Scenario& s = scen[k];
    const Cell& c = cells[k];
    if (!c.report) {
      runs.add({fmt(r), variant, "error", "0", "", ""});
      continue;
    }
    const Vector sat = line_saturation(c.report->profile.grid, s);
    for (int l = 0; l < s.num_lines(); ++l)
      lines.add({fmt(r), variant, fmt(s.line(l).from), fmt(s.line(l).to), fmt(s.line(l).capacity), fmt(100.0 * sat(l))});
    const double mx = sat.size() ? 100.0 * sat.maxCoeff() : 0.0;
    worst[constrained ? 0 : 1] = std::max(worst[constrained ? 0 : 1], mx);
    if (!constrained) overloaded += static_cast<int>((sat.array() > 1.0).count());
    double total = 0.0;
    for (double v : c.report->costs) total += v;
    runs.add({fmt(r), variant, c.status(), fmt(c.iterations()), fmt(mx), fmt(total)});
  }
  res.tables = {lines, runs};
  res.summary = {{"constrained_max_saturation_pct", worst[0]},
                 {"unconstrained_max_saturation_pct", worst[1]},
                 {"unconstrained_overloaded_lines", overloaded},
                 {"all_converged", all_converged(cells)},
                 {"errors", errors_of(cells)}};
  return res;
}

ExperimentResult trading_benefit(const ExperimentSpec& spec) {
  const int R = spec.replications;
  std::vector<Scenario> scen;
  for (int r = 0; r < R; ++r) {
    ScenarioData d = builtin_ieee37_data(spec.prosumers, replication_seed(spec, r), feeder_options(spec));
    scen.emplace_back(d);
    for (auto& link : d.trade_links) link.capacity = 0.0;
    scen.emplace_back(d);
  }
  std::vector<Cell> cells(scen.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < scen.size(); ++k) jobs.push_back([&, k] { clear_into(cells[k], scen[k], spec); });
  run_cells(jobs, spec.workers);

  ExperimentResult res;
  Table costs{"costs", {"replication", "prosumer", "cost_trading", "cost_no_trading", "delta"}, {}};
  Table traded{"traded_power", {"replication", "hour", "traded_kw"}, {}};
  Table runs{"runs", {"replication", "variant", "status", "iterations"}, {}};
  double max_delta = -std::numeric_limits<double>::infinity();
  int worse = 0;
  for (int r = 0; r < R; ++r) {
    const Cell& with = cells[2 * r];
    const Cell& without = cells[2 * r + 1];
    runs.add({fmt(r), "trading", with.status(), fmt(with.iterations())});
    runs.add({fmt(r), "no_trading", without.status(), fmt(without.iterations())});
    if (!with.report || !without.report) continue;
    const Scenario& s = scen[2 * r];
    for (int i = 0; i < s.num_prosumers(); ++i) {
      const double a = with.report->costs[i];
      const double b = without.report->costs[i];
      costs.add({fmt(r), fmt(s.prosumer(i).id), fmt(a), fmt(b), fmt(a - b)});
      max_delta = std::max(max_delta, a - b);
      if (a - b > 1e-4) ++worse;
    }
    const Vector t = traded_power(with.report->profile, s);
    for (int h = 0; h < s.horizon(); ++h) traded.add({fmt(r), fmt(h), fmt(t(h))});
  }
  res.tables = {costs, traded, runs};
  res.summary = {{"max_cost_delta", max_delta},
                 {"prosumers_worse_off", worse},
                 {"all_converged", all_converged(cells)},
                 {"errors", errors_of(cells)}};
  return res;
}

ExperimentResult storage_impact(const ExperimentSpec& spec) {
  const int R = spec.replications;
  std::vector<Scenario> scen;
  for (int r = 0; r < R; ++r) {
    Ieee37Options opt = feeder_options(spec);
    opt.storage_share = 1.0;
    ScenarioData d = builtin_ieee37_data(spec.prosumers, replication_seed(spec, r), opt);
    // Strongly convex local generation with unit-specific curvature.
    Rng rng(replication_seed(spec, r) ^ 0x5eedULL);
    for (auto& p : d.prosumers)
      if (p.dispatchable) p.dispatchable->quad_coeff.setConstant(rng.uniform(0.0005, 0.005));
    scen.emplace_back(d);
    for (auto& p : d.prosumers) p.storage.reset();
    scen.emplace_back(d);
  }
  std::vector<Cell> cells(scen.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < scen.size(); ++k) jobs.push_back([&, k] { clear_into(cells[k], scen[k], spec); });
  run_cells(jobs, spec.workers);

  ExperimentResult res;
  Table hourly{"hourly",
               {"replication", "variant", "hour", "grid_import_kw", "local_generation_kw", "traded_kw",
                "avg_trading_price", "grid_price"},
               {}};
  Table runs{"runs", {"replication", "variant", "status", "iterations"}, {}};
  double peak[2] = {0.0, 0.0};
  for (std::size_t k = 0; k < scen.size(); ++k) {
    const int r = static_cast<int>(k / 2);
    const int v = static_cast<int>(k % 2);
    const std::string variant = v == 0 ? "all_storage" : "no_storage";
    const Cell& c = cells[k];
    runs.add({fmt(r), variant, c.status(), fmt(c.iterations())});
    if (!c.report) continue;
    const Scenario& s = scen[k];
    const Profile& p = c.report->profile;
    const Vector imported = p.grid.p_tg.colwise().sum().transpose();
    Vector local = Vector::Zero(s.horizon());
    for (const auto& u : p.prosumers) local += u.p_di;
    const Vector traded = traded_power(p, s);
    const Vector price = average_trading_price(c.report->duals, s);
    const Vector grid = grid_price(p, s);
    for (int h = 0; h < s.horizon(); ++h)
      hourly.add({fmt(r), variant, fmt(h), fmt(imported(h)), fmt(local(h)), fmt(traded(h)), fmt(price(h)), fmt(grid(h))});
    peak[v] = std::max(peak[v], (imported + local).maxCoeff());
  }
  res.tables = {hourly, runs};
  res.summary = {{"peak_import_plus_generation_all_storage_kw", peak[0]},
                 {"peak_import_plus_generation_no_storage_kw", peak[1]},
                 {"all_converged", all_converged(cells)},
                 {"errors", errors_of(cells)}};
  return res;
}

ExperimentResult scalability(const ExperimentSpec& spec) {
  std::vector<std::pair<int, double>> grid;
  for (int n : spec.population_grid) grid.emplace_back(n, spec.connectivity);
  for (double c : spec.connectivity_grid)
    if (std::find(grid.begin(), grid.end(), std::make_pair(spec.prosumers, c)) == grid.end())
      grid.emplace_back(spec.prosumers, c);

  struct Job {
    int n;
    double connectivity;
    int replication;
    std::uint64_t seed;
  };
  std::vector<Job> plan;
  for (const auto& [n, c] : grid)
    for (int r = 0; r < spec.replications; ++r) plan.push_back({n, c, r, replication_seed(spec, r)});
  std::vector<Cell> cells(plan.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < plan.size(); ++k)
    jobs.push_back([&, k] {
      try {
        Ieee37Options opt = feeder_options(spec);
        opt.connectivity = plan[k].connectivity;
        const Scenario s = builtin_ieee37(plan[k].n, plan[k].seed, opt);
        clear_into(cells[k], s, spec);
      } catch (const std::exception& e) {
        cells[k].error = e.what();
      }
    });
  run_cells(jobs, spec.workers);

  ExperimentResult res;
  Table table{"iterations", {"prosumers", "connectivity", "replication", "seed", "status", "iterations"}, {}};
  json cells_json = json::array();
  auto mean_iterations = [&](int n, double c) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < plan.size(); ++k)
      if (plan[k].n == n && plan[k].connectivity == c && cells[k].report) {
        sum += cells[k].iterations();
        ++count;
      }
    return count ? sum / count : 0.0;
  };
  for (std::size_t k = 0; k < plan.size(); ++k)
    table.add({fmt(plan[k].n), fmt(plan[k].connectivity), fmt(plan[k].replication),
               fmt(static_cast<long long>(plan[k].seed)), cells[k].status(), fmt(cells[k].iterations())});
  for (const auto& [n, c] : grid) cells_json.push_back({{"prosumers", n}, {"connectivity", c}, {"mean_iterations", mean_iterations(n, c)}});
  double growth = 0.0;
  if (!spec.population_grid.empty()) {
    const auto [lo, hi] = std::minmax_element(spec.population_grid.begin(), spec.population_grid.end());
    const double base = mean_iterations(*lo, spec.connectivity);
    if (base > 0.0) growth = mean_iterations(*hi, spec.connectivity) / base;
  }
  res.tables = {table};
  res.summary = {{"cells", cells_json},
                 {"population_growth_factor", growth},
                 {"all_converged", all_converged(cells)},
                 {"errors", errors_of(cells)}};
  return res;
}

ExperimentResult price_sweep(const ExperimentSpec& spec) {
  struct Job {
    double cost;
    double tariff;
    int replication;
  };
  std::vector<Job> plan;
  for (double ct : spec.trade_cost_grid)
    for (double ta : spec.tariff_grid)
      for (int r = 0; r < spec.replications; ++r) plan.push_back({ct, ta, r});
  std::vector<Scenario> scen;
  for (const Job& j : plan) {
    ScenarioData d = builtin_ieee37_data(spec.prosumers, replication_seed(spec, j.replication), feeder_options(spec));
    for (auto& link : d.trade_links) link.cost = j.cost;
    d.pricing.tariff = j.tariff;
    scen.emplace_back(d);
  }
  std::vector<Cell> cells(plan.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < plan.size(); ++k) jobs.push_back([&, k] { clear_into(cells[k], scen[k], spec); });
  run_cells(jobs, spec.workers);

  ExperimentResult res;
  Table sweep{"sweep",
              {"trade_cost", "tariff", "replication", "status", "iterations", "traded_energy_kwh",
               "mean_trading_price", "mean_grid_price", "total_cost"},
              {}};
  Table hourly{"hourly_prices", {"trade_cost", "tariff", "replication", "hour", "avg_trading_price", "grid_price"}, {}};
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const Job& j = plan[k];
    const Cell& c = cells[k];
    if (!c.report) {
      sweep.add({fmt(j.cost), fmt(j.tariff), fmt(j.replication), "error", "0", "", "", "", ""});
      continue;
    }
    const Scenario& s = scen[k];
    const Vector traded = traded_power(c.report->profile, s);
    const Vector price = average_trading_price(c.report->duals, s);
    const Vector grid = grid_price(c.report->profile, s);
    double total = 0.0;
    for (double v : c.report->costs) total += v;
    sweep.add({fmt(j.cost), fmt(j.tariff), fmt(j.replication), c.status(), fmt(c.iterations()),
               fmt(traded.sum() * s.sampling_hours()), fmt(price.mean()), fmt(grid.mean()), fmt(total)});
    for (int h = 0; h < s.horizon(); ++h)
      hourly.add({fmt(j.cost), fmt(j.tariff), fmt(j.replication), fmt(h), fmt(price(h)), fmt(grid(h))});
  }
  res.tables = {sweep, hourly};
  res.summary = {{"all_converged", all_converged(cells)}, {"errors", errors_of(cells)}};
  return res;
}

void check_keys(const json& doc, const std::set<std::string>& allowed) {
  if (!doc.is_object()) throw ModelError("experiment spec: expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!allowed.count(it.key())) throw ModelError("experiment spec: unknown field '" + it.key() + "'");
}

template <typename T>
std::vector<T> read_grid(const json& doc, const char* key, std::vector<T> fallback) {
  if (!doc.contains(key)) return fallback;
  const json& v = doc.at(key);
  if (!v.is_array()) throw ModelError(std::string("experiment spec: ") + key + " must be an array");
  std::vector<T> out;
  for (const json& x : v) {
    if (!x.is_number()) throw ModelError(std::string("experiment spec: ") + key + " must hold numbers");
    out.push_back(x.get<T>());
  }
  return out;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::line_safety: return "line_safety";
    case ExperimentKind::trading_benefit: return "trading_benefit";
    case ExperimentKind::storage_impact: return "storage_impact";
    case ExperimentKind::scalability: return "scalability";
    case ExperimentKind::price_sweep: return "price_sweep";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::line_safety, ExperimentKind::trading_benefit, ExperimentKind::storage_impact,
                 ExperimentKind::scalability, ExperimentKind::price_sweep})
    if (to_string(k) == s) return k;
  throw ModelError("unknown experiment '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (replications < 1) throw ModelError("experiment spec: replications must be >= 1");
  if (prosumers < 1) throw ModelError("experiment spec: prosumers must be >= 1");
  if (horizon < 1) throw ModelError("experiment spec: horizon must be >= 1");
  if (!(connectivity > 0.0 && connectivity <= 1.0)) throw ModelError("experiment spec: connectivity must lie in (0, 1]");
  if (trade_capacity < 0.0) throw ModelError("experiment spec: trade_capacity must be >= 0");
  if (workers < 1) throw ModelError("experiment spec: workers must be >= 1");
  if (max_iter && *max_iter < 1) throw ModelError("experiment spec: max_iter must be >= 1");
  if (tol && !(*tol > 0.0)) throw ModelError("experiment spec: tol must be > 0");
  if (kind == ExperimentKind::scalability && population_grid.empty() && connectivity_grid.empty())
    throw ModelError("experiment spec: scalability needs a population or connectivity grid");
  if (kind == ExperimentKind::price_sweep && (trade_cost_grid.empty() || tariff_grid.empty()))
    throw ModelError("experiment spec: price_sweep needs trade_cost_grid and tariff_grid");
  for (int n : population_grid)
    if (n < 1) throw ModelError("experiment spec: population_grid entries must be >= 1");
  for (double c : connectivity_grid)
    if (!(c > 0.0 && c <= 1.0)) throw ModelError("experiment spec: connectivity_grid entries must lie in (0, 1]");
}

ExperimentSpec ExperimentSpec::from_json(const json& doc) {
  check_keys(doc, {"experiment", "seed", "replications", "prosumers", "horizon", "connectivity", "trade_capacity",
                   "population_grid", "connectivity_grid", "trade_cost_grid", "tariff_grid", "max_iter", "tol",
                   "workers"});
  ExperimentSpec s;
  try {
    s.kind = parse_experiment_kind(doc.at("experiment").get<std::string>());
    s.seed = doc.value("seed", s.seed);
    s.replications = doc.value("replications", s.replications);
    s.prosumers = doc.value("prosumers", s.prosumers);
    s.horizon = doc.value("horizon", s.horizon);
    s.connectivity = doc.value("connectivity", s.connectivity);
    s.trade_capacity = doc.value("trade_capacity", s.trade_capacity);
    s.workers = doc.value("workers", s.workers);
    if (doc.contains("max_iter")) s.max_iter = doc.at("max_iter").get<int>();
    if (doc.contains("tol")) s.tol = doc.at("tol").get<double>();
  } catch (const json::exception& e) {
    throw ModelError(std::string("experiment spec: ") + e.what());
  }
  const bool scal = s.kind == ExperimentKind::scalability;
  const bool sweep = s.kind == ExperimentKind::price_sweep;
  s.population_grid = read_grid<int>(doc, "population_grid", scal ? std::vector<int>{5, 10, 20, 40} : std::vector<int>{});
  s.connectivity_grid =
      read_grid<double>(doc, "connectivity_grid", scal ? std::vector<double>{0.2, 0.6, 1.0} : std::vector<double>{});
  s.trade_cost_grid =
      read_grid<double>(doc, "trade_cost_grid", sweep ? std::vector<double>{0.02, 0.05, 0.08, 0.11} : std::vector<double>{});
  s.tariff_grid = read_grid<double>(doc, "tariff_grid", sweep ? std::vector<double>{0.0, 0.01, 0.02} : std::vector<double>{});
  if (doc.contains("population_grid") && s.population_grid.empty())
    throw ModelError("experiment spec: population_grid must not be empty");
  if (doc.contains("connectivity_grid") && s.connectivity_grid.empty())
    throw ModelError("experiment spec: connectivity_grid must not be empty");
  s.validate();
  return s;
}

json ExperimentSpec::to_json() const {
  json j = {{"experiment", to_string(kind)}, {"seed", seed},         {"replications", replications},
            {"prosumers", prosumers},        {"horizon", horizon},   {"connectivity", connectivity},
            {"trade_capacity", trade_capacity}, {"workers", workers}};
  if (!population_grid.empty()) j["population_grid"] = population_grid;
  if (!connectivity_grid.empty()) j["connectivity_grid"] = connectivity_grid;
  if (!trade_cost_grid.empty()) j["trade_cost_grid"] = trade_cost_grid;
  if (!tariff_grid.empty()) j["tariff_grid"] = tariff_grid;
  if (max_iter) j["max_iter"] = *max_iter;
  if (tol) j["tol"] = *tol;
  return j;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open experiment spec '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
  return ExperimentSpec::from_json(doc);
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw ModelError("Table " + name + ": row width mismatch");
  rows.push_back(std::move(row));
}

std::string Table::csv() const {
  std::ostringstream out;
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  return out.str();
}

Vector traded_power(const Profile& profile, const Scenario& s) {
  Vector t = Vector::Zero(s.horizon());
  for (int i = 0; i < s.num_prosumers(); ++i)
    for (const auto& [j, p] : profile.prosumers[i].p_tr)
      if (i < j) t += p.cwiseAbs();
  return t;
}

Vector average_trading_price(const DualSnapshot& duals, const Scenario& s) {
  const int H = s.horizon();
  Vector price = Vector::Constant(H, s.pricing().tariff);
  if (s.num_links() == 0) return price;
  double cost = 0.0;
  Vector mu = Vector::Zero(H);
  for (int i = 0; i < s.num_prosumers(); ++i)
    for (const auto& [j, m] : duals.mu_tr.at(i))
      if (i < j) {
        mu += m;
        cost += s.link(i, j).cost;
      }
  return price + Vector::Constant(H, cost / s.num_links()) + mu / s.num_links();
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult res;
  switch (spec.kind) {
    case ExperimentKind::line_safety: res = line_safety(spec); break;
    case ExperimentKind::trading_benefit: res = trading_benefit(spec); break;
    case ExperimentKind::storage_impact: res = storage_impact(spec); break;
    case ExperimentKind::scalability: res = scalability(spec); break;
    case ExperimentKind::price_sweep: res = price_sweep(spec); break;
  }
  res.spec = spec;
  res.summary["spec"] = spec.to_json();
  return res;
}

void write_experiment_outputs(const ExperimentResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const Table& t : result.tables) {
    std::ofstream out(std::filesystem::path(dir) / (t.name + ".csv"));
    if (!out) throw ModelError("cannot write " + t.name + ".csv in " + dir);
    out << t.csv();
  }
  std::ofstream out(std::filesystem::path(dir) / "summary.json");
  if (!out) throw ModelError("cannot write summary.json in " + dir);
  out << result.summary.dump(2) << '\n';
}

}  // namespace p2pm
