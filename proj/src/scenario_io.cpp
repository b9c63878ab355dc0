#include "p2pm/scenario_io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace p2pm {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and tracks which keys were consumed so
// that leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json& get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) fail(at(key), "missing required field");
    return *it;
  }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    return v.get<double>();
  }

  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    return v.get<int>();
  }

  int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = get(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = get(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }

  Vector series(const std::string& key, int horizon) {
    const json& v = get(key);
    if (v.is_number()) return Vector::Constant(horizon, v.get<double>());
    if (!v.is_array()) fail(at(key), "expected a number or an array of numbers");
    if (static_cast<int>(v.size()) != horizon)
      fail(at(key), "expected " + std::to_string(horizon) + " entries, got " + std::to_string(v.size()));
    Vector out(horizon);
    for (int h = 0; h < horizon; ++h) {
      if (!v[h].is_number()) fail(at(key) + "[" + std::to_string(h) + "]", "expected a number");
      out(h) = v[h].get<double>();
    }
    return out;
  }

  const json& array(const std::string& key) {
    const json& v = get(key);
    if (!v.is_array()) fail(at(key), "expected an array");
    return v;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string item(const std::string& base, std::size_t k) { return base + "[" + std::to_string(k) + "]"; }

json series_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

ScenarioData scenario_data_from_json(const json& doc) {
  Reader root(doc, "");
  const int version = root.integer("version");
  if (version != kScenarioFormatVersion)
    Reader::fail("version", "unsupported format version " + std::to_string(version));

  ScenarioData d;
  {
    Reader r(root.get("time"), "time");
    d.time.horizon = r.integer("horizon");
    d.time.sampling_hours = r.number("sampling_hours");
    r.finish();
    if (d.time.horizon < 1) Reader::fail("time.horizon", "must be >= 1");
  }
  const int H = d.time.horizon;

  const json& buses = root.array("buses");
  for (std::size_t k = 0; k < buses.size(); ++k) {
    Reader r(buses[k], item("buses", k));
    Bus b;
    b.id = r.integer("id");
    b.theta_min = r.number("theta_min");
    b.theta_max = r.number("theta_max");
    b.v_min = r.number("v_min");
    b.v_max = r.number("v_max");
    b.grid_connected = r.boolean("grid_connected", false);
    r.finish();
    d.buses.push_back(b);
  }

  const json& lines = root.array("lines");
  for (std::size_t k = 0; k < lines.size(); ++k) {
    Reader r(lines[k], item("lines", k));
    Line l;
    l.from = r.integer("from");
    l.to = r.integer("to");
    l.susceptance = r.number("susceptance");
    l.conductance = r.number("conductance");
    l.capacity = r.number("capacity");
    r.finish();
    d.lines.push_back(l);
  }

  const json& prosumers = root.array("prosumers");
  for (std::size_t k = 0; k < prosumers.size(); ++k) {
    const std::string path = item("prosumers", k);
    Reader r(prosumers[k], path);
    Prosumer p;
    p.id = r.integer("id");
    p.bus_id = r.integer("bus");
    p.demand = r.series("demand", H);
    if (r.has("dispatchable")) {
      Reader u(r.get("dispatchable"), path + ".dispatchable");
      DispatchableUnit di;
      di.quad_coeff = u.series("quad_coeff", H);
      di.lin_coeff = u.series("lin_coeff", H);
      di.p_min = u.number("p_min");
      di.p_max = u.number("p_max");
      u.finish();
      p.dispatchable = di;
    }
    if (r.has("storage")) {
      Reader u(r.get("storage"), path + ".storage");
      StorageUnit st;
      st.cost_coeff = u.number("cost_coeff");
      st.capacity = u.number("capacity");
      st.leakage = u.number("leakage");
      st.charge_eff = u.number("charge_eff");
      st.discharge_eff = u.number("discharge_eff");
      st.soc_min = u.number("soc_min");
      st.soc_max = u.number("soc_max");
      st.p_ch_max = u.number("p_ch_max");
      st.p_ds_max = u.number("p_ds_max");
      st.soc_init = u.number("soc_init");
      u.finish();
      p.storage = st;
    }
    r.finish();
    d.prosumers.push_back(std::move(p));
  }

  if (root.has("passive_consumers")) {
    const json& passive = root.array("passive_consumers");
    for (std::size_t k = 0; k < passive.size(); ++k) {
      Reader r(passive[k], item("passive_consumers", k));
      PassiveConsumer c;
      c.bus_id = r.integer("bus");
      c.demand = r.series("demand", H);
      r.finish();
      d.passive_consumers.push_back(std::move(c));
    }
  }

  if (root.has("trade_links")) {
    const json& links = root.array("trade_links");
    for (std::size_t k = 0; k < links.size(); ++k) {
      Reader r(links[k], item("trade_links", k));
      TradeLink t;
      t.i = r.integer("i");
      t.j = r.integer("j");
      t.cost = r.number("cost");
      t.capacity = r.number("capacity");
      r.finish();
      d.trade_links.push_back(t);
    }
  }

  {
    Reader r(root.get("pricing"), "pricing");
    d.pricing.price_coeff = r.series("price_coeff", H);
    d.pricing.tariff = r.number("tariff");
    d.pricing.agg_min = r.number("agg_min");
    d.pricing.agg_max = r.number("agg_max");
    r.finish();
  }

  if (root.has("algorithm")) {
    Reader r(root.get("algorithm"), "algorithm");
    AlgorithmDefaults& a = d.defaults;
    try {
      a.mode = parse_game_mode(r.string("mode", to_string(a.mode)));
    } catch (const ModelError& e) {
      Reader::fail("algorithm.mode", e.what());
    }
    a.step_safety = r.number("step_safety", a.step_safety);
    a.tol_primal = r.number("tol_primal", a.tol_primal);
    a.tol_coupling = r.number("tol_coupling", a.tol_coupling);
    a.max_iter = r.integer("max_iter", a.max_iter);
    a.enforce_line_limits = r.boolean("enforce_line_limits", a.enforce_line_limits);
    r.finish();
  }
  root.finish();
  return d;
}

json scenario_to_json(const ScenarioData& d) {
  json doc;
  doc["version"] = kScenarioFormatVersion;
  doc["time"] = {{"horizon", d.time.horizon}, {"sampling_hours", d.time.sampling_hours}};
  doc["buses"] = json::array();
  for (const Bus& b : d.buses)
    doc["buses"].push_back({{"id", b.id},
                            {"theta_min", b.theta_min},
                            {"theta_max", b.theta_max},
                            {"v_min", b.v_min},
                            {"v_max", b.v_max},
                            {"grid_connected", b.grid_connected}});
  doc["lines"] = json::array();
  for (const Line& l : d.lines)
    doc["lines"].push_back({{"from", l.from},
                            {"to", l.to},
                            {"susceptance", l.susceptance},
                            {"conductance", l.conductance},
                            {"capacity", l.capacity}});
  doc["prosumers"] = json::array();
  for (const Prosumer& p : d.prosumers) {
    json j = {{"id", p.id}, {"bus", p.bus_id}, {"demand", series_json(p.demand)}};
    if (p.dispatchable)
      j["dispatchable"] = {{"quad_coeff", series_json(p.dispatchable->quad_coeff)},
                           {"lin_coeff", series_json(p.dispatchable->lin_coeff)},
                           {"p_min", p.dispatchable->p_min},
                           {"p_max", p.dispatchable->p_max}};
    if (p.storage) {
      const StorageUnit& st = *p.storage;
      j["storage"] = {{"cost_coeff", st.cost_coeff}, {"capacity", st.capacity},   {"leakage", st.leakage},
                      {"charge_eff", st.charge_eff}, {"discharge_eff", st.discharge_eff},
                      {"soc_min", st.soc_min},       {"soc_max", st.soc_max},     {"p_ch_max", st.p_ch_max},
                      {"p_ds_max", st.p_ds_max},     {"soc_init", st.soc_init}};
    }
    doc["prosumers"].push_back(std::move(j));
  }
  doc["passive_consumers"] = json::array();
  for (const PassiveConsumer& c : d.passive_consumers)
    doc["passive_consumers"].push_back({{"bus", c.bus_id}, {"demand", series_json(c.demand)}});
  doc["trade_links"] = json::array();
  for (const TradeLink& t : d.trade_links)
    doc["trade_links"].push_back({{"i", t.i}, {"j", t.j}, {"cost", t.cost}, {"capacity", t.capacity}});
  doc["pricing"] = {{"price_coeff", series_json(d.pricing.price_coeff)},
                    {"tariff", d.pricing.tariff},
                    {"agg_min", d.pricing.agg_min},
                    {"agg_max", d.pricing.agg_max}};
  const AlgorithmDefaults& a = d.defaults;
  doc["algorithm"] = {{"mode", to_string(a.mode)},
                      {"step_safety", a.step_safety},
                      {"tol_primal", a.tol_primal},
                      {"tol_coupling", a.tol_coupling},
                      {"max_iter", a.max_iter},
                      {"enforce_line_limits", a.enforce_line_limits}};
  return doc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  try {
    return Scenario(scenario_data_from_json(doc));
  } catch (const ModelError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

void save_scenario(const ScenarioData& data, const std::string& path) {
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write scenario file '" + path + "'");
  out << scenario_to_json(data).dump(2) << '\n';
  if (!out) throw ModelError("write failed for '" + path + "'");
}

void save_scenario(const Scenario& s, const std::string& path) { save_scenario(s.data(), path); }

}  // namespace p2pm
