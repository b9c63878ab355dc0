#include "p2pm/clearing.hpp"
#include "p2pm/experiments.hpp"
#include "p2pm/generators.hpp"
#include "p2pm/oracle.hpp"
#include "p2pm/scenario_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

enum Exit { ok = 0, usage = 1, numerical = 2, infeasible = 3 };

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw p2pm::ModelError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw p2pm::ModelError(path + ": " + e.what());
  }
}

void write_json(const nlohmann::json& doc, const std::string& path) {
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peer-to-peer energy market clearing"};
  app.require_subcommand(1);

  std::string file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file against the schema");
  validate->add_option("file", file, "Scenario JSON")->required();

  std::string mode;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<int> workers;
  std::string out_dir = ".";
  int trace_stride = 1;
  auto* clear = app.add_subcommand("clear", "Run the distributed clearing; writes report.json and trace.csv");
  clear->add_option("file", file, "Scenario JSON")->required();
  clear->add_option("--mode", mode, "Equilibrium concept")->check(CLI::IsMember({"gne", "wardrop"}));
  clear->add_option("--tol", tol, "Stopping tolerance for both residuals")->check(CLI::PositiveNumber);
  clear->add_option("--max-iter", max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  clear->add_option("--workers", workers, "Threads for the prosumer updates (0 = all cores)")->check(CLI::NonNegativeNumber);
  clear->add_option("--trace-stride", trace_stride, "Record every k-th iteration")->check(CLI::PositiveNumber);
  clear->add_option("--out", out_dir, "Output directory");

  auto* oracle = app.add_subcommand("oracle", "Solve the potential minimization centrally; writes report.json");
  oracle->add_option("file", file, "Scenario JSON")->required();
  oracle->add_option("--out", out_dir, "Output directory");

  std::string report_a, report_b;
  auto* compare = app.add_subcommand("compare", "Distance between two report.json files");
  compare->add_option("a", report_a, "First report")->required();
  compare->add_option("b", report_b, "Second report")->required();

  std::string gen_kind, gen_out;
  int prosumers = 12;
  int horizon = 24;
  std::uint64_t seed = 1;
  double connectivity = 0.6;
  double trade_capacity = 30.0;
  auto* gen = app.add_subcommand("gen", "Generate a scenario file");
  gen->add_option("kind", gen_kind, "ieee37, random or line_safety")
      ->required()
      ->check(CLI::IsMember({"ieee37", "random", "line_safety"}));
  gen->add_option("--prosumers,-n", prosumers, "Number of prosumers")->check(CLI::PositiveNumber);
  gen->add_option("--horizon", horizon, "Time steps (ieee37 spreads them over one day)")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--connectivity", connectivity, "Trading graph density in (0, 1]")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--trade-capacity", trade_capacity, "Bilateral trade limit in kW")->check(CLI::NonNegativeNumber);
  gen->add_option("--out,-o", gen_out, "Output file")->required();

  std::string spec_path;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment spec; writes CSV tables and summary.json");
  experiment->add_option("spec", spec_path, "Experiment spec JSON")->required();
  experiment->add_option("--out", out_dir, "Output directory");
  experiment->add_option("--workers", workers, "Parallel cells (overrides the spec)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (*validate) {
      const p2pm::Scenario s = p2pm::load_scenario(file);
      std::cout << file << ": ok (" << s.num_buses() << " buses, " << s.num_lines() << " lines, "
                << s.num_prosumers() << " prosumers, " << s.num_links() << " trade links, horizon "
                << s.horizon() << ")\n";
    } else if (*clear) {
      const p2pm::Scenario s = p2pm::load_scenario(file);
      p2pm::ClearingConfig cfg = p2pm::ClearingConfig::from_scenario(s);
      if (!mode.empty()) cfg.mode = p2pm::parse_game_mode(mode);
      if (tol) cfg.tol_primal = cfg.tol_coupling = *tol;
      if (max_iter) cfg.max_iter = *max_iter;
      if (workers) cfg.workers = *workers;
      cfg.trace_stride = trace_stride;
      const p2pm::ClearingReport r = p2pm::run_clearing(s, cfg);
      p2pm::write_clearing_outputs(r, s, out_dir);
      std::cout << p2pm::to_string(r.status) << " after " << r.iterations << " iterations, primal change "
                << r.primal_change << ", wall " << r.wall_seconds << " s\n";
      if (!r.converged()) {
        std::cerr << "error: no convergence within " << cfg.max_iter << " iterations\n";
        return numerical;
      }
    } else if (*oracle) {
      const p2pm::Scenario s = p2pm::load_scenario(file);
      const p2pm::VgneSolution sol = p2pm::solve_vgne(s);
      std::filesystem::create_directories(out_dir);
      write_json(p2pm::oracle_to_json(sol, s), (std::filesystem::path(out_dir) / "report.json").string());
      std::cout << "solved, potential " << sol.qp.objective << ", " << sol.qp.iterations << " solver iterations\n";
    } else if (*compare) {
      const p2pm::ComparisonReport r = p2pm::compare_reports(read_json(report_a), read_json(report_b));
      std::cout << p2pm::to_json(r).dump(2) << '\n';
    } else if (*gen) {
      p2pm::ScenarioData data;
      if (gen_kind == "ieee37") {
        p2pm::Ieee37Options opt;
        opt.horizon = horizon;
        opt.sampling_hours = 24.0 / horizon;
        opt.connectivity = connectivity;
        opt.trade_capacity = trade_capacity;
        data = p2pm::builtin_ieee37_data(prosumers, seed, opt);
      } else if (gen_kind == "random") {
        p2pm::SmallInstanceOptions opt;
        opt.prosumers = gen->count("--prosumers") ? prosumers : opt.prosumers;
        opt.horizon = gen->count("--horizon") ? horizon : opt.horizon;
        opt.trade_capacity = trade_capacity;
        if (gen->count("--connectivity")) {
          opt.tree_trading = false;
          opt.connectivity = connectivity;
        }
        data = p2pm::random_small_instance(opt, seed);
      } else {
        data = p2pm::line_safety_instance(seed);
      }
      p2pm::save_scenario(data, gen_out);
      std::cout << "wrote " << gen_out << '\n';
    } else if (*experiment) {
      p2pm::ExperimentSpec spec = p2pm::load_experiment_spec(spec_path);
      if (workers) spec.workers = *workers;
      const p2pm::ExperimentResult res = p2pm::run_experiment(spec);
      p2pm::write_experiment_outputs(res, out_dir);
      std::cout << res.summary.dump(2) << '\n';
    }
  } catch (const p2pm::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return infeasible;
  } catch (const p2pm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const p2pm::ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return usage;
  }
  return ok;
}
