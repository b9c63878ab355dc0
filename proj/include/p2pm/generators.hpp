#pragma once

#include "p2pm/model.hpp"

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace p2pm {

/// mt19937_64 with explicit draws so streams do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [0, n).
  int index(int n) { return static_cast<int>(uniform() * n); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class Archetype { household, multi_household, restaurant, office, hospital, school };

inline constexpr Archetype kArchetypes[] = {Archetype::household, Archetype::multi_household,
                                            Archetype::restaurant, Archetype::office,
                                            Archetype::hospital, Archetype::school};

/// Synthetic daily load curve in kW, sampled at steps h * T_s (hour of day
/// wraps at 24).
Vector archetype_profile(Archetype kind, int horizon, double sampling_hours);
/// Half-sine photovoltaic curve between 06:00 and 18:00 with the given peak.
Vector solar_profile(int horizon, double sampling_hours, double peak_kw);

/// Connected graph on n vertices with round(connectivity * n(n-1)/2) edges:
/// random spanning tree plus uniformly drawn extra edges. Pairs are (i, j), i < j.
std::vector<std::pair<int, int>> random_trading_graph(int n, double connectivity, std::uint64_t seed);

struct Ieee37Options {
  int horizon = 24;
  double sampling_hours = 1.0;
  int passive_consumers = 15;
  double connectivity = 0.6;
  double line_capacity = 1500.0;
  double trade_capacity = 30.0;
  double storage_share = 0.5;
  double dispatchable_share = 0.75;
};

/// Bus ids and (from, to, length in ft) of the 37-bus feeder.
const std::vector<int>& ieee37_bus_ids();
struct FeederSegment {
  int from;
  int to;
  double length_ft;
};
const std::vector<FeederSegment>& ieee37_segments();

ScenarioData builtin_ieee37_data(int n_prosumers, std::uint64_t seed, const Ieee37Options& opt = {});
Scenario builtin_ieee37(int n_prosumers, std::uint64_t seed, const Ieee37Options& opt = {});

struct SmallInstanceOptions {
  int prosumers = 3;
  int horizon = 4;
  /// Tree trading graph when true, otherwise random_trading_graph(connectivity).
  bool tree_trading = true;
  double connectivity = 0.6;
  /// Positive quadratic costs on every device so the equilibrium is unique.
  bool strictly_convex = true;
  double trade_capacity = 30.0;
  double line_capacity = 500.0;
};

/// Random market on a radial 4-bus grid (bus 0 is the reference and the
/// only grid bus). At least one prosumer has storage and one a dispatchable unit.
ScenarioData random_small_instance(const SmallInstanceOptions& opt, std::uint64_t seed);

/// Synthetic congested feeder: 25 prosumers on the 37-bus topology, one of
/// them with a heavy load behind a weak line and an expensive local unit.
ScenarioData line_safety_instance(std::uint64_t seed);

}  // namespace p2pm
