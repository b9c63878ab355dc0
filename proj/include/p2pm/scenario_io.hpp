#pragma once

#include "p2pm/model.hpp"

#include <json.hpp>

#include <string>

namespace p2pm {

inline constexpr int kScenarioFormatVersion = 1;

/// Schema violation; the message starts with the offending field path.
class SchemaError : public ModelError {
 public:
  using ModelError::ModelError;
};

/// Coefficient series accept either a number (held constant over the
/// horizon) or an array of length H. Unknown keys are rejected.
ScenarioData scenario_data_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioData& data);

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);
void save_scenario(const ScenarioData& data, const std::string& path);

}  // namespace p2pm
