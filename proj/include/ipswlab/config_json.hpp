#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ipswlab/datagen.hpp"
#include "ipswlab/ipsw.hpp"
#include "ipswlab/missingness.hpp"
#include "ipswlab/study.hpp"

namespace ipswlab {

// JSON (de)serialization for the external config and result schemas.
// Parsing is field-by-field so errors name the offending field.

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

MarSpec mar_from_json(const nlohmann::json& j);
nlohmann::json mar_to_json(const MarSpec& spec);

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json study_config_to_json(const StudyConfig& cfg);

nlohmann::json study_result_to_json(const StudyResult& result);
nlohmann::json estimate_to_json(const EstimateResult& result);
nlohmann::json pooled_to_json(const PooledEstimate& pooled);

nlohmann::json load_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ipswlab
