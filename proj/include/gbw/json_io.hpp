#pragma once

#include <nlohmann/json.hpp>

#include "gbw/synth_data.hpp"
#include "gbw/trainer.hpp"

namespace gbw {

nlohmann::json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

nlohmann::json train_plan_to_json(const TrainPlan& plan);
TrainPlan train_plan_from_json(const nlohmann::json& j);

const char* strategy_name(WeightStrategy s);
WeightStrategy strategy_from_name(const std::string& name);
const char* regime_name(Regime r);
Regime regime_from_name(const std::string& name);

// Final-metrics record for a completed run.
nlohmann::json metrics_to_json(const ExperimentRecord& record);

}  // namespace gbw
