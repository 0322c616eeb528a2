#pragma once

#include <string>

#include "ctp/model.hpp"
#include "json.hpp"

namespace ctp {

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

struct Checkpoint {
  Model model;
  nlohmann::json config;
  std::string metrics_path;
};

// One JSON document: model tables, reformulator parameters, config echo, and
// the path of the metric log that produced it.
void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& config,
                     const std::string& metrics_path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctp
