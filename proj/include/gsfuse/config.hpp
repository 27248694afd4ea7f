#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "gsfuse/datagen.hpp"
#include "gsfuse/model.hpp"
#include "gsfuse/trainer.hpp"

namespace gsfuse {

/// One experiment: simulator, architecture and optimization knobs plus the
/// seed that drives all of them. Series shapes (L, H, d_x, d_y, vocabulary)
/// live in the scenario section only and are copied into the model.
struct RunConfig {
  std::uint64_t seed = 0;
  datagen::ScenarioConfig scenario;
  ModelConfig model;
  train::TrainConfig train;

  static RunConfig paper();
  static RunConfig desk();

  /// Model config with the series shapes filled in from the scenario.
  ModelConfig model_config() const;
  datagen::ScenarioConfig scenario_config() const;
  train::TrainConfig train_config() const;
  std::uint64_t init_seed() const;

  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Strict: every key must be present and no unknown key is accepted. Errors
/// list the valid keys of the offending section.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace gsfuse
