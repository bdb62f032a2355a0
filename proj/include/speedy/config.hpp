#pragma once

// Run configuration: one JSON document shared by every CLI command, with
// environment overrides. Unknown keys are rejected.

#include <map>
#include <string>
#include <vector>

#include "speedy/boosting.hpp"
#include "speedy/scene.hpp"

namespace speedy {

struct RunConfig {
  std::size_t count = 200;  // scenes written by `generate`
  SyntheticSceneConfig scene;
  TrainConfig train;
  std::vector<double> budgets;  // absolute profile budgets; empty: use the fractions
  // Profile budgets as fractions of the mean unlimited-budget cost on the corpus.
  std::vector<double> budget_fractions{0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0};
  bool images = false;  // also write PPM renderings of label maps and masks
  std::string data;     // instance directory
  std::string model;    // model file

  void validate() const;
};

/// Environment variables that override configuration keys: SPEEDY_ followed by
/// the key path joined with "__", e.g. SPEEDY_TRAIN__ITERATIONS=20.
inline constexpr const char* kEnvPrefix = "SPEEDY_";

/// Parses `text` (empty means defaults), then applies `env` overrides. Values
/// are read as JSON, or as a plain string when they do not parse.
RunConfig parse_run_config(const std::string& text, const std::map<std::string, std::string>& env = {});

/// SPEEDY_* variables of the process environment.
std::map<std::string, std::string> environment_overrides();

std::string run_config_json(const RunConfig& config);
std::string scene_config_json(const SyntheticSceneConfig& config);
std::string train_config_json(const TrainConfig& config);
SyntheticSceneConfig scene_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);

/// FNV-1a of the canonical JSON form.
std::string scene_config_hash(const SyntheticSceneConfig& config);
std::string train_config_hash(const TrainConfig& config);

}  // namespace speedy
