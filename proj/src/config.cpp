#include "speedy/config.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"

extern char** environ;

namespace speedy {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) throw InvalidInput("config: unknown key '" + (where.empty() ? "" : where + ".") + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

json scene_to_json(const SyntheticSceneConfig& c) {
  json groups = json::array();
  for (const auto& g : c.groups)
    groups.push_back({{"name", g.name}, {"noise_scale", g.noise_scale}, {"merged_class", g.merged_class}});
  return {{"width", c.width},
          {"height", c.height},
          {"num_classes", c.num_classes},
          {"num_shapes", c.num_shapes},
          {"noise_level", c.noise_level},
          {"hierarchy_levels", c.hierarchy_levels},
          {"rng_seed", c.rng_seed},
          {"feature_seed", c.feature_seed},
          {"base_dim", c.base_dim},
          {"min_shape_fraction", c.min_shape_fraction},
          {"max_shape_fraction", c.max_shape_fraction},
          {"groups", groups}};
}

SyntheticSceneConfig scene_from_json(const json& j) {
  const std::string w = "scene";
  reject_unknown(j,
                 {"width", "height", "num_classes", "num_shapes", "noise_level", "hierarchy_levels", "rng_seed",
                  "feature_seed", "base_dim", "min_shape_fraction", "max_shape_fraction", "groups"},
                 w);
  SyntheticSceneConfig c;
  read(j, "width", c.width, w);
  read(j, "height", c.height, w);
  read(j, "num_classes", c.num_classes, w);
  read(j, "num_shapes", c.num_shapes, w);
  read(j, "noise_level", c.noise_level, w);
  read(j, "hierarchy_levels", c.hierarchy_levels, w);
  read(j, "rng_seed", c.rng_seed, w);
  read(j, "feature_seed", c.feature_seed, w);
  read(j, "base_dim", c.base_dim, w);
  read(j, "min_shape_fraction", c.min_shape_fraction, w);
  read(j, "max_shape_fraction", c.max_shape_fraction, w);
  if (j.contains("groups")) {
    if (!j["groups"].is_array()) throw InvalidInput("config: scene.groups must be an array");
    c.groups.clear();
    for (const auto& g : j["groups"]) {
      reject_unknown(g, {"name", "noise_scale", "merged_class"}, "scene.groups[]");
      SyntheticGroupSpec spec;
      read(g, "name", spec.name, "scene.groups[]");
      read(g, "noise_scale", spec.noise_scale, "scene.groups[]");
      read(g, "merged_class", spec.merged_class, "scene.groups[]");
      c.groups.push_back(spec);
    }
  }
  return c;
}

json train_to_json(const TrainConfig& c) {
  json costs = json::array();
  for (const auto& g : c.group_costs)
    costs.push_back({{"name", g.name}, {"base_cost", g.base_cost}, {"per_center_cost", g.per_center_cost}});
  // `jobs` changes wall-clock time only, so it stays out of the hashed form.
  return {{"iterations", c.iterations},
          {"thresholds", c.thresholds},
          {"all_levels_selectors", c.all_levels_selectors},
          {"selector_cost", c.selector_cost},
          {"depths", c.depths},
          {"lambda0", c.lambda0},
          {"lambda_multipliers", c.lambda_multipliers},
          {"prediction_cost", c.prediction_cost},
          {"folds", c.folds},
          {"alpha_max", c.alpha_max},
          {"line_search_tolerance", c.line_search_tolerance},
          {"min_improvement", c.min_improvement},
          {"seed", c.seed},
          {"dictionary_size", c.dictionary_size},
          {"kmeans_iterations", c.kmeans_iterations},
          {"kmeans_samples", c.kmeans_samples},
          {"shape_features", c.shape_features},
          {"context_features", c.context_features},
          {"group_costs", costs}};
}

TrainConfig train_from_json(const json& j) {
  const std::string w = "train";
  reject_unknown(j,
                 {"iterations", "thresholds", "all_levels_selectors", "selector_cost", "depths", "lambda0",
                  "lambda_multipliers", "prediction_cost", "folds", "alpha_max", "line_search_tolerance",
                  "min_improvement", "seed", "dictionary_size", "kmeans_iterations", "kmeans_samples",
                  "shape_features", "context_features", "group_costs", "jobs"},
                 w);
  TrainConfig c;
  read(j, "iterations", c.iterations, w);
  read(j, "thresholds", c.thresholds, w);
  read(j, "all_levels_selectors", c.all_levels_selectors, w);
  read(j, "selector_cost", c.selector_cost, w);
  read(j, "depths", c.depths, w);
  read(j, "lambda0", c.lambda0, w);
  read(j, "lambda_multipliers", c.lambda_multipliers, w);
  read(j, "prediction_cost", c.prediction_cost, w);
  read(j, "folds", c.folds, w);
  read(j, "alpha_max", c.alpha_max, w);
  read(j, "line_search_tolerance", c.line_search_tolerance, w);
  read(j, "min_improvement", c.min_improvement, w);
  read(j, "seed", c.seed, w);
  read(j, "dictionary_size", c.dictionary_size, w);
  read(j, "kmeans_iterations", c.kmeans_iterations, w);
  read(j, "kmeans_samples", c.kmeans_samples, w);
  read(j, "shape_features", c.shape_features, w);
  read(j, "context_features", c.context_features, w);
  read(j, "jobs", c.jobs, w);
  if (j.contains("group_costs")) {
    if (!j["group_costs"].is_array()) throw InvalidInput("config: train.group_costs must be an array");
    c.group_costs.clear();
    for (const auto& g : j["group_costs"]) {
      reject_unknown(g, {"name", "base_cost", "per_center_cost"}, "train.group_costs[]");
      GroupCost cost{};
      read(g, "name", cost.name, "train.group_costs[]");
      read(g, "base_cost", cost.base_cost, "train.group_costs[]");
      read(g, "per_center_cost", cost.per_center_cost, "train.group_costs[]");
      c.group_costs.push_back(cost);
    }
  }
  return c;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string(what) + ": not valid JSON: " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  scene.validate();
  train.validate();
  for (double b : budgets) require(b >= 0.0, "config: budgets must be >= 0");
  for (double f : budget_fractions) require(f >= 0.0, "config: budget fractions must be >= 0");
}

std::map<std::string, std::string> environment_overrides() {
  std::map<std::string, std::string> out;
  const std::string prefix = kEnvPrefix;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

RunConfig parse_run_config(const std::string& text, const std::map<std::string, std::string>& env) {
  json j = text.empty() ? json::object() : parse_json(text, "config");
  if (!j.is_object()) throw InvalidInput("config: top level must be an object");
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string path = name.substr(prefix.size());
    std::transform(path.begin(), path.end(), path.begin(), [](unsigned char c) { return std::tolower(c); });
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = path.find("__", start);
      const std::string key = path.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      if (key.empty()) throw InvalidInput("config: malformed override " + name);
      if (!node->is_object()) throw InvalidInput("config: override " + name + " descends into a non-object");
      if (sep == std::string::npos) {
        json parsed = json::parse(value, nullptr, false);
        (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
        break;
      }
      node = &(*node)[key];
      if (node->is_null()) *node = json::object();
      start = sep + 2;
    }
  }
  reject_unknown(j, {"count", "scene", "train", "budgets", "budget_fractions", "images", "data", "model"}, "");
  RunConfig c;
  read(j, "count", c.count, "");
  if (j.contains("scene")) c.scene = scene_from_json(j["scene"]);
  if (j.contains("train")) c.train = train_from_json(j["train"]);
  read(j, "budgets", c.budgets, "");
  read(j, "budget_fractions", c.budget_fractions, "");
  read(j, "images", c.images, "");
  read(j, "data", c.data, "");
  read(j, "model", c.model, "");
  c.validate();
  return c;
}

std::string run_config_json(const RunConfig& c) {
  json t = train_to_json(c.train);
  t["jobs"] = c.train.jobs;
  const json j = {{"count", c.count},
                  {"scene", scene_to_json(c.scene)},
                  {"train", t},
                  {"budgets", c.budgets},
                  {"budget_fractions", c.budget_fractions},
                  {"images", c.images},
                  {"data", c.data},
                  {"model", c.model}};
  return j.dump(2);
}

std::string scene_config_json(const SyntheticSceneConfig& config) { return scene_to_json(config).dump(); }
std::string train_config_json(const TrainConfig& config) { return train_to_json(config).dump(); }

SyntheticSceneConfig scene_config_from_json(const std::string& text) {
  return scene_from_json(parse_json(text, "scene config"));
}
TrainConfig train_config_from_json(const std::string& text) {
  return train_from_json(parse_json(text, "train config"));
}

std::string scene_config_hash(const SyntheticSceneConfig& config) {
  return hex64(fnv1a(scene_config_json(config)));
}
std::string train_config_hash(const TrainConfig& config) { return hex64(fnv1a(train_config_json(config))); }

}  // namespace speedy
