#include "speedy/model_io.hpp"

#include "json.hpp"

namespace speedy {

using nlohmann::json;

namespace {

json tree_to_json(const RegressionTree& tree) {
  json nodes = json::array();
  for (const TreeNode& n : tree.nodes()) {
    json node = {{"value", n.value}};
    if (!n.is_leaf()) {
      node["feature"] = n.feature;
      node["threshold"] = n.threshold;
      node["left"] = n.left;
      node["right"] = n.right;
    }
    nodes.push_back(std::move(node));
  }
  const TreeParams& p = tree.params();
  return {{"num_features", tree.num_features()},
          {"num_outputs", tree.num_outputs()},
          {"max_depth", p.max_depth},
          {"lambda", p.lambda},
          {"prediction_cost", p.prediction_cost},
          {"nodes", nodes}};
}

RegressionTree tree_from_json(const json& j, const std::vector<std::optional<FeatureRef>>& refs) {
  std::vector<TreeNode> nodes;
  for (const json& n : j.at("nodes")) {
    TreeNode node;
    node.value = n.at("value").get<std::vector<double>>();
    if (n.contains("feature")) {
      node.feature = n.at("feature").get<std::int32_t>();
      require(node.feature >= 0, "model: negative split feature");
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<std::uint32_t>();
      node.right = n.at("right").get<std::uint32_t>();
    }
    nodes.push_back(std::move(node));
  }
  TreeParams p{j.at("max_depth").get<std::size_t>(), j.at("lambda").get<double>(),
               j.at("prediction_cost").get<double>()};
  return RegressionTree(std::move(nodes), j.at("num_features").get<std::size_t>(),
                        j.at("num_outputs").get<std::size_t>(), p, refs);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t cols) {
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto row = j[r].get<std::vector<double>>();
    require_dims(row.size() == cols, "model: ragged matrix");
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

std::string model_to_text(const AdditiveModel& model) {
  json groups = json::array();
  for (const auto& g : model.groups)
    groups.push_back({{"id", g.id},
                      {"name", g.name},
                      {"base_dim", g.base_dim},
                      {"base_cost", g.base_cost},
                      {"per_center_cost", g.per_center_cost},
                      {"centers", matrix_to_json(g.dictionary.centers)}});
  json derived = json::array();
  for (const FeatureRef& r : model.layout.derived) derived.push_back({r.group, r.center});
  json stages = json::array();
  for (const WeakStage& s : model.stages) {
    json selector = {{"threshold", s.selector.threshold}, {"cost", s.selector.cost}};
    selector["level"] = s.selector.level ? json(*s.selector.level) : json(nullptr);
    stages.push_back({{"selector", selector},
                      {"learner", {{"max_depth", s.learner.max_depth}, {"lambda", s.learner.lambda}}},
                      {"alpha", s.alpha},
                      {"cost", s.cost},
                      {"tree", tree_to_json(s.predictor)}});
  }
  const json j = {{"format", "speedy-model"},
                  {"version", kModelFormatVersion},
                  {"num_classes", model.num_classes},
                  {"hierarchy_levels", model.hierarchy_levels},
                  {"initial_scores", model.initial_scores},
                  {"groups", groups},
                  {"layout",
                   {{"num_classes", model.layout.num_classes},
                    {"shape", model.layout.shape},
                    {"context", model.layout.context},
                    {"derived", derived}}},
                  {"stages", stages},
                  {"metadata",
                   {{"seed", model.metadata.seed},
                    {"config_hash", model.metadata.config_hash},
                    {"requested_iterations", model.metadata.requested_iterations},
                    {"termination", model.metadata.termination}}}};
  return j.dump(1) + "\n";
}

AdditiveModel model_from_text(const std::string& text) {
  AdditiveModel m;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "speedy-model") throw IoError("model: not a speedy model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw IoError("model: unsupported format version " + j.at("version").dump());
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.hierarchy_levels = j.at("hierarchy_levels").get<std::size_t>();
    m.initial_scores = j.at("initial_scores").get<std::vector<double>>();
    for (const json& g : j.at("groups")) {
      FeatureGroup fg;
      fg.id = g.at("id").get<std::uint32_t>();
      fg.name = g.at("name").get<std::string>();
      fg.base_dim = g.at("base_dim").get<std::size_t>();
      fg.base_cost = g.at("base_cost").get<double>();
      fg.per_center_cost = g.at("per_center_cost").get<double>();
      fg.dictionary = Dictionary::from_centers(matrix_from_json(g.at("centers"), fg.base_dim));
      m.groups.push_back(std::move(fg));
    }
    const json& layout = j.at("layout");
    m.layout.num_classes = layout.at("num_classes").get<std::size_t>();
    m.layout.shape = layout.at("shape").get<bool>();
    m.layout.context = layout.at("context").get<bool>();
    for (const json& r : layout.at("derived"))
      m.layout.derived.push_back({r.at(0).get<std::uint32_t>(), r.at(1).get<std::uint32_t>()});
    const auto refs = m.layout.cost_refs();
    for (const json& s : j.at("stages")) {
      WeakStage stage;
      const json& sel = s.at("selector");
      if (!sel.at("level").is_null()) stage.selector.level = sel.at("level").get<std::size_t>();
      stage.selector.threshold = sel.at("threshold").get<double>();
      stage.selector.cost = sel.at("cost").get<double>();
      stage.learner.max_depth = s.at("learner").at("max_depth").get<std::size_t>();
      stage.learner.lambda = s.at("learner").at("lambda").get<double>();
      stage.alpha = s.at("alpha").get<double>();
      stage.cost = s.at("cost").get<double>();
      stage.predictor = tree_from_json(s.at("tree"), refs);
      m.stages.push_back(std::move(stage));
    }
    const json& meta = j.at("metadata");
    m.metadata.seed = meta.at("seed").get<std::uint64_t>();
    m.metadata.config_hash = meta.at("config_hash").get<std::string>();
    m.metadata.requested_iterations = meta.at("requested_iterations").get<std::size_t>();
    m.metadata.termination = meta.at("termination").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(std::string("model: malformed file: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const AdditiveModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_text(model));
}

AdditiveModel load_model(const std::filesystem::path& path) { return model_from_text(read_file(path)); }

}  // namespace speedy
