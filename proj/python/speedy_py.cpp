// Python bindings: scenes, training, budgeted inference and profiling.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "speedy/config.hpp"
#include "speedy/corpus_io.hpp"
#include "speedy/model_io.hpp"
#include "speedy/runtime.hpp"

namespace py = pybind11;
using namespace speedy;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionMismatch("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

py::dict charge_dict(const StageCharge& e) {
  py::list centers, selected;
  for (const FeatureRef& f : e.centers) centers.append(py::make_tuple(f.group, f.center));
  for (const SegmentRef& s : e.selected) selected.append(py::make_tuple(s.level, s.index));
  py::dict d;
  d["stage"] = e.stage;
  d["selector_cost"] = e.selector_cost;
  d["predictor_cost"] = e.predictor_cost;
  d["group_cost"] = e.group_cost;
  d["center_cost"] = e.center_cost;
  d["total"] = e.total();
  d["groups"] = e.groups;
  d["centers"] = centers;
  d["selected"] = selected;
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["pixel_accuracy"] = m.pixel_accuracy;
  d["class_accuracy"] = m.class_accuracy;
  d["class_recall"] = m.class_recall;
  return d;
}

SyntheticSceneConfig scene_config(const std::string& json_text) {
  return json_text.empty() ? SyntheticSceneConfig{} : scene_config_from_json(json_text);
}

}  // namespace

PYBIND11_MODULE(_speedy, m) {
  m.doc() = "Anytime structured prediction with cost-greedy boosting";

  auto invalid = py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", invalid.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("softmax", [](std::vector<double> row) { return softmax(row); });
  m.def("cross_entropy_risk",
        [](const Array& scores, const Array& truth) { return cross_entropy_risk(ScoreField(to_matrix(scores)), to_matrix(truth)); });
  m.def("descent_direction", [](const Array& scores, const Array& truth) {
    return to_array(descent_direction(ScoreField(to_matrix(scores)), to_matrix(truth)));
  });

  py::class_<StructuredInstance>(m, "Instance")
      .def_readonly("width", &StructuredInstance::width)
      .def_readonly("height", &StructuredInstance::height)
      .def_readonly("num_classes", &StructuredInstance::num_classes)
      .def_property_readonly("num_pixels", &StructuredInstance::num_pixels)
      .def_property_readonly("labels", [](const StructuredInstance& s) { return to_array(s.labels); })
      .def_property_readonly("label_map",
                             [](const StructuredInstance& s) {
                               const auto map = label_map(s);
                               py::array_t<std::uint32_t> out({s.height, s.width});
                               std::copy(map.begin(), map.end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("num_levels", [](const StructuredInstance& s) { return s.hierarchy->num_levels(); })
      .def("to_text", &instance_to_text);
  m.def("instance_from_text", &instance_from_text);
  m.def("save_instance", &save_instance);
  m.def("load_instance", &load_instance);

  m.def(
      "generate_corpus",
      [](std::size_t count, std::uint64_t seed, const std::string& scene_json) {
        return generate_corpus(scene_config(scene_json), count, seed);
      },
      py::arg("count"), py::arg("seed"), py::arg("scene_json") = "");
  m.def(
      "write_corpus",
      [](const std::filesystem::path& dir, std::size_t count, std::uint64_t seed, const std::string& scene_json) {
        const RenderedCorpus c = render_corpus(scene_config(scene_json), count, seed);
        write_corpus(dir, c);
        return hex64(fnv1a(c.manifest));
      },
      py::arg("dir"), py::arg("count"), py::arg("seed"), py::arg("scene_json") = "",
      "Writes a corpus directory and returns the manifest hash.");
  m.def("load_corpus", [](const std::filesystem::path& dir) {
    LoadedCorpus c = load_corpus(dir);
    return py::make_tuple(c.names, c.instances);
  });

  py::class_<AdditiveModel>(m, "Model")
      .def_readonly("num_classes", &AdditiveModel::num_classes)
      .def_readonly("initial_scores", &AdditiveModel::initial_scores)
      .def_property_readonly("num_stages", [](const AdditiveModel& a) { return a.stages.size(); })
      .def_property_readonly("termination", [](const AdditiveModel& a) { return a.metadata.termination; })
      .def_property_readonly("config_hash", [](const AdditiveModel& a) { return a.metadata.config_hash; })
      .def("total_cost", &AdditiveModel::total_cost)
      .def("prefix", &AdditiveModel::prefix)
      .def("to_text", &model_to_text)
      .def("save", [](const AdditiveModel& a, const std::filesystem::path& p) { save_model(a, p); });
  m.def("model_from_text", &model_from_text);
  m.def("load_model", &load_model);

  m.def(
      "train",
      [](const std::vector<StructuredInstance>& instances, const std::string& config_json) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(instances, train_config_from_json(config_json.empty() ? "{}" : config_json));
        }
        py::list log;
        for (const IterationLog& l : r.log) {
          py::dict d;
          d["iteration"] = l.iteration;
          d["selector"] = l.selector;
          d["tree_depth"] = l.tree_depth;
          d["max_depth"] = l.learner.max_depth;
          d["lambda"] = l.learner.lambda;
          d["alpha"] = l.alpha;
          d["delta_risk"] = l.delta_risk;
          d["cost"] = l.cost;
          d["ratio"] = l.ratio;
          d["risk"] = l.risk;
          d["pixel_accuracy"] = l.pixel_accuracy;
          d["class_accuracy"] = l.class_accuracy;
          log.append(d);
        }
        return py::make_tuple(std::move(r.model), log, r.initial_risk);
      },
      py::arg("instances"), py::arg("config_json") = "",
      "Returns (model, per-iteration log, initial risk). The config is the `train` section as JSON.");

  m.def(
      "infer",
      [](const AdditiveModel& model, const StructuredInstance& inst, double budget) {
        const InferenceResult r = infer(model, inst, budget);
        py::dict d;
        d["scores"] = to_array(r.scores.matrix());
        d["cost"] = r.ledger.total();
        d["stages_executed"] = r.stages_executed;
        py::list ledger;
        for (const StageCharge& e : r.ledger.entries()) ledger.append(charge_dict(e));
        d["ledger"] = ledger;
        d["metrics"] = metrics_dict(evaluate(r.scores, inst.labels));
        return d;
      },
      py::arg("model"), py::arg("instance"), py::arg("budget") = kUnlimitedBudget);

  m.def(
      "evaluate_corpus",
      [](const AdditiveModel& model, const std::vector<StructuredInstance>& instances, double budget) {
        const CorpusEvaluation ev = evaluate_corpus(model, instances, budget);
        py::dict d = metrics_dict(ev.metrics);
        d["risk"] = ev.risk;
        d["mean_cost"] = ev.mean_cost;
        return d;
      },
      py::arg("model"), py::arg("instances"), py::arg("budget") = kUnlimitedBudget);

  m.def("profile_corpus", [](const AdditiveModel& model, const std::vector<StructuredInstance>& instances,
                             const std::vector<double>& budgets) {
    py::list rows;
    for (const ProfileRow& r : profile_corpus(model, instances, budgets)) {
      py::dict d;
      d["budget"] = r.budget;
      d["pixel_accuracy"] = r.pixel_accuracy;
      d["class_accuracy"] = r.class_accuracy;
      d["risk"] = r.risk;
      d["mean_cost"] = r.mean_cost;
      rows.append(d);
    }
    return rows;
  });
}
