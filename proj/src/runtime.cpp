#include "speedy/runtime.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace speedy {

Metrics metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t K = confusion.size();
  Metrics m;
  m.confusion = confusion;
  m.class_recall.assign(K, std::nan(""));
  double correct = 0.0, total = 0.0, recall = 0.0;
  std::size_t present = 0;
  for (std::size_t t = 0; t < K; ++t) {
    double row = 0.0;
    for (std::size_t p = 0; p < K; ++p) row += static_cast<double>(confusion[t][p]);
    correct += static_cast<double>(confusion[t][t]);
    total += row;
    if (row > 0.0) {
      m.class_recall[t] = static_cast<double>(confusion[t][t]) / row;
      recall += m.class_recall[t];
      ++present;
    }
  }
  m.pixel_accuracy = total > 0.0 ? correct / total : 0.0;
  m.class_accuracy = present > 0 ? recall / static_cast<double>(present) : 0.0;
  return m;
}

Metrics evaluate(const ScoreField& scores, const Matrix& truth) {
  require_dims(scores.num_elements() == truth.rows() && scores.num_classes() == truth.cols(),
               "evaluate: scores and truth differ in shape");
  const std::size_t K = scores.num_classes();
  std::vector<std::vector<std::size_t>> confusion(K, std::vector<std::size_t>(K, 0));
  for (std::size_t j = 0; j < truth.rows(); ++j) ++confusion[argmax(truth.row(j))][argmax(scores.element(j))];
  return metrics_from_confusion(confusion);
}

namespace {

void check_compatible(const AdditiveModel& model, const StructuredInstance& instance) {
  instance.validate();
  require_dims(instance.num_classes == model.num_classes, "infer: instance and model disagree on the class count");
  require_dims(instance.hierarchy->num_levels() == model.hierarchy_levels,
               "infer: instance hierarchy depth differs from the model's");
  for (const FeatureGroup& g : model.groups) {
    require_dims(g.id < instance.base_features.size(), "infer: instance lacks a feature group the model uses");
    require_dims(instance.base_features[g.id].dim == g.base_dim, "infer: base descriptor dimension differs");
  }
}

Checkpoint checkpoint(std::size_t stage, double cost, const ScoreField& scores, const Matrix& truth) {
  const Metrics m = evaluate(scores, truth);
  return {stage, cost, m.pixel_accuracy, m.class_accuracy, cross_entropy_risk(scores, truth), m.confusion};
}

}  // namespace

InferenceResult infer(const AdditiveModel& model, const StructuredInstance& instance, double budget) {
  require(!(budget < 0.0) && !std::isnan(budget), "infer: budget must be >= 0");
  check_compatible(model, instance);
  const SegmentationHierarchy& h = *instance.hierarchy;
  const std::size_t K = model.num_classes;
  const DescriptorLayout& layout = model.layout;

  Matrix atoms(h.num_atoms(), K);
  for (std::size_t a = 0; a < h.num_atoms(); ++a)
    std::copy(model.initial_scores.begin(), model.initial_scores.end(), atoms.row(a).begin());
  SegmentStats stats = compute_segment_stats(h, atoms);
  FeatureCache cache(instance, model.groups);

  InferenceResult result{expand_atom_scores(h, atoms), CostLedger(model.groups), {}, 0};
  result.profile.initial = checkpoint(0, 0.0, result.scores, instance.labels);

  std::vector<double> row(layout.size());
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    const WeakStage& stage = model.stages[t];
    const auto selected = select_segments(stage.selector, h, stats.mean_entropy);

    // Dry run: route every selected segment, fetching pooled codes on demand.
    std::set<FeatureRef> needed;
    std::vector<std::span<const double>> updates;
    for (const SegmentRef& ref : selected) {
      const Segment& seg = h.segment(ref);
      if (layout.shape) shape_features(h, seg, std::span(row).subspan(layout.shape_offset(), DescriptorLayout::kShapeColumns));
      if (layout.context) context_features(h, stats, ref, std::span(row).subspan(layout.context_offset(), 3 * K));
      updates.push_back(stage.predictor.predict_lazy([&](std::size_t column) {
        if (column < layout.derived_offset()) return row[column];
        const FeatureRef f = layout.derived[column - layout.derived_offset()];
        needed.insert(f);
        return cache.pooled_code(seg, f);
      }));
    }

    CostLedger trial = result.ledger;
    trial.begin_stage(t, stage.selector.cost, stage.predictor.params().prediction_cost);
    for (const FeatureRef& f : needed) trial.charge(f);
    if (trial.total() > budget) break;
    trial.current().selected = selected;
    result.ledger = std::move(trial);

    for (std::size_t s = 0; s < selected.size(); ++s)
      for (std::size_t a : h.segment(selected[s]).atoms) {
        auto y = atoms.row(a);
        for (std::size_t k = 0; k < K; ++k) y[k] += stage.alpha * updates[s][k];
      }
    stats = compute_segment_stats(h, atoms);
    result.scores = expand_atom_scores(h, atoms);
    result.scores.check_finite();
    result.profile.checkpoints.push_back(checkpoint(t, result.ledger.total(), result.scores, instance.labels));
    result.stages_executed = t + 1;
  }
  return result;
}

std::vector<ProfileRow> profile_corpus(const AdditiveModel& model, std::span<const StructuredInstance> instances,
                                       std::span<const double> budgets) {
  require(!instances.empty(), "profile: empty corpus");
  for (double b : budgets) require(b >= 0.0, "profile: budgets must be >= 0");
  const std::size_t K = model.num_classes;
  std::vector<ProfileRow> rows(budgets.size());
  std::vector<std::vector<std::vector<std::size_t>>> pooled(budgets.size(),
                                                             std::vector<std::vector<std::size_t>>(K, std::vector<std::size_t>(K, 0)));
  for (std::size_t r = 0; r < budgets.size(); ++r) rows[r].budget = budgets[r];
  // One unlimited run per image: a budgeted run is the prefix of stages whose
  // cumulative cost fits, so each row reads the last affordable checkpoint.
  for (const StructuredInstance& inst : instances) {
    const InferenceResult full = infer(model, inst);
    for (std::size_t r = 0; r < budgets.size(); ++r) {
      const Checkpoint* c = &full.profile.initial;
      for (const Checkpoint& cp : full.profile.checkpoints) {
        if (cp.cost > budgets[r]) break;
        c = &cp;
      }
      for (std::size_t t = 0; t < K; ++t)
        for (std::size_t p = 0; p < K; ++p) pooled[r][t][p] += c->confusion[t][p];
      rows[r].risk += c->risk;
      rows[r].mean_cost += c->cost;
    }
  }
  const double n = static_cast<double>(instances.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Metrics m = metrics_from_confusion(pooled[r]);
    auto& row = rows[r];
    row.pixel_accuracy = m.pixel_accuracy;
    row.class_accuracy = m.class_accuracy;
    row.risk /= n;
    row.mean_cost /= n;
  }
  return rows;
}

std::string profile_csv(std::span<const ProfileRow> rows) {
  std::string out = "budget,pixel_acc,class_acc,risk\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", r.budget, r.pixel_accuracy, r.class_accuracy, r.risk);
    out += buf;
  }
  return out;
}

CorpusEvaluation evaluate_corpus(const AdditiveModel& model, std::span<const StructuredInstance> instances,
                                 double budget) {
  require(!instances.empty(), "evaluate: empty corpus");
  const std::size_t K = model.num_classes;
  std::vector<std::vector<std::size_t>> confusion(K, std::vector<std::size_t>(K, 0));
  CorpusEvaluation out;
  for (const StructuredInstance& inst : instances) {
    const InferenceResult r = infer(model, inst, budget);
    const Metrics m = evaluate(r.scores, inst.labels);
    for (std::size_t t = 0; t < K; ++t)
      for (std::size_t p = 0; p < K; ++p) confusion[t][p] += m.confusion[t][p];
    out.risk += cross_entropy_risk(r.scores, inst.labels);
    out.mean_cost += r.ledger.total();
  }
  out.metrics = metrics_from_confusion(confusion);
  out.risk /= static_cast<double>(instances.size());
  out.mean_cost /= static_cast<double>(instances.size());
  return out;
}

}  // namespace speedy
