#include "speedy/boosting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <thread>

#include "corpus.hpp"
#include "speedy/config.hpp"
#include "speedy/rng.hpp"

namespace speedy {

using detail::Corpus;
using detail::LineSearchOutcome;
using detail::StageEffect;
using detail::ViewState;

std::vector<LearnerSpec> TrainConfig::learners() const {
  std::vector<LearnerSpec> out;
  for (std::size_t d : depths)
    for (double m : lambda_multipliers) out.push_back({d, m * lambda0});
  return out;
}

void TrainConfig::validate() const {
  require(folds >= 2, "train config: folds must be at least 2");
  require(!thresholds.empty(), "train config: empty selector threshold grid");
  for (double t : thresholds) require(std::isfinite(t) && t >= 0.0, "train config: thresholds must be >= 0");
  require(!depths.empty(), "train config: empty depth grid");
  for (std::size_t d : depths) require(d <= 16, "train config: tree depth above 16");
  require(!lambda_multipliers.empty(), "train config: empty lambda grid");
  require(std::isfinite(lambda0) && lambda0 >= 0.0, "train config: lambda0 must be >= 0");
  for (double m : lambda_multipliers)
    require(std::isfinite(m) && m >= 0.0, "train config: lambda multipliers must be >= 0");
  require(std::isfinite(selector_cost) && selector_cost >= 0.0, "train config: selector cost must be >= 0");
  require(std::isfinite(prediction_cost) && prediction_cost >= 0.0, "train config: prediction cost must be >= 0");
  require(selector_cost + prediction_cost > 0.0, "train config: stages must have positive fixed cost");
  require(std::isfinite(alpha_max) && alpha_max > 0.0, "train config: alpha_max must be positive");
  require(line_search_tolerance > 0.0, "train config: line-search tolerance must be positive");
  require(min_improvement >= 0.0, "train config: min_improvement must be >= 0");
  require(dictionary_size >= 1, "train config: dictionary size must be >= 1");
  require(kmeans_iterations >= 1, "train config: k-means iterations must be >= 1");
  require(kmeans_samples >= dictionary_size, "train config: fewer k-means samples than centers");
  require(jobs >= 1, "train config: jobs must be >= 1");
  for (const auto& g : group_costs)
    require(g.base_cost >= 0.0 && g.per_center_cost >= 0.0, "train config: group costs must be >= 0");
}

AdditiveModel AdditiveModel::prefix(std::size_t num_stages) const {
  require(num_stages <= stages.size(), "model prefix longer than the model");
  AdditiveModel m = *this;
  m.stages.resize(num_stages);
  return m;
}

FeatureSet AdditiveModel::features_used(std::size_t num_stages) const {
  FeatureSet set;
  for (std::size_t t = 0; t < std::min(num_stages, stages.size()); ++t)
    for (const FeatureRef& ref : stages[t].predictor.used_features()) set.insert(ref);
  return set;
}

double AdditiveModel::total_cost() const {
  double c = 0.0;
  for (const auto& s : stages) c += s.cost;
  return c;
}

void AdditiveModel::validate() const {
  require(num_classes >= 1, "model: no classes");
  require(hierarchy_levels >= 1, "model: no hierarchy levels");
  require_dims(initial_scores.size() == num_classes, "model: f_0 size differs from the class count");
  for (double v : initial_scores) require(std::isfinite(v), "model: non-finite f_0");
  require_dims(layout.num_classes == num_classes, "model: layout class count");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    require(groups[g].id == g, "model: group ids must be dense");
    groups[g].validate();
  }
  for (const FeatureRef& ref : layout.derived)
    require(ref.group < groups.size() && ref.center < groups[ref.group].dictionary.size(),
            "model: layout references an unknown feature");
  for (const auto& s : stages) {
    s.selector.validate(hierarchy_levels);
    require_dims(s.predictor.num_features() == layout.size(), "model: tree width differs from the layout");
    require_dims(s.predictor.num_outputs() == num_classes, "model: tree output size differs from K");
    require(std::isfinite(s.alpha) && s.alpha >= 0.0, "model: stage step must be finite and >= 0");
    require(std::isfinite(s.cost) && s.cost >= 0.0, "model: stage cost must be finite and >= 0");
  }
}

std::optional<GradientDataset> build_gradient_dataset(std::span<const StructuredInstance> instances,
                                                      std::span<const ScoreField> predictions,
                                                      const EntropySelector& selector,
                                                      std::span<const FeatureGroup> groups,
                                                      const DescriptorLayout& layout) {
  require_dims(instances.size() == predictions.size(), "gradient dataset: one prediction per instance");
  const std::size_t F = layout.size();
  std::vector<double> rows, targets, weights;
  std::vector<GradientDataset::Origin> origins;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const StructuredInstance& inst = instances[i];
    const ScoreField& pred = predictions[i];
    require_dims(pred.num_elements() == inst.num_pixels() && pred.num_classes() == inst.num_classes,
                 "gradient dataset: prediction shape differs from the instance");
    require_dims(layout.num_classes == inst.num_classes, "gradient dataset: layout class count");
    const auto& h = *inst.hierarchy;
    selector.validate(h.num_levels());
    const SegmentStats stats = compute_segment_stats(h, pred);
    const auto selected = select_segments(selector, h, stats.mean_entropy);
    if (selected.empty()) continue;
    FeatureCache cache(inst, groups);
    const std::size_t K = inst.num_classes;
    std::vector<double> q(K);
    for (const SegmentRef& ref : selected) {
      const Segment& seg = h.segment(ref);
      const std::size_t base = rows.size();
      rows.resize(base + F, 0.0);
      std::span<double> row(rows.data() + base, F);
      if (layout.shape) shape_features(h, seg, row.subspan(layout.shape_offset(), DescriptorLayout::kShapeColumns));
      if (layout.context) context_features(h, stats, ref, row.subspan(layout.context_offset(), 3 * K));
      for (std::size_t d = 0; d < layout.derived.size(); ++d)
        row[layout.derived_offset() + d] = cache.pooled_code(seg, layout.derived[d]);
      std::vector<double> grad(K, 0.0);
      for (std::size_t p : seg.pixels) {
        softmax_into(pred.element(p), q);
        auto lab = inst.labels.row(p);
        for (std::size_t k = 0; k < K; ++k) grad[k] += lab[k] - q[k];
      }
      for (double g : grad) targets.push_back(g / static_cast<double>(seg.size()));
      weights.push_back(static_cast<double>(seg.size()));
      origins.push_back({i, ref});
    }
  }
  if (weights.empty()) return std::nullopt;
  const std::size_t n = weights.size(), K = targets.size() / n;
  GradientDataset out;
  out.data.features = Matrix(n, F);
  out.data.features.data() = std::move(rows);
  out.data.targets = Matrix(n, K);
  out.data.targets.data() = std::move(targets);
  out.data.weights = std::move(weights);
  out.origins = std::move(origins);
  return out;
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi, double tolerance) {
  require(lo <= hi, "golden section: empty interval");
  require(tolerance > 0.0, "golden section: tolerance must be positive");
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

LineSearchResult line_search(std::span<const ScoreField> scores, std::span<const Matrix> updates,
                             std::span<const Matrix> truths, double alpha_max, double tolerance) {
  require(!scores.empty(), "line search: no instances");
  require_dims(scores.size() == updates.size() && scores.size() == truths.size(),
               "line search: scores, updates and truths differ in count");
  for (std::size_t i = 0; i < scores.size(); ++i)
    require_dims(updates[i].rows() == scores[i].num_elements() && updates[i].cols() == scores[i].num_classes(),
                 "line search: update shape differs from the scores");
  require(std::isfinite(alpha_max) && alpha_max > 0.0, "line search: alpha_max must be positive");
  const auto risk = [&](double alpha) {
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      ScoreField moved = scores[i];
      const Matrix& u = updates[i];
      double* y = moved.matrix().data().data();
      for (std::size_t e = 0; e < u.rows() * u.cols(); ++e) y[e] += alpha * u.data()[e];
      total += cross_entropy_risk(moved, truths[i]);
    }
    return total / static_cast<double>(scores.size());
  };
  LineSearchResult out;
  out.risk_before = risk(0.0);
  double alpha = golden_section_minimize(risk, 0.0, alpha_max, tolerance);
  double value = risk(alpha);
  if (const double at_max = risk(alpha_max); at_max < value) {
    alpha = alpha_max;
    value = at_max;
  }
  if (!(value < out.risk_before)) {
    alpha = 0.0;
    value = out.risk_before;
  }
  out.alpha = alpha;
  out.risk_after = value;
  return out;
}

std::optional<std::size_t> speedboost_select(std::span<const CandidateScore> candidates, double min_improvement) {
  std::optional<std::size_t> best;
  double best_ratio = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CandidateScore& c = candidates[i];
    if (!c.active || !(c.delta_risk > min_improvement)) continue;
    require(c.cost > 0.0, "speedboost: candidate cost must be positive");
    const double ratio = c.delta_risk / c.cost;
    if (!best || ratio > best_ratio || (ratio == best_ratio && c.cost < candidates[*best].cost)) {
      best = i;
      best_ratio = ratio;
    }
  }
  return best;
}

std::vector<std::size_t> assign_folds(std::size_t num_instances, std::size_t folds, std::uint64_t seed) {
  require(folds >= 2, "folds must be at least 2");
  require_dims(num_instances >= folds, "fewer instances than stacking folds");
  std::vector<std::size_t> perm(num_instances);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed ^ 0x5f0d5f0d5f0d5f0dULL);
  shuffle(perm, rng);
  std::vector<std::size_t> fold(num_instances);
  for (std::size_t r = 0; r < num_instances; ++r) fold[perm[r]] = r % folds;
  return fold;
}

namespace {

std::vector<double> smoothed_log_frequencies(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> f(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    f[k] = std::log((counts[k] + 1.0) / (total + static_cast<double>(counts.size())));
  return f;
}

std::vector<double> label_mass(const StructuredInstance& inst) {
  std::vector<double> c(inst.num_classes, 0.0);
  for (std::size_t p = 0; p < inst.num_pixels(); ++p) {
    auto lab = inst.labels.row(p);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += lab[k];
  }
  return c;
}

}  // namespace

std::vector<double> initial_scores(std::span<const StructuredInstance> instances, std::size_t num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  for (const auto& inst : instances) {
    require_dims(inst.num_classes == num_classes, "initial scores: class count differs");
    const auto c = label_mass(inst);
    for (std::size_t k = 0; k < num_classes; ++k) counts[k] += c[k];
  }
  return smoothed_log_frequencies(counts);
}

std::vector<FeatureGroup> fit_feature_groups(std::span<const StructuredInstance> instances,
                                             const TrainConfig& config) {
  require(!instances.empty(), "feature groups: no instances");
  const std::size_t G = instances.front().base_features.size();
  require_dims(config.group_costs.size() >= G, "feature groups: no cost table entry for some group");
  std::size_t total_pixels = 0;
  for (const auto& inst : instances) {
    require_dims(inst.base_features.size() == G, "feature groups: instances disagree on the base feature groups");
    for (std::size_t g = 0; g < G; ++g)
      require_dims(inst.base_features[g].dim == instances.front().base_features[g].dim,
                   "feature groups: base descriptor dimension differs between instances");
    total_pixels += inst.num_pixels();
  }
  std::vector<FeatureGroup> groups;
  for (std::size_t g = 0; g < G; ++g) {
    const std::size_t dim = instances.front().base_features[g].dim;
    const std::size_t m = std::min(config.kmeans_samples, total_pixels);
    Rng rng(config.seed * 0x9e3779b97f4a7c15ULL + 0x100 + g);
    Matrix samples(m, dim);
    for (std::size_t s = 0; s < m; ++s) {
      const auto& inst = instances[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<std::int64_t>(instances.size()) - 1))];
      const auto p = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(inst.num_pixels()) - 1));
      const auto d = inst.base_features[g].descriptor(p);
      std::copy(d.begin(), d.end(), samples.row(s).begin());
    }
    FeatureGroup fg;
    fg.id = static_cast<std::uint32_t>(g);
    fg.name = config.group_costs[g].name;
    fg.base_dim = dim;
    fg.base_cost = config.group_costs[g].base_cost;
    fg.per_center_cost = config.group_costs[g].per_center_cost;
    fg.dictionary = kmeans_dictionary(samples, std::min(config.dictionary_size, m), config.kmeans_iterations,
                                      config.seed + 7919 * (g + 1));
    fg.validate();
    groups.push_back(std::move(fg));
  }
  return groups;
}

namespace {

struct Selection {
  std::vector<std::vector<SegmentRef>> refs;  // per instance
  std::size_t count = 0;
};

struct Samples {
  TreeDataset data;
  std::vector<std::vector<std::uint32_t>> order;
  std::vector<std::size_t> instance;
};

class Trainer {
 public:
  Trainer(std::span<const StructuredInstance> instances, const TrainConfig& config, TrainTrace* trace)
      : instances_(instances), config_(config), trace_(trace) {}

  TrainResult run(std::vector<ScoreField>* held_out);

 private:
  Selection select_all(const EntropySelector& sel, const std::vector<ViewState>& view,
                       const std::vector<bool>& member) const;
  Samples build_samples(const Selection& selection, const std::vector<ViewState>& view,
                        const Corpus::Descriptors& desc) const;
  void add_effect(StageEffect& effect, const RegressionTree& tree, const Selection& selection,
                  const std::vector<ViewState>& view, const Corpus::Descriptors& desc) const;
  void apply(std::vector<ViewState>& view, const RegressionTree& tree, double alpha, const Selection& selection,
             const Corpus::Descriptors& desc) const;
  struct SelectorPlan {
    Selection held, own;
    std::size_t tree_source = 0;    // selector whose trees this one reuses (itself if none)
    std::size_t effect_source = 0;  // selector whose line searches this one reuses
    std::map<double, RegressionTree> trees;  // per lambda, grown to the deepest depth requested
    std::vector<std::size_t> sample_instances;
  };
  void grow_trees(SelectorPlan& plan, const Corpus::Descriptors& held_desc) const;
  std::vector<TrainTrace::Candidate> evaluate_selector(std::size_t si, const std::vector<SelectorPlan>& plans,
                                                       const std::vector<std::vector<TrainTrace::Candidate>>& done,
                                                       const Corpus::Descriptors& own_desc) const;
  void record_provenance(std::vector<TrainTrace::Provenance>* out, int consumer, const Samples& samples) const;

  /// fn(0..count-1) on up to config.jobs threads; each index runs exactly once.
  template <class Fn>
  void parallel_for(std::size_t count, Fn&& fn) const {
    const std::size_t jobs = std::min(config_.jobs, count);
    if (jobs <= 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
      });
    for (auto& t : pool) t.join();
  }

  std::span<const StructuredInstance> instances_;
  const TrainConfig& config_;
  TrainTrace* trace_;

  std::unique_ptr<Corpus> corpus_;
  std::vector<FeatureGroup> groups_;
  std::vector<std::optional<FeatureRef>> column_refs_;
  std::vector<EntropySelector> selectors_;
  std::vector<LearnerSpec> learners_;
  std::vector<std::size_t> fold_;
  std::vector<bool> everyone_;
  std::vector<ViewState> own_, held_;
  FeatureSet paid_;
  std::size_t iteration_ = 0;
};

Selection Trainer::select_all(const EntropySelector& sel, const std::vector<ViewState>& view,
                              const std::vector<bool>& member) const {
  Selection s;
  s.refs.resize(corpus_->size());
  for (std::size_t i = 0; i < corpus_->size(); ++i) {
    if (!member[i]) continue;
    s.refs[i] = select_segments(sel, *(*corpus_)[i].hierarchy, view[i].stats.mean_entropy);
    s.count += s.refs[i].size();
  }
  return s;
}

Samples Trainer::build_samples(const Selection& selection, const std::vector<ViewState>& view,
                               const Corpus::Descriptors& desc) const {
  const Corpus& corpus = *corpus_;
  const std::size_t K = corpus.num_classes(), F = corpus.layout().size(), n = selection.count;
  Samples out;
  out.data.features = Matrix(n, F);
  out.data.targets = Matrix(n, K);
  out.data.weights.resize(n);
  out.instance.resize(n);
  std::vector<std::int32_t> pos(corpus.num_global_segments(), -1);
  std::size_t r = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& item = corpus[i];
    for (const SegmentRef& ref : selection.refs[i]) {
      const std::size_t g = corpus.global_id(i, ref);
      pos[g] = static_cast<std::int32_t>(r);
      auto src = desc.rows.row(g);
      std::copy(src.begin(), src.end(), out.data.features.row(r).begin());
      auto p = item.segment_label_mean[ref.level].row(ref.index);
      auto q = view[i].stats.mean_q[ref.level].row(ref.index);
      for (std::size_t k = 0; k < K; ++k) out.data.targets(r, k) = p[k] - q[k];
      out.data.weights[r] = static_cast<double>(item.hierarchy->segment(ref).size());
      out.instance[r] = i;
      ++r;
    }
  }
  out.order.resize(F);
  for (std::size_t f = 0; f < F; ++f) {
    auto& o = out.order[f];
    o.reserve(n);
    for (std::uint32_t g : desc.order[f])
      if (pos[g] >= 0) o.push_back(static_cast<std::uint32_t>(pos[g]));
  }
  return out;
}

void Trainer::add_effect(StageEffect& effect, const RegressionTree& tree, const Selection& selection,
                         const std::vector<ViewState>& view, const Corpus::Descriptors& desc) const {
  const Corpus& corpus = *corpus_;
  std::map<const double*, std::size_t> leaf_ids;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& item = corpus[i];
    for (const SegmentRef& ref : selection.refs[i]) {
      const auto u = tree.predict(desc.rows.row(corpus.global_id(i, ref)));
      auto [it, fresh] = leaf_ids.try_emplace(u.data(), 0);
      if (fresh) it->second = effect.add_leaf(u);
      for (std::size_t a : item.hierarchy->segment(ref).atoms)
        effect.add_atom(view[i].atom_scores.row(a), item.atom_size[a], item.atom_labels.row(a), it->second);
    }
  }
}

void Trainer::apply(std::vector<ViewState>& view, const RegressionTree& tree, double alpha,
                    const Selection& selection, const Corpus::Descriptors& desc) const {
  const Corpus& corpus = *corpus_;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (selection.refs[i].empty()) continue;
    for (const SegmentRef& ref : selection.refs[i]) {
      const auto u = tree.predict(desc.rows.row(corpus.global_id(i, ref)));
      for (std::size_t a : corpus[i].hierarchy->segment(ref).atoms) {
        auto y = view[i].atom_scores.row(a);
        for (std::size_t k = 0; k < y.size(); ++k) y[k] += alpha * u[k];
      }
    }
    view[i].refresh(*corpus[i].hierarchy);
  }
}

void Trainer::record_provenance(std::vector<TrainTrace::Provenance>* out, int consumer, const Samples& samples) const {
  if (out == nullptr) return;
  for (std::size_t i : samples.instance) out->push_back({iteration_, consumer, i, fold_[i]});
}

void Trainer::grow_trees(SelectorPlan& plan, const Corpus::Descriptors& held_desc) const {
  const Samples samples = build_samples(plan.held, held_, held_desc);
  plan.sample_instances = samples.instance;
  SplitCostModel costs{column_refs_, groups_, paid_};
  for (const LearnerSpec& learner : learners_) {
    if (plan.trees.contains(learner.lambda)) continue;
    std::size_t depth = 0;
    for (const auto& l : learners_)
      if (l.lambda == learner.lambda) depth = std::max(depth, l.max_depth);
    plan.trees.emplace(learner.lambda,
                       train_tree(samples.data, {depth, learner.lambda, config_.prediction_cost}, costs, &samples.order));
  }
}

std::vector<TrainTrace::Candidate> Trainer::evaluate_selector(std::size_t si, const std::vector<SelectorPlan>& plans,
                                                              const std::vector<std::vector<TrainTrace::Candidate>>& done,
                                                              const Corpus::Descriptors& own_desc) const {
  const EntropySelector& sel = selectors_[si];
  const SelectorPlan& plan = plans[si];
  std::vector<TrainTrace::Candidate> out(learners_.size());
  for (std::size_t li = 0; li < learners_.size(); ++li) {
    out[li].selector_index = si;
    out[li].learner_index = li;
    out[li].selector = sel;
    out[li].learner = learners_[li];
  }
  if (plan.held.count == 0) return out;  // inactive selector
  const auto& trees = plans[plan.tree_source].trees;
  for (std::size_t li = 0; li < learners_.size(); ++li) {
    const LearnerSpec& learner = learners_[li];
    TrainTrace::Candidate& c = out[li];
    c.tree = trees.at(learner.lambda).truncated(learner.max_depth, column_refs_);
    c.active = true;
    c.cost = sel.cost + tree_cost(c.tree, paid_, groups_);
    if (plan.effect_source != si) {
      // Same trees and same atoms to update: identical line search.
      c.alpha = done[plan.effect_source][li].alpha;
      c.delta_risk = done[plan.effect_source][li].delta_risk;
      continue;
    }
    const TrainTrace::Candidate* twin = nullptr;
    for (std::size_t lj = 0; lj < li && twin == nullptr; ++lj)
      if (out[lj].tree.same_function(c.tree)) twin = &out[lj];
    if (twin != nullptr) {
      c.alpha = twin->alpha;
      c.delta_risk = twin->delta_risk;
      continue;
    }
    StageEffect effect(corpus_->num_classes(), static_cast<double>(corpus_->size()));
    add_effect(effect, c.tree, plan.own, own_, own_desc);
    const LineSearchOutcome ls = line_search_effect(effect, config_.alpha_max, config_.line_search_tolerance);
    c.alpha = ls.alpha;
    c.delta_risk = ls.delta_risk;
  }
  return out;
}

TrainResult Trainer::run(std::vector<ScoreField>* held_out) {
  config_.validate();
  require_dims(instances_.size() >= config_.folds, "training needs at least as many instances as stacking folds");
  const std::size_t K = instances_.front().num_classes;
  const std::size_t levels = instances_.front().hierarchy->num_levels();
  for (const auto& inst : instances_) {
    inst.validate();
    require_dims(inst.num_classes == K, "training instances disagree on the class count");
    require_dims(inst.hierarchy->num_levels() == levels, "training instances disagree on the hierarchy depth");
  }

  groups_ = fit_feature_groups(instances_, config_);
  const DescriptorLayout layout = full_layout(K, groups_, config_.shape_features, config_.context_features);
  corpus_ = std::make_unique<Corpus>(instances_, groups_, layout);
  column_refs_ = layout.cost_refs();
  selectors_ = enumerate_selectors(levels, config_.thresholds, config_.selector_cost, config_.all_levels_selectors);
  learners_ = config_.learners();
  fold_ = assign_folds(instances_.size(), config_.folds, config_.seed);
  everyone_.assign(instances_.size(), true);
  const std::size_t N = instances_.size(), folds = config_.folds;

  TrainResult result;
  AdditiveModel& model = result.model;
  model.num_classes = K;
  model.hierarchy_levels = levels;
  model.initial_scores = initial_scores(instances_, K);
  model.groups = groups_;
  model.layout = layout;
  model.metadata.seed = config_.seed;
  model.metadata.config_hash = train_config_hash(config_);
  model.metadata.requested_iterations = config_.iterations;

  // Fold-k auxiliary f_0 uses only the labels outside fold k.
  std::vector<std::vector<double>> fold_mass(folds, std::vector<double>(K, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    const auto c = label_mass(instances_[i]);
    for (std::size_t k = 0; k < K; ++k) fold_mass[fold_[i]][k] += c[k];
  }
  own_.resize(N);
  held_.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& h = *(*corpus_)[i].hierarchy;
    own_[i].atom_scores = Matrix(h.num_atoms(), K);
    held_[i].atom_scores = Matrix(h.num_atoms(), K);
    std::vector<double> rest(K, 0.0);
    for (std::size_t f = 0; f < folds; ++f)
      if (f != fold_[i])
        for (std::size_t k = 0; k < K; ++k) rest[k] += fold_mass[f][k];
    const auto aux_f0 = smoothed_log_frequencies(rest);
    for (std::size_t a = 0; a < h.num_atoms(); ++a) {
      std::copy(model.initial_scores.begin(), model.initial_scores.end(), own_[i].atom_scores.row(a).begin());
      std::copy(aux_f0.begin(), aux_f0.end(), held_[i].atom_scores.row(a).begin());
    }
    own_[i].refresh(h);
    held_[i].refresh(h);
  }

  std::vector<std::size_t> all(N);
  std::iota(all.begin(), all.end(), 0);
  detail::ViewMetrics metrics = detail::view_metrics(*corpus_, own_, all);
  result.initial_risk = metrics.risk;
  result.initial_pixel_accuracy = metrics.pixel_accuracy;

  if (trace_ != nullptr) {
    trace_->fold_of = fold_;
    trace_->aux_trained_on.assign(folds, {});
    trace_->iterations.clear();
    trace_->provenance.clear();
  }
  std::vector<std::set<std::size_t>> aux_trained_on(folds);
  std::vector<FeatureSet> aux_paid(folds);
  const bool want_provenance = trace_ != nullptr && trace_->record_provenance;

  for (iteration_ = 0; iteration_ < config_.iterations; ++iteration_) {
    const Corpus::Descriptors held_desc = corpus_->descriptors(held_);
    const Corpus::Descriptors own_desc = corpus_->descriptors(own_);

    // Selectors that pick the same segments share datasets and trees; when
    // their own-model selections also agree they share line searches too.
    const std::size_t S = selectors_.size();
    std::vector<SelectorPlan> plans(S);
    std::vector<std::size_t> tree_owners, effect_owners, followers;
    for (std::size_t si = 0; si < S; ++si) {
      SelectorPlan& p = plans[si];
      p.held = select_all(selectors_[si], held_, everyone_);
      p.own = select_all(selectors_[si], own_, everyone_);
      p.tree_source = p.effect_source = si;
      for (std::size_t sj = 0; sj < si; ++sj)
        if (plans[sj].tree_source == sj && plans[sj].held.refs == p.held.refs) {
          p.tree_source = sj;
          break;
        }
      for (std::size_t sj = 0; sj < si; ++sj)
        if (plans[sj].effect_source == sj && plans[sj].tree_source == p.tree_source && plans[sj].own.refs == p.own.refs) {
          p.effect_source = sj;
          break;
        }
      if (p.held.count > 0 && p.tree_source == si) tree_owners.push_back(si);
      (p.effect_source == si ? effect_owners : followers).push_back(si);
    }
    parallel_for(tree_owners.size(), [&](std::size_t i) { grow_trees(plans[tree_owners[i]], held_desc); });
    std::vector<std::vector<TrainTrace::Candidate>> per_selector(S);
    parallel_for(effect_owners.size(), [&](std::size_t i) {
      per_selector[effect_owners[i]] = evaluate_selector(effect_owners[i], plans, per_selector, own_desc);
    });
    parallel_for(followers.size(), [&](std::size_t i) {
      per_selector[followers[i]] = evaluate_selector(followers[i], plans, per_selector, own_desc);
    });
    if (want_provenance)
      for (std::size_t si = 0; si < S; ++si)
        if (plans[si].held.count > 0)
          for (std::size_t i : plans[plans[si].tree_source].sample_instances)
            trace_->provenance.push_back({iteration_, -1, i, fold_[i]});

    std::vector<TrainTrace::Candidate> candidates;
    for (auto& v : per_selector)
      for (auto& c : v) candidates.push_back(std::move(c));
    std::vector<CandidateScore> scores;
    for (const auto& c : candidates) scores.push_back({c.delta_risk, c.cost, c.active});
    const auto chosen = speedboost_select(scores, config_.min_improvement);
    if (!chosen) {
      char reason[128];
      std::snprintf(reason, sizeof reason, "no candidate improves the training risk by more than %g at iteration %zu",
                    config_.min_improvement, iteration_);
      model.metadata.termination = reason;
      break;
    }
    const TrainTrace::Candidate& best = candidates[*chosen];

    // Main model update.
    apply(own_, best.tree, best.alpha, plans[best.selector_index].own, own_desc);
    for (const FeatureRef& ref : best.tree.used_features()) paid_.insert(ref);
    model.stages.push_back({best.selector, best.tree, best.learner, best.alpha, best.cost});

    // Auxiliary models refit the chosen (selector, learner) without their fold.
    struct Pending {
      Selection selection;
      RegressionTree tree;
      double alpha;
    };
    std::vector<Pending> pending;
    for (std::size_t k = 0; k < folds; ++k) {
      std::vector<bool> train_members(N), apply_members(N);
      for (std::size_t i = 0; i < N; ++i) {
        train_members[i] = fold_[i] != k;
        apply_members[i] = fold_[i] == k;
      }
      const Selection train_sel = select_all(best.selector, held_, train_members);
      if (train_sel.count == 0) continue;
      const Samples samples = build_samples(train_sel, held_, held_desc);
      if (want_provenance) record_provenance(&trace_->provenance, static_cast<int>(k), samples);
      for (std::size_t i : samples.instance) aux_trained_on[k].insert(i);
      SplitCostModel costs{column_refs_, groups_, aux_paid[k]};
      RegressionTree tree = train_tree(
          samples.data, {best.learner.max_depth, best.learner.lambda, config_.prediction_cost}, costs, &samples.order);
      StageEffect effect(K, static_cast<double>(N - std::count(fold_.begin(), fold_.end(), k)));
      add_effect(effect, tree, train_sel, held_, held_desc);
      const LineSearchOutcome ls = line_search_effect(effect, config_.alpha_max, config_.line_search_tolerance);
      for (const FeatureRef& ref : tree.used_features()) aux_paid[k].insert(ref);
      pending.push_back({select_all(best.selector, held_, apply_members), std::move(tree), ls.alpha});
    }
    for (const Pending& p : pending) apply(held_, p.tree, p.alpha, p.selection, held_desc);

    metrics = detail::view_metrics(*corpus_, own_, all);
    IterationLog row;
    row.iteration = iteration_;
    row.selector = best.selector.describe();
    row.selector_index = best.selector_index;
    row.learner = best.learner;
    row.tree_depth = best.tree.depth();
    row.alpha = best.alpha;
    row.delta_risk = best.delta_risk;
    row.cost = best.cost;
    row.ratio = best.delta_risk / best.cost;
    row.risk = metrics.risk;
    row.pixel_accuracy = metrics.pixel_accuracy;
    row.class_accuracy = metrics.class_accuracy;
    row.candidates = candidates.size();
    result.log.push_back(row);

    if (trace_ != nullptr && trace_->record_candidates)
      trace_->iterations.push_back({std::move(candidates), *chosen});
  }

  if (trace_ != nullptr)
    for (std::size_t k = 0; k < folds; ++k)
      trace_->aux_trained_on[k].assign(aux_trained_on[k].begin(), aux_trained_on[k].end());
  if (held_out != nullptr) {
    held_out->clear();
    for (std::size_t i = 0; i < N; ++i)
      held_out->push_back(expand_atom_scores(*(*corpus_)[i].hierarchy, held_[i].atom_scores));
  }
  return result;
}

}  // namespace

TrainResult train(std::span<const StructuredInstance> instances, const TrainConfig& config, TrainTrace* trace) {
  require(!instances.empty(), "train: no instances");
  return Trainer(instances, config, trace).run(nullptr);
}

std::vector<ScoreField> stacked_predictions(std::span<const StructuredInstance> instances, const TrainConfig& config,
                                            TrainTrace* trace) {
  require(!instances.empty(), "stacked predictions: no instances");
  std::vector<ScoreField> out;
  Trainer(instances, config, trace).run(&out);
  return out;
}

}  // namespace speedy
