#pragma once

// Cost-greedy functional gradient boosting of weak structured predictors.
//
// A weak stage pairs an entropy selector (which segments to update) with a
// vector regression tree (how to update them). Each iteration builds the
// gradient dataset for every selector from held-out (stacked) predictions,
// fits one tree per learner configuration, line-searches every candidate and
// keeps the one with the largest risk reduction per unit cost.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/descriptor.hpp"
#include "speedy/features.hpp"
#include "speedy/instance.hpp"
#include "speedy/selectors.hpp"
#include "speedy/tree.hpp"

namespace speedy {

struct LearnerSpec {
  std::size_t max_depth = 0;
  double lambda = 0.0;
  bool operator==(const LearnerSpec&) const = default;
};

struct TrainConfig {
  std::size_t iterations = 150;
  std::vector<double> thresholds{0.1, 0.3, 0.5, 0.8, 1.2};
  bool all_levels_selectors = true;
  double selector_cost = 1.0;
  std::vector<std::size_t> depths{0, 1, 2, 3, 4};
  double lambda0 = 0.01;
  std::vector<double> lambda_multipliers{0.0, 1.0, 10.0};
  double prediction_cost = 1.0;
  std::size_t folds = 10;
  double alpha_max = 10.0;
  double line_search_tolerance = 1e-4;
  double min_improvement = 1e-9;
  std::uint64_t seed = 0;
  std::size_t dictionary_size = 16;
  std::size_t kmeans_iterations = 25;
  std::size_t kmeans_samples = 20000;
  bool shape_features = true;
  bool context_features = true;
  std::vector<GroupCost> group_costs = default_group_costs();  // indexed by group id
  std::size_t jobs = 1;

  /// Depths x lambda grid, depth-major.
  std::vector<LearnerSpec> learners() const;
  void validate() const;
};

struct WeakStage {
  EntropySelector selector;
  RegressionTree predictor;
  LearnerSpec learner;
  double alpha = 0.0;
  double cost = 0.0;  // c(h) when the stage was selected
};

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t requested_iterations = 0;
  std::string termination = "completed";
};

/// f_0 plus an ordered list of stages; every prefix is itself a valid model.
struct AdditiveModel {
  std::size_t num_classes = 0;
  std::size_t hierarchy_levels = 0;
  std::vector<double> initial_scores;
  std::vector<FeatureGroup> groups;
  DescriptorLayout layout;
  std::vector<WeakStage> stages;
  ModelMetadata metadata;

  AdditiveModel prefix(std::size_t num_stages) const;
  /// Gamma and Phi of the model made of the first `num_stages` stages.
  FeatureSet features_used(std::size_t num_stages) const;
  /// Sum of recorded stage costs.
  double total_cost() const;
  void validate() const;
};

/// Pixel-level weighted regression samples for one selector.
struct GradientDataset {
  struct Origin {
    std::size_t instance;
    SegmentRef segment;
  };
  TreeDataset data;
  std::vector<Origin> origins;
};

/// One sample per selected segment S: (psi_S, mean over S of p_j - q_j, |S|),
/// computed from per-pixel predictions. Returns nullopt when the selector
/// picks nothing on any instance.
std::optional<GradientDataset> build_gradient_dataset(std::span<const StructuredInstance> instances,
                                                      std::span<const ScoreField> predictions,
                                                      const EntropySelector& selector,
                                                      std::span<const FeatureGroup> groups,
                                                      const DescriptorLayout& layout);

/// Minimizer of a unimodal function on [lo, hi] to interval width `tolerance`.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi, double tolerance);

struct LineSearchResult {
  double alpha = 0.0;
  double risk_before = 0.0;
  double risk_after = 0.0;
};

/// argmin over alpha in [0, alpha_max] of the mean risk of scores + alpha * update.
/// Never returns a step that increases risk over alpha = 0.
LineSearchResult line_search(std::span<const ScoreField> scores, std::span<const Matrix> updates,
                             std::span<const Matrix> truths, double alpha_max = 10.0, double tolerance = 1e-4);

struct CandidateScore {
  double delta_risk = 0.0;
  double cost = 0.0;
  bool active = true;
};

/// argmax of delta_risk / cost over active candidates with delta_risk above
/// `min_improvement`; ties go to the lower cost, then the lower index.
std::optional<std::size_t> speedboost_select(std::span<const CandidateScore> candidates,
                                             double min_improvement = 0.0);

struct IterationLog {
  std::size_t iteration = 0;
  std::string selector;
  std::size_t selector_index = 0;
  LearnerSpec learner;
  std::size_t tree_depth = 0;
  double alpha = 0.0;
  double delta_risk = 0.0;
  double cost = 0.0;
  double ratio = 0.0;
  double risk = 0.0;            // training risk after the stage
  double pixel_accuracy = 0.0;  // training pixel accuracy after the stage
  double class_accuracy = 0.0;  // training mean class recall after the stage
  std::size_t candidates = 0;
};

/// Everything train() decided, for audits in tests.
struct TrainTrace {
  struct Candidate {
    std::size_t selector_index = 0;
    std::size_t learner_index = 0;
    EntropySelector selector;
    LearnerSpec learner;
    RegressionTree tree;
    double alpha = 0.0;
    double delta_risk = 0.0;
    double cost = 0.0;
    bool active = false;
  };
  struct Iteration {
    std::vector<Candidate> candidates;
    std::size_t chosen = 0;
  };
  /// A gradient sample: which model's predictions it was computed from.
  struct Provenance {
    std::size_t iteration;
    int consumer;  // -1: the main model, k >= 0: auxiliary model for fold k
    std::size_t instance;
    std::size_t producer_fold;  // auxiliary model whose predictions were used
  };
  std::vector<Iteration> iterations;
  std::vector<Provenance> provenance;
  std::vector<std::size_t> fold_of;                      // per instance
  std::vector<std::vector<std::size_t>> aux_trained_on;  // per fold: instances that fed its trees
  bool record_candidates = true;
  bool record_provenance = true;
};

struct TrainResult {
  AdditiveModel model;
  std::vector<IterationLog> log;
  double initial_risk = 0.0;
  double initial_pixel_accuracy = 0.0;
};

/// Fits dictionaries and f_0 on `instances`, then runs the boosting loop.
TrainResult train(std::span<const StructuredInstance> instances, const TrainConfig& config,
                  TrainTrace* trace = nullptr);

/// Held-out predictions of every instance after `config.iterations` rounds of
/// stacked training, each produced by the auxiliary model that never saw the
/// instance's fold.
std::vector<ScoreField> stacked_predictions(std::span<const StructuredInstance> instances, const TrainConfig& config,
                                            TrainTrace* trace = nullptr);

/// Fold of every instance for `folds`-way stacking with `seed`.
std::vector<std::size_t> assign_folds(std::size_t num_instances, std::size_t folds, std::uint64_t seed);

/// Log class frequencies with add-one smoothing.
std::vector<double> initial_scores(std::span<const StructuredInstance> instances, std::size_t num_classes);

/// Feature groups of the training corpus with k-means dictionaries.
std::vector<FeatureGroup> fit_feature_groups(std::span<const StructuredInstance> instances, const TrainConfig& config);

}  // namespace speedy
