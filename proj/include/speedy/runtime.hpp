#pragma once

// Anytime inference under a cost budget, metrics and accuracy-vs-cost profiles.

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "speedy/boosting.hpp"

namespace speedy {

inline constexpr double kUnlimitedBudget = std::numeric_limits<double>::infinity();

struct Metrics {
  double pixel_accuracy = 0.0;
  std::vector<double> class_recall;  // per class; NaN when the class is absent from the truth
  double class_accuracy = 0.0;       // mean recall over classes present in the truth
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction] pixel counts
};

/// Argmax predictions against the argmax of each truth row (lowest index wins ties).
Metrics evaluate(const ScoreField& scores, const Matrix& truth);

/// Metrics of pooled confusion counts over several images.
Metrics metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);

struct Checkpoint {
  std::size_t stage = 0;  // index of the stage just completed
  double cost = 0.0;      // cumulative ledger total
  double pixel_accuracy = 0.0;
  double class_accuracy = 0.0;
  double risk = 0.0;
  std::vector<std::vector<std::size_t>> confusion;
};

struct InferenceProfile {
  Checkpoint initial;  // f_0, before any stage
  std::vector<Checkpoint> checkpoints;
};

struct InferenceResult {
  ScoreField scores;
  CostLedger ledger;
  InferenceProfile profile;
  std::size_t stages_executed = 0;
};

/// Runs stages in order from f_0. Before each stage the cost it would add
/// (selection, prediction, and the unpaid features on the tree paths of the
/// segments it selects) is computed; the run stops if that would exceed
/// `budget`. Throws DimensionMismatch when model and instance disagree.
InferenceResult infer(const AdditiveModel& model, const StructuredInstance& instance,
                      double budget = kUnlimitedBudget);

struct ProfileRow {
  double budget = 0.0;
  double pixel_accuracy = 0.0;
  double class_accuracy = 0.0;
  double risk = 0.0;
  double mean_cost = 0.0;  // mean ledger total actually spent
};

/// Metrics at each budget: accuracies from the pooled confusion, risk and
/// cost averaged per image. Matches evaluate_corpus at the same budget.
std::vector<ProfileRow> profile_corpus(const AdditiveModel& model, std::span<const StructuredInstance> instances,
                                       std::span<const double> budgets);

/// CSV with header `budget,pixel_acc,class_acc,risk`.
std::string profile_csv(std::span<const ProfileRow> rows);

/// Pooled-confusion metrics and mean risk of budgeted inference over a corpus.
struct CorpusEvaluation {
  Metrics metrics;
  double risk = 0.0;
  double mean_cost = 0.0;
};
CorpusEvaluation evaluate_corpus(const AdditiveModel& model, std::span<const StructuredInstance> instances,
                                 double budget = kUnlimitedBudget);

}  // namespace speedy
