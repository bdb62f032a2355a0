#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/features.hpp"

namespace speedy {

/// Weighted vector-regression samples: one row of `features` and `targets` per sample.
struct TreeDataset {
  Matrix features;  // n x F
  Matrix targets;   // n x K
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  void validate() const;
};

struct TreeParams {
  std::size_t max_depth = 0;
  double lambda = 0.0;           // weight of the feature-cost regularizer
  double prediction_cost = 1.0;  // epsilon_P
  bool operator==(const TreeParams&) const = default;
};

/// What splitting on each feature column would cost.
struct SplitCostModel {
  std::vector<std::optional<FeatureRef>> column_refs;  // empty: every column is free
  std::span<const FeatureGroup> groups;
  FeatureSet paid;  // Gamma(f), Phi(f) of the model being extended
};

/// Internal nodes route `x[feature] <= threshold` to `left`. Every node keeps
/// the weighted mean of its samples so a tree can be truncated to any depth.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<double> value;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  RegressionTree(std::vector<TreeNode> nodes, std::size_t num_features, std::size_t num_outputs, TreeParams params,
                 const std::vector<std::optional<FeatureRef>>& column_refs);

  std::span<const double> predict(std::span<const double> x) const;

  /// Prediction with features fetched on demand; `feature(column)` is called
  /// once per internal node on the path.
  template <class FeatureFn>
  std::span<const double> predict_lazy(FeatureFn&& feature) const {
    std::uint32_t n = 0;
    while (!nodes_[n].is_leaf()) {
      const TreeNode& node = nodes_[n];
      n = feature(static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right;
    }
    return nodes_[n].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t num_outputs() const { return num_outputs_; }
  const TreeParams& params() const { return params_; }
  /// Derived features referenced by internal nodes.
  const std::set<FeatureRef>& used_features() const { return used_features_; }
  std::size_t depth() const;

  /// The same tree with every node deeper than `max_depth` pruned.
  RegressionTree truncated(std::size_t max_depth, const std::vector<std::optional<FeatureRef>>& column_refs) const;

  /// Same routing and leaf values.
  bool same_function(const RegressionTree& other) const { return nodes_ == other.nodes_; }
  bool operator==(const RegressionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::size_t num_features_ = 0;
  std::size_t num_outputs_ = 0;
  TreeParams params_;
  std::set<FeatureRef> used_features_;
};

/// Sample indices sorted by each feature column (ties by index).
std::vector<std::vector<std::uint32_t>> presort_columns(const Matrix& features);

/// Greedy breadth-first growth. A split's score is its reduction of the
/// weight-normalized squared error minus lambda times the incremental cost of
/// its feature (counting features paid by the model or used earlier in this
/// tree as free); a node splits only on a positive score. Thresholds are
/// midpoints between consecutive distinct values; ties go to the lowest
/// column, then the lowest threshold.
RegressionTree train_tree(const TreeDataset& data, const TreeParams& params, const SplitCostModel& costs,
                          const std::vector<std::vector<std::uint32_t>>* presorted = nullptr);

/// epsilon_P plus the group and center costs of the tree's features not yet in `paid`.
double tree_cost(const RegressionTree& tree, const FeatureSet& paid, std::span<const FeatureGroup> groups);

}  // namespace speedy
