#include "speedy/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace speedy {

namespace {

// Scores closer than this (relative) count as ties, so summation-order noise
// cannot reorder otherwise equal splits.
constexpr double kTieTolerance = 1e-12;
// Smallest score that justifies a split.
constexpr double kMinSplitScore = 1e-12;

bool better(double candidate, double incumbent) {
  if (incumbent == -std::numeric_limits<double>::infinity()) return candidate > incumbent;
  return candidate > incumbent + kTieTolerance * std::max(1.0, std::abs(incumbent));
}

double squared_norm_over(std::span<const double> sum, double weight) {
  double s = 0.0;
  for (double v : sum) s += v * v;
  return s / weight;
}

}  // namespace

void TreeDataset::validate() const {
  require(size() > 0, "tree dataset is empty");
  require_dims(features.rows() == size() && targets.rows() == size(), "tree dataset: row counts differ");
  for (double w : weights) require(w > 0.0 && std::isfinite(w), "tree dataset: weights must be positive");
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes, std::size_t num_features, std::size_t num_outputs,
                               TreeParams params, const std::vector<std::optional<FeatureRef>>& column_refs)
    : nodes_(std::move(nodes)), num_features_(num_features), num_outputs_(num_outputs), params_(params) {
  require(!nodes_.empty(), "regression tree without nodes");
  for (const TreeNode& n : nodes_) {
    require_dims(n.value.size() == num_outputs_, "regression tree: node value size");
    for (double v : n.value) require(std::isfinite(v), "regression tree: non-finite node value");
    if (n.is_leaf()) continue;
    require(static_cast<std::size_t>(n.feature) < num_features_, "regression tree: split feature out of range");
    require(n.left < nodes_.size() && n.right < nodes_.size(), "regression tree: child index out of range");
    if (!column_refs.empty())
      if (const auto& ref = column_refs.at(static_cast<std::size_t>(n.feature))) used_features_.insert(*ref);
  }
}

std::span<const double> RegressionTree::predict(std::span<const double> x) const {
  require_dims(x.size() == num_features_, "predict_tree: descriptor layout does not match the tree");
  return predict_lazy([&](std::size_t column) { return x[column]; });
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes_[i].is_leaf()) d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
  }
  return deepest;
}

RegressionTree RegressionTree::truncated(std::size_t max_depth,
                                         const std::vector<std::optional<FeatureRef>>& column_refs) const {
  std::vector<TreeNode> out;
  struct Item {
    std::uint32_t src;
    std::size_t depth;
  };
  std::vector<Item> queue{{0, 0}};
  out.push_back(nodes_[0]);
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto [src, depth] = queue[q];
    TreeNode& node = out[q];
    if (node.is_leaf()) continue;
    if (depth >= max_depth) {
      node.feature = -1;
      node.threshold = 0.0;
      node.left = node.right = 0;
      continue;
    }
    const std::uint32_t l = nodes_[src].left, r = nodes_[src].right;
    node.left = static_cast<std::uint32_t>(out.size());
    out.push_back(nodes_[l]);
    queue.push_back({l, depth + 1});
    node.right = static_cast<std::uint32_t>(out.size());
    out.push_back(nodes_[r]);
    queue.push_back({r, depth + 1});
  }
  TreeParams p = params_;
  p.max_depth = std::min(p.max_depth, max_depth);
  return RegressionTree(std::move(out), num_features_, num_outputs_, p, column_refs);
}

std::vector<std::vector<std::uint32_t>> presort_columns(const Matrix& features) {
  std::vector<std::vector<std::uint32_t>> order(features.cols());
  for (std::size_t f = 0; f < features.cols(); ++f) {
    auto& o = order[f];
    o.resize(features.rows());
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return features(a, f) < features(b, f); });
  }
  return order;
}

RegressionTree train_tree(const TreeDataset& data, const TreeParams& params, const SplitCostModel& costs,
                          const std::vector<std::vector<std::uint32_t>>* presorted) {
  data.validate();
  require(params.lambda >= 0.0, "train_tree: lambda must be non-negative");
  const std::size_t n = data.size(), F = data.features.cols(), K = data.targets.cols();
  require(costs.column_refs.empty() || costs.column_refs.size() == F, "train_tree: cost model column count");

  std::vector<std::vector<std::uint32_t>> local_order;
  if (presorted == nullptr) {
    local_order = presort_columns(data.features);
    presorted = &local_order;
  }
  const auto& order = *presorted;

  const double total_weight = std::accumulate(data.weights.begin(), data.weights.end(), 0.0);

  // Column values in sorted order and weighted targets, laid out for sequential scans.
  std::vector<double> sorted_values(F * n);
  for (std::size_t f = 0; f < F; ++f) {
    require_dims(order[f].size() == n, "train_tree: presorted order size");
    for (std::size_t r = 0; r < n; ++r) sorted_values[f * n + r] = data.features(order[f][r], f);
  }
  std::vector<double> weighted_targets(n * K);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t k = 0; k < K; ++k) weighted_targets[s * K + k] = data.weights[s] * data.targets(s, k);

  std::vector<TreeNode> nodes(1);
  std::vector<std::vector<double>> node_sum(1, std::vector<double>(K, 0.0));
  std::vector<double> node_weight(1, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double w = data.weights[s];
    for (std::size_t k = 0; k < K; ++k) node_sum[0][k] += w * data.targets(s, k);
    node_weight[0] += w;
  }
  const auto set_value = [&](std::uint32_t id) {
    nodes[id].value.resize(K);
    for (std::size_t k = 0; k < K; ++k) nodes[id].value[k] = node_sum[id][k] / node_weight[id];
  };
  set_value(0);

  std::vector<std::uint32_t> node_of(n, 0);
  std::vector<std::uint32_t> frontier{0};
  std::set<std::uint32_t> tree_groups;
  std::set<FeatureRef> tree_centers;

  const auto split_cost = [&](std::size_t column) {
    if (costs.column_refs.empty() || !costs.column_refs[column]) return 0.0;
    const FeatureRef ref = *costs.column_refs[column];
    double c = 0.0;
    if (!costs.paid.has_group(ref.group) && !tree_groups.contains(ref.group)) c += costs.groups[ref.group].base_cost;
    if (!costs.paid.has(ref) && !tree_centers.contains(ref)) c += costs.groups[ref.group].per_center_cost;
    return c;
  };

  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    const std::size_t S = frontier.size();
    std::vector<int> slot_of(nodes.size(), -1);
    for (std::size_t i = 0; i < S; ++i) slot_of[frontier[i]] = static_cast<int>(i);

    std::vector<double> best_gain(S * F, neg_inf), best_threshold(S * F, 0.0);
    std::vector<double> left_sum(S * K), left_weight(S), last_value(S);
    std::vector<std::size_t> count(S);
    std::vector<double> right(K);
    for (std::size_t f = 0; f < F; ++f) {
      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      std::fill(left_weight.begin(), left_weight.end(), 0.0);
      std::fill(count.begin(), count.end(), 0);
      const double* values = sorted_values.data() + f * n;
      for (std::size_t r = 0; r < n; ++r) {
        const std::uint32_t s = order[f][r];
        const int slot = slot_of[node_of[s]];
        if (slot < 0) continue;
        const auto i = static_cast<std::size_t>(slot);
        const double v = values[r];
        if (count[i] > 0 && v > last_value[i]) {
          const std::uint32_t node = frontier[i];
          std::span<const double> ls(left_sum.data() + i * K, K);
          for (std::size_t k = 0; k < K; ++k) right[k] = node_sum[node][k] - ls[k];
          const double wl = left_weight[i], wr = node_weight[node] - wl;
          const double gain = (squared_norm_over(ls, wl) + squared_norm_over(right, wr) -
                               squared_norm_over(node_sum[node], node_weight[node])) /
                              total_weight;
          if (better(gain, best_gain[i * F + f])) {
            double threshold = 0.5 * (last_value[i] + v);
            if (!(threshold < v)) threshold = last_value[i];
            best_gain[i * F + f] = gain;
            best_threshold[i * F + f] = threshold;
          }
        }
        const double* wt = weighted_targets.data() + s * K;
        for (std::size_t k = 0; k < K; ++k) left_sum[i * K + k] += wt[k];
        left_weight[i] += data.weights[s];
        last_value[i] = v;
        ++count[i];
      }
    }

    // Decide splits left to right; features bought by earlier nodes are free afterwards.
    std::vector<int> split_feature(S, -1);
    for (std::size_t i = 0; i < S; ++i) {
      double best = neg_inf;
      int arg = -1;
      for (std::size_t f = 0; f < F; ++f) {
        if (best_gain[i * F + f] == neg_inf) continue;
        const double score = best_gain[i * F + f] - params.lambda * split_cost(f);
        if (better(score, best)) {
          best = score;
          arg = static_cast<int>(f);
        }
      }
      if (arg < 0 || !(best > kMinSplitScore)) continue;
      split_feature[i] = arg;
      if (!costs.column_refs.empty() && costs.column_refs[static_cast<std::size_t>(arg)]) {
        const FeatureRef ref = *costs.column_refs[static_cast<std::size_t>(arg)];
        tree_groups.insert(ref.group);
        tree_centers.insert(ref);
      }
    }

    std::vector<std::uint32_t> next;
    for (std::size_t i = 0; i < S; ++i) {
      if (split_feature[i] < 0) continue;
      const std::uint32_t id = frontier[i];
      const auto f = static_cast<std::size_t>(split_feature[i]);
      const auto l = static_cast<std::uint32_t>(nodes.size());
      nodes[id].feature = split_feature[i];
      nodes[id].threshold = best_threshold[i * F + f];
      nodes[id].left = l;
      nodes[id].right = l + 1;
      nodes.resize(nodes.size() + 2);
      node_sum.resize(nodes.size(), std::vector<double>(K, 0.0));
      node_weight.resize(nodes.size(), 0.0);
      next.push_back(l);
      next.push_back(l + 1);
    }
    if (next.empty()) break;
    for (std::size_t s = 0; s < n; ++s) {
      const std::uint32_t id = node_of[s];
      if (id >= slot_of.size() || slot_of[id] < 0 || nodes[id].is_leaf()) continue;
      const auto f = static_cast<std::size_t>(nodes[id].feature);
      const std::uint32_t child = data.features(s, f) <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
      node_of[s] = child;
      const double w = data.weights[s];
      for (std::size_t k = 0; k < K; ++k) node_sum[child][k] += w * data.targets(s, k);
      node_weight[child] += w;
    }
    for (std::uint32_t c : next) set_value(c);
    frontier = std::move(next);
  }

  return RegressionTree(std::move(nodes), F, K, params, costs.column_refs);
}

double tree_cost(const RegressionTree& tree, const FeatureSet& paid, std::span<const FeatureGroup> groups) {
  return tree.params().prediction_cost + incremental_cost(paid, tree.used_features(), groups);
}

}  // namespace speedy
