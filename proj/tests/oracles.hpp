#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance suite. Each one recomputes a result the direct way, without the
// library's caching, presorting or atom-level arithmetic.

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "speedy/boosting.hpp"
#include "speedy/runtime.hpp"
#include "speedy/tree.hpp"

namespace oracle {

/// max(0, mean_j d_j - d_i) with every squared distance computed explicitly.
inline double soft_vq_code(std::span<const double> v, const speedy::Matrix& centers, std::size_t i) {
  std::vector<double> d(centers.rows(), 0.0);
  for (std::size_t j = 0; j < centers.rows(); ++j)
    for (std::size_t c = 0; c < centers.cols(); ++c) d[j] += (v[c] - centers(j, c)) * (v[c] - centers(j, c));
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  return std::max(0.0, mean - d[i]);
}

/// Best active candidate by delta/cost; ties to the lower cost, then the lower index.
inline std::optional<std::size_t> best_ratio(std::span<const speedy::CandidateScore> c, double min_improvement) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c[i].active || !(c[i].delta_risk > min_improvement)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double a = c[i].delta_risk / c[i].cost, b = c[*best].delta_risk / c[*best].cost;
    if (a > b || (a == b && c[i].cost < c[*best].cost)) best = i;
  }
  return best;
}

/// Greedy unregularized tree: every (column, midpoint) pair is scored by the
/// weighted squared error of the two sides, computed from scratch.
struct RefNode {
  int feature = -1;
  double threshold = 0.0;
  std::vector<double> value;
  std::unique_ptr<RefNode> left, right;
};

inline std::vector<double> weighted_mean(const speedy::TreeDataset& d, const std::vector<std::size_t>& rows) {
  std::vector<double> m(d.targets.cols(), 0.0);
  double w = 0.0;
  for (auto r : rows) {
    w += d.weights[r];
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += d.weights[r] * d.targets(r, k);
  }
  for (double& v : m) v /= w;
  return m;
}

inline double weighted_sse(const speedy::TreeDataset& d, const std::vector<std::size_t>& rows) {
  const auto m = weighted_mean(d, rows);
  double s = 0.0;
  for (auto r : rows)
    for (std::size_t k = 0; k < m.size(); ++k) s += d.weights[r] * (d.targets(r, k) - m[k]) * (d.targets(r, k) - m[k]);
  return s;
}

inline std::unique_ptr<RefNode> reference_tree(const speedy::TreeDataset& d, const std::vector<std::size_t>& rows,
                                               std::size_t depth) {
  auto node = std::make_unique<RefNode>();
  node->value = weighted_mean(d, rows);
  if (depth == 0) return node;
  const double parent = weighted_sse(d, rows);
  double best = 1e-9;
  for (std::size_t f = 0; f < d.features.cols(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(d.features(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double t = 0.5 * (values[i] + values[i + 1]);
      std::vector<std::size_t> l, r;
      for (auto row : rows) (d.features(row, f) <= t ? l : r).push_back(row);
      const double gain = parent - weighted_sse(d, l) - weighted_sse(d, r);
      if (gain > best * (1 + 1e-9)) {
        best = gain;
        node->feature = static_cast<int>(f);
        node->threshold = t;
      }
    }
  }
  if (node->feature < 0) return node;
  std::vector<std::size_t> l, r;
  for (auto row : rows)
    (d.features(row, static_cast<std::size_t>(node->feature)) <= node->threshold ? l : r).push_back(row);
  node->left = reference_tree(d, l, depth - 1);
  node->right = reference_tree(d, r, depth - 1);
  return node;
}

inline std::unique_ptr<RefNode> reference_tree(const speedy::TreeDataset& d, std::size_t depth) {
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), 0);
  return reference_tree(d, rows, depth);
}

/// Same splits, same thresholds, leaves within `tol`.
inline bool same_tree(const speedy::RegressionTree& tree, std::uint32_t id, const RefNode& ref, double tol) {
  const speedy::TreeNode& n = tree.nodes().at(id);
  if (n.feature != ref.feature) return false;
  for (std::size_t k = 0; k < ref.value.size(); ++k)
    if (std::abs(n.value[k] - ref.value[k]) > tol * std::max(1.0, std::abs(ref.value[k]))) return false;
  if (ref.feature < 0) return true;
  return n.threshold == ref.threshold && same_tree(tree, n.left, *ref.left, tol) &&
         same_tree(tree, n.right, *ref.right, tol);
}

/// Replays budgeted inference from per-pixel scores: pixel-level selection,
/// full descriptors, explicit path following and set-based charging in the
/// ledger's order (fixed costs, then features in FeatureRef order).
struct Replay {
  speedy::ScoreField scores;
  double total = 0.0;
  std::size_t stages = 0;
  std::vector<std::set<speedy::FeatureRef>> charged;  // centers first charged per stage
};

inline Replay replay(const speedy::AdditiveModel& model, const speedy::StructuredInstance& inst,
                     double budget = speedy::kUnlimitedBudget) {
  using namespace speedy;
  const auto& h = *inst.hierarchy;
  Replay r{ScoreField::constant(inst.num_pixels(), model.initial_scores), 0.0, 0, {}};
  std::set<std::uint32_t> groups;
  std::set<FeatureRef> centers;
  const std::vector<StructuredInstance> one{inst};
  for (const WeakStage& st : model.stages) {
    std::set<FeatureRef> needed;
    ScoreField next = r.scores;
    const auto ds = build_gradient_dataset(one, std::vector<ScoreField>{r.scores}, st.selector, model.groups,
                                           model.layout);
    if (ds)
      for (std::size_t row = 0; row < ds->origins.size(); ++row) {
        auto x = ds->data.features.row(row);
        std::size_t id = 0;
        while (st.predictor.nodes()[id].feature >= 0) {
          const auto& n = st.predictor.nodes()[id];
          const auto col = static_cast<std::size_t>(n.feature);
          if (auto ref = model.layout.cost_ref(col)) needed.insert(*ref);
          id = x[col] <= n.threshold ? n.left : n.right;
        }
        for (std::size_t p : h.segment(ds->origins[row].segment).pixels)
          for (std::size_t k = 0; k < model.num_classes; ++k)
            next.matrix()(p, k) += st.alpha * st.predictor.nodes()[id].value[k];
      }
    double total = r.total + (st.selector.cost + st.predictor.params().prediction_cost);
    auto g2 = groups;
    auto c2 = centers;
    std::set<FeatureRef> fresh;
    for (const FeatureRef& f : needed) {
      if (g2.insert(f.group).second) total += model.groups[f.group].base_cost;
      if (c2.insert(f).second) {
        total += model.groups[f.group].per_center_cost;
        fresh.insert(f);
      }
    }
    if (total > budget) break;
    r.total = total;
    groups = std::move(g2);
    centers = std::move(c2);
    r.charged.push_back(std::move(fresh));
    r.scores = std::move(next);
    ++r.stages;
  }
  return r;
}

}  // namespace oracle
