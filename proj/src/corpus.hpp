#pragma once

// Atom-level training state. Scores are kept per finest-level segment; the
// segment statistics and descriptors are derived with the same functions the
// runtime uses.

#include <cstdint>
#include <span>
#include <vector>

#include "speedy/descriptor.hpp"
#include "speedy/instance.hpp"
#include "speedy/selectors.hpp"
#include "speedy/tree.hpp"

namespace speedy::detail {

struct CorpusInstance {
  const StructuredInstance* instance = nullptr;
  const SegmentationHierarchy* hierarchy = nullptr;
  std::vector<double> atom_size;
  Matrix atom_labels;        // atoms x K: sum of p_j over the atom
  Matrix atom_class_pixels;  // atoms x K: pixels whose argmax label is k
  std::vector<double> class_pixels;  // K
  std::vector<std::size_t> level_offset;
  std::size_t global_offset = 0;
  std::size_t num_segments = 0;
  std::vector<Matrix> segment_label_mean;  // [level] segments x K
};

/// Scores of one model on one instance, with derived statistics.
struct ViewState {
  Matrix atom_scores;
  SegmentStats stats;
  void refresh(const SegmentationHierarchy& h) { stats = compute_segment_stats(h, atom_scores); }
};

class Corpus {
 public:
  Corpus(std::span<const StructuredInstance> instances, std::span<const FeatureGroup> groups,
         const DescriptorLayout& layout);

  std::size_t size() const { return items_.size(); }
  const CorpusInstance& operator[](std::size_t i) const { return items_[i]; }
  const DescriptorLayout& layout() const { return layout_; }
  std::size_t num_classes() const { return K_; }
  std::size_t num_global_segments() const { return num_global_; }
  double total_pixels() const { return total_pixels_; }

  std::size_t global_id(std::size_t i, SegmentRef ref) const {
    return items_[i].global_offset + items_[i].level_offset[ref.level] + ref.index;
  }

  /// Descriptors of every segment of every instance under `view` (row = global id),
  /// plus sorted orders of every column.
  struct Descriptors {
    Matrix rows;
    std::vector<std::vector<std::uint32_t>> order;  // per column: global ids by value
  };
  Descriptors descriptors(const std::vector<ViewState>& view) const;

 private:
  std::vector<CorpusInstance> items_;
  DescriptorLayout layout_;
  std::size_t K_ = 0;
  std::size_t num_global_ = 0;
  double total_pixels_ = 0.0;
  Matrix static_rows_;  // shape and derived columns (context columns left zero)
  std::vector<std::vector<std::uint32_t>> static_order_;
};

/// Selected atoms of a candidate stage and the tree leaf each one receives.
///
/// With E_a = exp(y_a - max y_a) cached per atom and exp(alpha u) computed once
/// per leaf, every risk evaluation costs one log per atom.
class StageEffect {
 public:
  StageEffect(std::size_t num_classes, double num_instances) : K_(num_classes), n_(num_instances) {}
  /// Registers a leaf value; returns its id.
  std::size_t add_leaf(std::span<const double> update);
  void add_atom(std::span<const double> scores, double size, std::span<const double> labels, std::size_t leaf);
  bool empty() const { return size_.empty(); }
  /// Mean-over-instances risk change of scores + alpha * update (negative is better).
  double risk_change(double alpha) const;

 private:
  std::size_t K_;
  double n_;
  std::vector<double> leaves_;  // leaf-major K values
  std::vector<double> shifted_exp_, log_norm_, size_;
  std::vector<std::uint32_t> leaf_;
  double linear_ = 0.0;  // sum over atoms of L_a . u_a
};

struct LineSearchOutcome {
  double alpha = 0.0;
  double delta_risk = 0.0;  // R(0) - R(alpha), >= 0
};

LineSearchOutcome line_search_effect(const StageEffect& effect, double alpha_max, double tolerance);

/// Mean risk and pixel/class accuracy of a view.
struct ViewMetrics {
  double risk = 0.0;
  double pixel_accuracy = 0.0;
  double class_accuracy = 0.0;
};
ViewMetrics view_metrics(const Corpus& corpus, const std::vector<ViewState>& view,
                         std::span<const std::size_t> members);

}  // namespace speedy::detail
