#pragma once

// Region descriptors psi_S and the per-segment prediction statistics they
// depend on.
//
// Every stage updates whole segments, so a score field that starts constant
// stays constant within each finest-level segment (atom). Training and the
// runtime both keep scores per atom and derive all segment statistics from
// them through the functions below, which makes their arithmetic identical.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/features.hpp"
#include "speedy/hierarchy.hpp"

namespace speedy {

/// Column layout of psi_S:
///   [shape (5)] [context: own, parent, sibling mean predictions (3K)] [pooled codes]
/// Shape and context columns are free; pooled-code columns carry a FeatureRef.
struct DescriptorLayout {
  static constexpr std::size_t kShapeColumns = 5;

  std::size_t num_classes = 0;
  bool shape = true;
  bool context = true;
  std::vector<FeatureRef> derived;

  std::size_t shape_offset() const { return 0; }
  std::size_t context_offset() const { return shape ? kShapeColumns : 0; }
  std::size_t derived_offset() const { return context_offset() + (context ? 3 * num_classes : 0); }
  std::size_t size() const { return derived_offset() + derived.size(); }

  /// The derived feature behind a column, if any.
  std::optional<FeatureRef> cost_ref(std::size_t column) const;
  /// Per-column cost references, for tree training.
  std::vector<std::optional<FeatureRef>> cost_refs() const;
  std::string column_name(std::size_t column, std::span<const FeatureGroup> groups) const;

  bool operator==(const DescriptorLayout&) const = default;
};

/// Every center of every group, group-major.
DescriptorLayout full_layout(std::size_t num_classes, std::span<const FeatureGroup> groups, bool shape = true,
                             bool context = true);

/// Mean prediction entropy and mean class distribution of every segment.
struct SegmentStats {
  std::vector<std::vector<double>> mean_entropy;  // [level][segment]
  std::vector<Matrix> mean_q;                     // [level] segments x K
};

/// Pixel counts of the atoms (finest-level segments).
std::vector<double> atom_sizes(const SegmentationHierarchy& hierarchy);

/// Statistics of a score field that is constant within atoms.
SegmentStats compute_segment_stats(const SegmentationHierarchy& hierarchy, const Matrix& atom_scores);

/// Statistics of an arbitrary per-pixel score field.
SegmentStats compute_segment_stats(const SegmentationHierarchy& hierarchy, const ScoreField& pixel_scores);

/// Per-atom softmax and entropy of `atom_scores`.
void atom_distributions(const Matrix& atom_scores, Matrix& q, std::vector<double>& entropies);

/// Area fraction, bounding-box aspect, level index, centroid x, centroid y.
void shape_features(const SegmentationHierarchy& hierarchy, const Segment& segment, std::span<double> out);

/// Own, parent and sibling mean predictions (3K values). The root uses its own
/// mean for the parent block; a segment without siblings uses its own mean.
void context_features(const SegmentationHierarchy& hierarchy, const SegmentStats& stats, SegmentRef ref,
                      std::span<double> out);

/// Expands per-atom scores into a per-pixel score field.
ScoreField expand_atom_scores(const SegmentationHierarchy& hierarchy, const Matrix& atom_scores);

}  // namespace speedy
