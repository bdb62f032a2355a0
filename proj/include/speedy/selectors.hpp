#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/hierarchy.hpp"
#include "speedy/instance.hpp"

namespace speedy {

/// Selects segments whose mean per-pixel prediction entropy exceeds a threshold.
///
/// Scoped to one hierarchy level, or to all levels at once; in all-levels mode a
/// selected segment is dropped when any of its descendants is also selected, so
/// the returned segments never share a pixel.
struct EntropySelector {
  std::optional<std::size_t> level;  // nullopt: all levels
  double threshold = 0.0;            // nats
  double cost = 1.0;                 // epsilon_S

  void validate(std::size_t num_levels) const;
  std::string describe() const;
  bool operator==(const EntropySelector&) const = default;
};

/// Selection from precomputed per-segment mean entropies ([level][segment]).
/// Output is sorted by (level, index).
std::vector<SegmentRef> select_segments(const EntropySelector& selector, const SegmentationHierarchy& hierarchy,
                                        const std::vector<std::vector<double>>& mean_entropy);

/// Selection straight from a per-pixel score field.
std::vector<SegmentRef> select(const EntropySelector& selector, const StructuredInstance& instance,
                               const ScoreField& scores);

/// Levels x thresholds (level-major), then all-levels x thresholds.
std::vector<EntropySelector> enumerate_selectors(std::size_t num_levels, std::span<const double> thresholds,
                                                 double cost = 1.0, bool include_all_levels = true);

}  // namespace speedy
