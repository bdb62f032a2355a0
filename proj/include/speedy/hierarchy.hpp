#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "speedy/core.hpp"

namespace speedy {

/// (level, index-within-level) address of a segment.
struct SegmentRef {
  std::uint32_t level = 0;
  std::uint32_t index = 0;
  auto operator<=>(const SegmentRef&) const = default;
};

struct Segment {
  std::size_t level = 0;
  std::size_t index = 0;
  std::vector<std::size_t> pixels;  // ascending pixel indices
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;
  std::vector<std::size_t> atoms;  // finest-level segments nested in this one, ascending
  // Bounding box, half-open.
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::size_t size() const { return pixels.size(); }
};

/// Nested multi-level partitions of a pixel grid, coarse (level 0) to fine.
///
/// Every level partitions the whole grid and every segment lies inside its
/// parent. The finest-level segments ("atoms") are the smallest units any
/// segment-wise update can address.
class SegmentationHierarchy {
 public:
  /// Builds and validates a hierarchy from one segment-id map per level.
  /// Ids in each map must be dense (0..n-1); nesting is checked.
  static SegmentationHierarchy from_level_maps(std::size_t width, std::size_t height,
                                               std::vector<std::vector<std::uint32_t>> level_maps);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t num_pixels() const { return width_ * height_; }
  std::size_t num_levels() const { return levels_.size(); }
  std::size_t finest_level() const { return levels_.size() - 1; }
  std::size_t num_atoms() const { return levels_.back().size(); }
  std::size_t num_segments() const;

  const std::vector<Segment>& level(std::size_t l) const { return levels_.at(l); }
  const Segment& segment(SegmentRef ref) const { return levels_.at(ref.level).at(ref.index); }
  const std::vector<std::uint32_t>& level_map(std::size_t l) const { return maps_.at(l); }
  std::size_t atom_of(std::size_t pixel) const { return maps_.back()[pixel]; }

  /// True when `inner` is `outer` or one of its descendants.
  bool contains(SegmentRef outer, SegmentRef inner) const;

  bool operator==(const SegmentationHierarchy& other) const { return width_ == other.width_ && height_ == other.height_ && maps_ == other.maps_; }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::vector<std::uint32_t>> maps_;
  std::vector<std::vector<Segment>> levels_;
};

/// Level 0 is the whole grid; each finer level halves every parent along both
/// axes (odd extents give unequal halves).
SegmentationHierarchy build_quadtree_hierarchy(std::size_t width, std::size_t height, std::size_t levels);

/// Arithmetic mean of the rows of `values` indexed by the segment's pixels.
std::vector<double> segment_mean(const Matrix& values, const Segment& segment);

}  // namespace speedy
