#include "speedy/hierarchy.hpp"

#include <algorithm>
#include <string>

namespace speedy {

SegmentationHierarchy SegmentationHierarchy::from_level_maps(std::size_t width, std::size_t height,
                                                             std::vector<std::vector<std::uint32_t>> level_maps) {
  require(width > 0 && height > 0, "hierarchy: empty grid");
  require(!level_maps.empty(), "hierarchy: at least one level is required");
  const std::size_t num_pixels = width * height;

  SegmentationHierarchy h;
  h.width_ = width;
  h.height_ = height;
  h.levels_.resize(level_maps.size());

  for (std::size_t l = 0; l < level_maps.size(); ++l) {
    const auto& map = level_maps[l];
    require_dims(map.size() == num_pixels, "hierarchy: level " + std::to_string(l) + " map has wrong size");
    const std::uint32_t count = *std::max_element(map.begin(), map.end()) + 1;
    auto& segments = h.levels_[l];
    segments.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
      segments[s].level = l;
      segments[s].index = s;
      segments[s].x0 = width;
      segments[s].y0 = height;
    }
    for (std::size_t p = 0; p < num_pixels; ++p) {
      Segment& seg = segments[map[p]];
      seg.pixels.push_back(p);
      const std::size_t x = p % width, y = p / width;
      seg.x0 = std::min(seg.x0, x);
      seg.y0 = std::min(seg.y0, y);
      seg.x1 = std::max(seg.x1, x + 1);
      seg.y1 = std::max(seg.y1, y + 1);
    }
    for (const auto& seg : segments)
      require(!seg.pixels.empty(), "hierarchy: segment ids at level " + std::to_string(l) + " are not dense");

    if (l == 0) continue;
    const auto& parent_map = level_maps[l - 1];
    for (auto& seg : segments) {
      const std::uint32_t parent = parent_map[seg.pixels.front()];
      for (std::size_t p : seg.pixels)
        require(parent_map[p] == parent, "hierarchy: segment at level " + std::to_string(l) + " is not nested");
      seg.parent = parent;
      h.levels_[l - 1][parent].children.push_back(seg.index);
    }
  }

  const auto& atom_map = level_maps.back();
  for (auto& segments : h.levels_) {
    for (auto& seg : segments) {
      for (std::size_t p : seg.pixels) seg.atoms.push_back(atom_map[p]);
      std::sort(seg.atoms.begin(), seg.atoms.end());
      seg.atoms.erase(std::unique(seg.atoms.begin(), seg.atoms.end()), seg.atoms.end());
    }
  }
  h.maps_ = std::move(level_maps);
  return h;
}

std::size_t SegmentationHierarchy::num_segments() const {
  std::size_t n = 0;
  for (const auto& l : levels_) n += l.size();
  return n;
}

bool SegmentationHierarchy::contains(SegmentRef outer, SegmentRef inner) const {
  if (inner.level < outer.level) return false;
  std::size_t index = inner.index;
  for (std::size_t l = inner.level; l > outer.level; --l) index = *levels_[l][index].parent;
  return index == outer.index;
}

SegmentationHierarchy build_quadtree_hierarchy(std::size_t width, std::size_t height, std::size_t levels) {
  require(levels >= 1, "quadtree: levels must be at least 1");
  require(levels - 1 < 63 && (std::size_t{1} << (levels - 1)) <= std::min(width, height),
          "quadtree: too many levels for a " + std::to_string(width) + "x" + std::to_string(height) + " grid");

  struct Box {
    std::size_t x0, y0, x1, y1;
  };
  std::vector<std::vector<std::uint32_t>> maps;
  std::vector<Box> boxes{{0, 0, width, height}};
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<std::uint32_t> map(width * height);
    for (std::size_t b = 0; b < boxes.size(); ++b)
      for (std::size_t y = boxes[b].y0; y < boxes[b].y1; ++y)
        for (std::size_t x = boxes[b].x0; x < boxes[b].x1; ++x) map[y * width + x] = static_cast<std::uint32_t>(b);
    maps.push_back(std::move(map));

    // Children in row-major order: top-left, top-right, bottom-left, bottom-right.
    std::vector<Box> next;
    for (const Box& b : boxes) {
      const std::size_t mx = b.x0 + (b.x1 - b.x0) / 2, my = b.y0 + (b.y1 - b.y0) / 2;
      for (auto [ya, yb] : {std::pair{b.y0, my}, std::pair{my, b.y1}})
        for (auto [xa, xb] : {std::pair{b.x0, mx}, std::pair{mx, b.x1}})
          if (xa < xb && ya < yb) next.push_back({xa, ya, xb, yb});
    }
    boxes = std::move(next);
  }
  return SegmentationHierarchy::from_level_maps(width, height, std::move(maps));
}

std::vector<double> segment_mean(const Matrix& values, const Segment& segment) {
  require(!segment.pixels.empty(), "segment_mean: empty segment");
  std::vector<double> mean(values.cols(), 0.0);
  for (std::size_t p : segment.pixels) {
    require_dims(p < values.rows(), "segment_mean: pixel index outside the value field");
    auto row = values.row(p);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  }
  for (double& m : mean) m /= static_cast<double>(segment.pixels.size());
  return mean;
}

}  // namespace speedy
