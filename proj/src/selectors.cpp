#include "speedy/selectors.hpp"

#include <cstdio>

namespace speedy {

void EntropySelector::validate(std::size_t num_levels) const {
  require(threshold >= 0.0, "selector: threshold must be non-negative");
  require(cost >= 0.0, "selector: cost must be non-negative");
  require(!level || *level < num_levels, "selector: level outside the hierarchy");
}

std::string EntropySelector::describe() const {
  char buf[64];
  if (level)
    std::snprintf(buf, sizeof buf, "L%zu>%.3g", *level, threshold);
  else
    std::snprintf(buf, sizeof buf, "all>%.3g", threshold);
  return buf;
}

std::vector<SegmentRef> select_segments(const EntropySelector& selector, const SegmentationHierarchy& hierarchy,
                                        const std::vector<std::vector<double>>& mean_entropy) {
  selector.validate(hierarchy.num_levels());
  std::vector<SegmentRef> out;
  if (selector.level) {
    const auto l = static_cast<std::uint32_t>(*selector.level);
    const auto& ent = mean_entropy.at(l);
    for (std::uint32_t s = 0; s < ent.size(); ++s)
      if (ent[s] > selector.threshold) out.push_back({l, s});
    return out;
  }

  // covered[l][s]: s or one of its descendants is selected.
  const std::size_t L = hierarchy.num_levels();
  std::vector<std::vector<char>> covered(L);
  std::vector<std::vector<char>> keep(L);
  for (std::size_t l = L; l-- > 0;) {
    const auto& segments = hierarchy.level(l);
    covered[l].assign(segments.size(), 0);
    keep[l].assign(segments.size(), 0);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      bool below = false;
      if (l + 1 < L)
        for (std::size_t c : segments[s].children) below |= covered[l + 1][c] != 0;
      const bool selected = mean_entropy.at(l).at(s) > selector.threshold;
      keep[l][s] = selected && !below;
      covered[l][s] = selected || below;
    }
  }
  for (std::uint32_t l = 0; l < L; ++l)
    for (std::uint32_t s = 0; s < keep[l].size(); ++s)
      if (keep[l][s]) out.push_back({l, s});
  return out;
}

std::vector<SegmentRef> select(const EntropySelector& selector, const StructuredInstance& instance,
                               const ScoreField& scores) {
  require_dims(scores.num_elements() == instance.num_pixels(), "select: scores do not match the instance");
  const auto& h = *instance.hierarchy;
  std::vector<std::vector<double>> ent(h.num_levels());
  for (std::size_t l = 0; l < h.num_levels(); ++l)
    for (const auto& seg : h.level(l)) ent[l].push_back(mean_entropy(scores, seg.pixels));
  return select_segments(selector, h, ent);
}

std::vector<EntropySelector> enumerate_selectors(std::size_t num_levels, std::span<const double> thresholds,
                                                 double cost, bool include_all_levels) {
  require(!thresholds.empty(), "enumerate_selectors: empty threshold grid");
  std::vector<EntropySelector> out;
  for (std::size_t l = 0; l < num_levels; ++l)
    for (double t : thresholds) out.push_back({l, t, cost});
  if (include_all_levels)
    for (double t : thresholds) out.push_back({std::nullopt, t, cost});
  for (const auto& s : out) s.validate(num_levels);
  return out;
}

}  // namespace speedy
