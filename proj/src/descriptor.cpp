#include "speedy/descriptor.hpp"

#include <algorithm>
#include <cmath>

namespace speedy {

std::optional<FeatureRef> DescriptorLayout::cost_ref(std::size_t column) const {
  if (column < derived_offset() || column >= size()) return std::nullopt;
  return derived[column - derived_offset()];
}

std::vector<std::optional<FeatureRef>> DescriptorLayout::cost_refs() const {
  std::vector<std::optional<FeatureRef>> refs(size());
  for (std::size_t c = 0; c < size(); ++c) refs[c] = cost_ref(c);
  return refs;
}

std::string DescriptorLayout::column_name(std::size_t column, std::span<const FeatureGroup> groups) const {
  static const char* kShapeNames[kShapeColumns] = {"area", "aspect", "level", "centroid_x", "centroid_y"};
  if (shape && column < kShapeColumns) return kShapeNames[column];
  if (context && column >= context_offset() && column < derived_offset()) {
    const std::size_t c = column - context_offset();
    static const char* kBlocks[3] = {"own_q", "parent_q", "sibling_q"};
    return std::string(kBlocks[c / num_classes]) + "[" + std::to_string(c % num_classes) + "]";
  }
  const FeatureRef ref = derived.at(column - derived_offset());
  const std::string group = ref.group < groups.size() ? groups[ref.group].name : std::to_string(ref.group);
  return group + "#" + std::to_string(ref.center);
}

DescriptorLayout full_layout(std::size_t num_classes, std::span<const FeatureGroup> groups, bool shape,
                             bool context) {
  DescriptorLayout layout;
  layout.num_classes = num_classes;
  layout.shape = shape;
  layout.context = context;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.dictionary.size(); ++i) layout.derived.push_back({g.id, static_cast<std::uint32_t>(i)});
  return layout;
}

std::vector<double> atom_sizes(const SegmentationHierarchy& hierarchy) {
  const auto& atoms = hierarchy.level(hierarchy.finest_level());
  std::vector<double> sizes(atoms.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) sizes[a] = static_cast<double>(atoms[a].size());
  return sizes;
}

void atom_distributions(const Matrix& atom_scores, Matrix& q, std::vector<double>& entropies) {
  q = Matrix(atom_scores.rows(), atom_scores.cols());
  entropies.resize(atom_scores.rows());
  for (std::size_t a = 0; a < atom_scores.rows(); ++a) {
    softmax_into(atom_scores.row(a), q.row(a));
    entropies[a] = entropy(q.row(a));
  }
}

SegmentStats compute_segment_stats(const SegmentationHierarchy& hierarchy, const Matrix& atom_scores) {
  require_dims(atom_scores.rows() == hierarchy.num_atoms(), "segment stats: one score row per atom expected");
  const std::size_t K = atom_scores.cols();
  Matrix q;
  std::vector<double> h;
  atom_distributions(atom_scores, q, h);
  const double max_entropy = std::log(static_cast<double>(K));
  const auto& atoms = hierarchy.level(hierarchy.finest_level());

  SegmentStats stats;
  stats.mean_entropy.resize(hierarchy.num_levels());
  stats.mean_q.resize(hierarchy.num_levels());
  for (std::size_t l = 0; l < hierarchy.num_levels(); ++l) {
    const auto& segments = hierarchy.level(l);
    stats.mean_entropy[l].assign(segments.size(), 0.0);
    stats.mean_q[l] = Matrix(segments.size(), K);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      double ent = 0.0;
      auto mq = stats.mean_q[l].row(s);
      for (std::size_t a : segments[s].atoms) {
        const double w = static_cast<double>(atoms[a].size());
        ent += w * h[a];
        for (std::size_t k = 0; k < K; ++k) mq[k] += w * q(a, k);
      }
      const double n = static_cast<double>(segments[s].size());
      stats.mean_entropy[l][s] = std::min(ent / n, max_entropy);
      for (double& v : mq) v /= n;
    }
  }
  return stats;
}

SegmentStats compute_segment_stats(const SegmentationHierarchy& hierarchy, const ScoreField& pixel_scores) {
  require_dims(pixel_scores.num_elements() == hierarchy.num_pixels(), "segment stats: score field size");
  const std::size_t K = pixel_scores.num_classes();
  Matrix q;
  std::vector<double> h;
  atom_distributions(pixel_scores.matrix(), q, h);
  const double max_entropy = std::log(static_cast<double>(K));
  SegmentStats stats;
  stats.mean_entropy.resize(hierarchy.num_levels());
  stats.mean_q.resize(hierarchy.num_levels());
  for (std::size_t l = 0; l < hierarchy.num_levels(); ++l) {
    const auto& segments = hierarchy.level(l);
    stats.mean_entropy[l].assign(segments.size(), 0.0);
    stats.mean_q[l] = Matrix(segments.size(), K);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      auto mq = stats.mean_q[l].row(s);
      for (std::size_t p : segments[s].pixels) {
        stats.mean_entropy[l][s] += h[p];
        for (std::size_t k = 0; k < K; ++k) mq[k] += q(p, k);
      }
      const double n = static_cast<double>(segments[s].size());
      stats.mean_entropy[l][s] = std::min(stats.mean_entropy[l][s] / n, max_entropy);
      for (double& v : mq) v /= n;
    }
  }
  return stats;
}

void shape_features(const SegmentationHierarchy& hierarchy, const Segment& segment, std::span<double> out) {
  const double W = static_cast<double>(hierarchy.width()), H = static_cast<double>(hierarchy.height());
  double cx = 0.0, cy = 0.0;
  for (std::size_t p : segment.pixels) {
    cx += static_cast<double>(p % hierarchy.width()) + 0.5;
    cy += static_cast<double>(p / hierarchy.width()) + 0.5;
  }
  const double n = static_cast<double>(segment.size());
  out[0] = n / (W * H);
  out[1] = static_cast<double>(segment.x1 - segment.x0) / static_cast<double>(segment.y1 - segment.y0);
  out[2] = static_cast<double>(segment.level);
  out[3] = cx / n / W;
  out[4] = cy / n / H;
}

void context_features(const SegmentationHierarchy& hierarchy, const SegmentStats& stats, SegmentRef ref,
                      std::span<double> out) {
  const Matrix& level_q = stats.mean_q[ref.level];
  const std::size_t K = level_q.cols();
  auto own = level_q.row(ref.index);
  std::copy(own.begin(), own.end(), out.begin());

  const Segment& seg = hierarchy.segment(ref);
  if (!seg.parent) {
    std::copy(own.begin(), own.end(), out.begin() + K);
    std::copy(own.begin(), own.end(), out.begin() + 2 * K);
    return;
  }
  auto parent = stats.mean_q[ref.level - 1].row(*seg.parent);
  std::copy(parent.begin(), parent.end(), out.begin() + K);

  const Segment& p = hierarchy.level(ref.level - 1)[*seg.parent];
  auto sib = out.subspan(2 * K, K);
  std::fill(sib.begin(), sib.end(), 0.0);
  double total = 0.0;
  for (std::size_t c : p.children) {
    if (c == ref.index) continue;
    const double w = static_cast<double>(hierarchy.level(ref.level)[c].size());
    auto cq = level_q.row(c);
    for (std::size_t k = 0; k < K; ++k) sib[k] += w * cq[k];
    total += w;
  }
  if (total == 0.0) {
    std::copy(own.begin(), own.end(), sib.begin());
  } else {
    for (double& v : sib) v /= total;
  }
}

ScoreField expand_atom_scores(const SegmentationHierarchy& hierarchy, const Matrix& atom_scores) {
  require_dims(atom_scores.rows() == hierarchy.num_atoms(), "expand: one score row per atom expected");
  ScoreField field(hierarchy.num_pixels(), atom_scores.cols());
  for (std::size_t p = 0; p < hierarchy.num_pixels(); ++p) {
    auto src = atom_scores.row(hierarchy.atom_of(p));
    std::copy(src.begin(), src.end(), field.element(p).begin());
  }
  return field;
}

}  // namespace speedy
