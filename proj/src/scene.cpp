#include "speedy/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "speedy/rng.hpp"

namespace speedy {

std::vector<SyntheticGroupSpec> default_synthetic_groups() {
  return {{"TXT", 2.5, 0}, {"LBP", 3.0, 1}, {"I-SIFT", 1.5, 2}, {"C-SIFT", 1.0, -1}};
}

void SyntheticSceneConfig::validate() const {
  require(width >= 8 && height >= 8, "scene: width and height must be at least 8");
  require(num_classes >= 2, "scene: need at least two classes");
  require(hierarchy_levels >= 2, "scene: need at least two hierarchy levels");
  require(noise_level >= 0.0 && noise_level < 1.0, "scene: noise_level must lie in [0,1)");
  require(base_dim >= 1, "scene: base_dim must be positive");
  require(min_shape_fraction > 0.0 && min_shape_fraction <= max_shape_fraction && max_shape_fraction <= 1.0,
          "scene: shape fractions must satisfy 0 < min <= max <= 1");
  for (const auto& g : groups)
    require(g.merged_class < static_cast<int>(num_classes), "scene: merged class outside class range");
}

namespace {

// Six significant digits keep the text serialization compact and exact.
double quantize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

}  // namespace

StructuredInstance generate_scene(const SyntheticSceneConfig& config) {
  config.validate();
  const std::size_t W = config.width, H = config.height, K = config.num_classes;
  Rng rng(config.rng_seed);

  const auto background = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::int64_t>(K) - 1));
  std::vector<std::uint32_t> labels(W * H, background);
  const auto side = [&](std::size_t extent) {
    const auto lo = std::max<std::int64_t>(1, std::llround(config.min_shape_fraction * static_cast<double>(extent)));
    const auto hi = std::max<std::int64_t>(lo, std::llround(config.max_shape_fraction * static_cast<double>(extent)));
    return uniform_int(rng, lo, hi);
  };
  for (std::size_t s = 0; s < config.num_shapes; ++s) {
    const bool ellipse = uniform01(rng) < 0.5;
    // Any class other than the background.
    auto cls = static_cast<std::uint32_t>(uniform_int(rng, 0, static_cast<std::int64_t>(K) - 2));
    if (cls >= background) ++cls;
    const auto w = side(W), h = side(H);
    const auto x0 = uniform_int(rng, 0, static_cast<std::int64_t>(W) - w);
    const auto y0 = uniform_int(rng, 0, static_cast<std::int64_t>(H) - h);
    const double cx = static_cast<double>(x0) + w / 2.0, cy = static_cast<double>(y0) + h / 2.0;
    for (auto y = y0; y < y0 + h; ++y)
      for (auto x = x0; x < x0 + w; ++x) {
        if (ellipse) {
          const double dx = (x + 0.5 - cx) / (w / 2.0), dy = (y + 0.5 - cy) / (h / 2.0);
          if (dx * dx + dy * dy > 1.0) continue;
        }
        labels[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] = cls;
      }
  }

  StructuredInstance inst;
  inst.width = W;
  inst.height = H;
  inst.num_classes = K;
  inst.labels = one_hot_labels(labels, K);
  inst.hierarchy =
      std::make_shared<const SegmentationHierarchy>(build_quadtree_hierarchy(W, H, config.hierarchy_levels));

  std::vector<double> raw(K);
  for (std::size_t g = 0; g < config.groups.size(); ++g) {
    const auto& spec = config.groups[g];
    // Fixed per group: depends on the feature seed only.
    Rng map_rng(config.feature_seed * 1000003ULL + g);
    Matrix projection(config.base_dim, K);
    for (double& v : projection.data()) v = standard_normal(map_rng);
    const double eta = std::min(0.9, config.noise_level * spec.noise_scale);

    BaseFeatureField field;
    field.group = static_cast<std::uint32_t>(g);
    field.dim = config.base_dim;
    field.values.resize(W * H * config.base_dim);
    for (std::size_t p = 0; p < W * H; ++p) {
      std::uint32_t shown = labels[p];
      if (spec.merged_class >= 0 && shown == (static_cast<std::uint32_t>(spec.merged_class) + 1) % K)
        shown = static_cast<std::uint32_t>(spec.merged_class);
      for (std::size_t k = 0; k < K; ++k) raw[k] = (k == shown ? 1.0 - eta : 0.0) + eta * uniform01(rng);
      for (std::size_t d = 0; d < config.base_dim; ++d) {
        double v = 0.0;
        for (std::size_t k = 0; k < K; ++k) v += projection(d, k) * raw[k];
        field.values[p * config.base_dim + d] = quantize(v);
      }
    }
    inst.base_features.push_back(std::move(field));
  }
  inst.validate();
  return inst;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  return seed * 1000003ULL + 0x9e3779b97f4a7c15ULL * (index + 1);
}

std::vector<StructuredInstance> generate_corpus(const SyntheticSceneConfig& config, std::size_t count,
                                                std::uint64_t seed) {
  std::vector<StructuredInstance> out;
  out.reserve(count);
  SyntheticSceneConfig c = config;
  for (std::size_t i = 0; i < count; ++i) {
    c.rng_seed = scene_seed(seed, i);
    out.push_back(generate_scene(c));
  }
  return out;
}

}  // namespace speedy
