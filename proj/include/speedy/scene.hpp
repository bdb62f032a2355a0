#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "speedy/instance.hpp"

namespace speedy {

/// How one synthetic base-feature group renders the label map.
struct SyntheticGroupSpec {
  std::string name;
  double noise_scale = 1.0;  // multiplies the scene noise level
  int merged_class = -1;     // when >= 0, class merged_class+1 (mod K) renders as merged_class
};

/// Four groups standing in for texture, LBP, intensity-SIFT and colour-SIFT:
/// cheaper groups are noisier and confuse one pair of classes.
std::vector<SyntheticGroupSpec> default_synthetic_groups();

struct SyntheticSceneConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t num_classes = 5;
  std::size_t num_shapes = 3;
  double noise_level = 0.2;
  std::size_t hierarchy_levels = 4;
  std::uint64_t rng_seed = 0;
  // Shared by every scene of a corpus so train and test descriptors agree.
  std::uint64_t feature_seed = 1013;
  std::size_t base_dim = 4;
  double min_shape_fraction = 0.25;
  double max_shape_fraction = 0.625;
  std::vector<SyntheticGroupSpec> groups = default_synthetic_groups();

  void validate() const;
};

/// Composites random rectangles and ellipses over a background class and
/// renders base descriptors for every group. Pure function of the config.
StructuredInstance generate_scene(const SyntheticSceneConfig& config);

/// Seed of scene `index` in a corpus generated with `seed`.
std::uint64_t scene_seed(std::uint64_t seed, std::size_t index);

/// `count` scenes; scene i uses rng_seed = scene_seed(seed, i).
std::vector<StructuredInstance> generate_corpus(const SyntheticSceneConfig& config, std::size_t count,
                                                std::uint64_t seed);

}  // namespace speedy
