#pragma once

#include <cmath>
#include <random>

#include "speedy/core.hpp"
#include "speedy/boosting.hpp"
#include "speedy/features.hpp"
#include "speedy/hierarchy.hpp"
#include "speedy/instance.hpp"
#include "speedy/scene.hpp"

namespace test {

inline speedy::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -2.0,
                                    double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  speedy::Matrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

/// Rows drawn from a Dirichlet(1) distribution.
inline speedy::Matrix random_distributions(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::exponential_distribution<double> e(1.0);
  speedy::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (m(r, c) = e(rng) + 1e-3);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) /= s;
  }
  return m;
}

inline speedy::ScoreField random_scores(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                        double scale = 2.0) {
  speedy::ScoreField f(rows, cols);
  f.matrix() = random_matrix(rng, rows, cols, -scale, scale);
  return f;
}

/// A small synthetic scene.
inline speedy::StructuredInstance small_scene(std::uint64_t seed, std::size_t size = 16, std::size_t levels = 3,
                                              std::size_t classes = 3) {
  speedy::SyntheticSceneConfig c;
  c.width = c.height = size;
  c.num_classes = classes;
  c.hierarchy_levels = levels;
  c.rng_seed = seed;
  for (auto& g : c.groups)
    if (g.merged_class >= static_cast<int>(classes)) g.merged_class = -1;
  return speedy::generate_scene(c);
}

/// A small training corpus.
inline std::vector<speedy::StructuredInstance> small_corpus(std::size_t count, std::uint64_t seed,
                                                            std::size_t size = 16, std::size_t levels = 3,
                                                            std::size_t classes = 3) {
  std::vector<speedy::StructuredInstance> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(small_scene(seed * 1000 + i, size, levels, classes));
  return out;
}

/// Fast settings for unit-test training runs.
inline speedy::TrainConfig small_train_config(std::size_t iterations, std::size_t folds = 3) {
  speedy::TrainConfig c;
  c.iterations = iterations;
  c.folds = folds;
  c.depths = {0, 1, 2};
  c.dictionary_size = 4;
  c.kmeans_iterations = 10;
  c.kmeans_samples = 2000;
  c.seed = 7;
  return c;
}

/// Groups with random dictionaries and the default per-group costs.
inline std::vector<speedy::FeatureGroup> random_groups(std::mt19937_64& rng, std::size_t num_groups,
                                                      std::size_t centers, std::size_t dim) {
  const auto costs = speedy::default_group_costs();
  std::vector<speedy::FeatureGroup> out;
  for (std::size_t g = 0; g < num_groups; ++g) {
    speedy::FeatureGroup group;
    group.id = static_cast<std::uint32_t>(g);
    group.name = costs[g % costs.size()].name;
    group.base_dim = dim;
    group.base_cost = costs[g % costs.size()].base_cost;
    group.per_center_cost = costs[g % costs.size()].per_center_cost;
    group.dictionary = speedy::Dictionary::from_centers(random_matrix(rng, centers, dim));
    out.push_back(std::move(group));
  }
  return out;
}

}  // namespace test
