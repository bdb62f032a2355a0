#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/hierarchy.hpp"

namespace speedy {

/// Raw per-pixel descriptors of one feature group (row-major, J x dim).
struct BaseFeatureField {
  std::uint32_t group = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> descriptor(std::size_t pixel) const { return {values.data() + pixel * dim, dim}; }
  bool operator==(const BaseFeatureField&) const = default;
};

/// One structured problem: a pixel grid, its segmentation hierarchy, per-pixel
/// ground-truth class distributions and the raw base-feature sources.
struct StructuredInstance {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t num_classes = 0;
  Matrix labels;  // J x K, each row a distribution
  std::shared_ptr<const SegmentationHierarchy> hierarchy;
  std::vector<BaseFeatureField> base_features;  // indexed by group id

  std::size_t num_pixels() const { return width * height; }
  const BaseFeatureField& base_field(std::uint32_t group) const;

  /// Checks shapes, label normalization and hierarchy coverage.
  void validate() const;
};

/// Per-pixel argmax of the ground-truth distributions.
std::vector<std::uint32_t> label_map(const StructuredInstance& instance);

/// One-hot J x K label matrix from an integer label map.
Matrix one_hot_labels(std::span<const std::uint32_t> labels, std::size_t num_classes);

inline constexpr int kInstanceFormatVersion = 1;

std::string instance_to_text(const StructuredInstance& instance);
StructuredInstance instance_from_text(const std::string& text);
void save_instance(const StructuredInstance& instance, const std::filesystem::path& path);
StructuredInstance load_instance(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for manifest and config hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace speedy
