#pragma once

// Feature groups, soft vector quantization and exact cost accounting.
//
// Each group has a base per-pixel descriptor (cost c_gamma, paid once per
// instance) and a dictionary of centers; every (group, center) pair is a
// derived feature whose per-pixel code map costs c_phi, also paid once per
// instance. Region features are the codes average-pooled over a segment.

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "speedy/core.hpp"
#include "speedy/hierarchy.hpp"
#include "speedy/instance.hpp"

namespace speedy {

/// A derived feature: one dictionary center of one group.
struct FeatureRef {
  std::uint32_t group = 0;
  std::uint32_t center = 0;
  auto operator<=>(const FeatureRef&) const = default;
};

/// Cluster centers plus the center statistics the expanded code formula needs.
struct Dictionary {
  Matrix centers;                    // k x dim
  std::vector<double> sq_norms;      // ||mu_i||^2
  std::vector<double> mean_center;   // E_j[mu_j]
  double mean_sq_norm = 0.0;         // E_j[||mu_j||^2]

  static Dictionary from_centers(Matrix centers);
  std::size_t size() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }
  bool operator==(const Dictionary&) const = default;
};

struct FeatureGroup {
  std::uint32_t id = 0;
  std::string name;
  std::size_t base_dim = 0;
  double base_cost = 0.0;        // c_gamma
  double per_center_cost = 0.0;  // c_phi
  Dictionary dictionary;

  void validate() const;
  bool operator==(const FeatureGroup&) const = default;
};

/// Base and derived cost of one group, named as in the default synthetic corpus.
struct GroupCost {
  std::string name;
  double base_cost;
  double per_center_cost;
};

/// Millisecond timings for computing each group's base responses and its
/// pooled codes to all 150 centers, rescaled to a per-center cost.
std::vector<GroupCost> default_group_costs();

/// max(0, z_i(v)) with z_i(v) = E_j[d_j(v)] - d_i(v), evaluated through the
/// expanded form so only center i is touched.
double soft_vq_code(std::span<const double> descriptor, const Dictionary& dictionary, std::size_t center);

/// Lloyd's k-means seeded with distinct random samples drawn with `seed`.
/// Empty clusters keep their previous center.
Dictionary kmeans_dictionary(const Matrix& samples, std::size_t k, std::size_t iterations, std::uint64_t seed);

/// Gamma(f) and Phi(f): groups whose base descriptors and centers whose codes are paid for.
struct FeatureSet {
  std::set<std::uint32_t> groups;
  std::set<FeatureRef> centers;

  bool has_group(std::uint32_t g) const { return groups.contains(g); }
  bool has(FeatureRef ref) const { return centers.contains(ref); }
  void insert(FeatureRef ref) {
    groups.insert(ref.group);
    centers.insert(ref);
  }
  void merge(const FeatureSet& other);
  bool operator==(const FeatureSet&) const = default;
};

/// c_Gamma + c_Phi of `requested` given that `paid` is already computed.
double incremental_cost(const FeatureSet& paid, const std::set<FeatureRef>& requested,
                        std::span<const FeatureGroup> groups);

/// Cost accrued by one stage of one inference.
struct StageCharge {
  std::size_t stage = 0;
  double selector_cost = 0.0;
  double predictor_cost = 0.0;
  double group_cost = 0.0;
  double center_cost = 0.0;
  std::vector<std::uint32_t> groups;  // groups first computed by this stage
  std::vector<FeatureRef> centers;    // centers first computed by this stage
  std::vector<SegmentRef> selected;   // segments the stage updated

  double total() const { return selector_cost + predictor_cost + group_cost + center_cost; }
};

/// Per-inference record of incurred cost; each group and center is charged at
/// most once.
class CostLedger {
 public:
  explicit CostLedger(std::vector<FeatureGroup> groups = {}) : groups_(std::move(groups)) {}

  /// Opens a stage entry and charges its fixed selection and prediction costs.
  void begin_stage(std::size_t stage, double selector_cost, double predictor_cost);

  /// Charges c_gamma if the group's base descriptors are new. Returns the delta.
  double charge_group(std::uint32_t group);
  /// Charges the group (if new) and c_phi (if the center is new). Returns the delta.
  double charge(FeatureRef ref);

  /// Cost that charging `refs` would add now, without mutating.
  double prospective_cost(const std::set<FeatureRef>& refs) const;

  double total() const { return total_; }
  const std::vector<StageCharge>& entries() const { return entries_; }
  StageCharge& current();
  const FeatureSet& paid() const { return paid_; }
  const std::vector<FeatureGroup>& groups() const { return groups_; }

 private:
  std::vector<FeatureGroup> groups_;
  std::vector<StageCharge> entries_;
  FeatureSet paid_;
  double total_ = 0.0;
};

/// Lazily computed per-instance code maps. Values are memoized; whether a
/// value has been paid for is the ledger's business.
class FeatureCache {
 public:
  FeatureCache(const StructuredInstance& instance, std::span<const FeatureGroup> groups);

  /// Mean soft-VQ code of `ref` over the segment's pixels. Charges `ledger`
  /// (when given) on first touch of the group or center.
  double pooled_code(const Segment& segment, FeatureRef ref, CostLedger* ledger = nullptr);

  /// Per-pixel code map of one center (computed on first request).
  const std::vector<double>& code_map(FeatureRef ref);

  std::size_t base_computations() const { return base_computations_; }
  std::size_t code_map_computations() const { return code_maps_.size(); }

 private:
  const StructuredInstance& instance_;
  std::span<const FeatureGroup> groups_;
  std::map<FeatureRef, std::vector<double>> code_maps_;
  std::vector<bool> base_touched_;
  std::size_t base_computations_ = 0;
};

/// Mean of `code_map` over the segment's pixels (pixel order as stored).
double pool(const std::vector<double>& code_map, const Segment& segment);

}  // namespace speedy
