#include "speedy/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "speedy/rng.hpp"

namespace speedy {

Dictionary Dictionary::from_centers(Matrix centers) {
  require(centers.rows() > 0 && centers.cols() > 0, "dictionary: no centers");
  Dictionary d;
  const std::size_t k = centers.rows(), dim = centers.cols();
  d.sq_norms.resize(k);
  d.mean_center.assign(dim, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto mu = centers.row(i);
    d.sq_norms[i] = std::inner_product(mu.begin(), mu.end(), mu.begin(), 0.0);
    d.mean_sq_norm += d.sq_norms[i];
    for (std::size_t c = 0; c < dim; ++c) d.mean_center[c] += mu[c];
  }
  d.mean_sq_norm /= static_cast<double>(k);
  for (double& m : d.mean_center) m /= static_cast<double>(k);
  d.centers = std::move(centers);
  return d;
}

void FeatureGroup::validate() const {
  require(base_cost >= 0.0 && per_center_cost >= 0.0, "feature group " + name + ": negative cost");
  require(dictionary.size() > 0, "feature group " + name + ": empty dictionary");
  require_dims(dictionary.dim() == base_dim, "feature group " + name + ": dictionary dimension");
}

std::vector<GroupCost> default_group_costs() {
  constexpr double kCenters = 150.0;
  return {{"TXT", 29.0, 66.0 / kCenters},
          {"LBP", 64.0, 265.0 / kCenters},
          {"I-SIFT", 33.0, 165.0 / kCenters},
          {"C-SIFT", 93.0, 443.0 / kCenters}};
}

double soft_vq_code(std::span<const double> descriptor, const Dictionary& dictionary, std::size_t center) {
  if (center >= dictionary.size()) throw InvalidInput("soft_vq_code: center index out of range");
  require_dims(descriptor.size() == dictionary.dim(), "soft_vq_code: descriptor dimension");
  auto mu = dictionary.centers.row(center);
  double mean_dot = 0.0, center_dot = 0.0;
  for (std::size_t c = 0; c < descriptor.size(); ++c) {
    mean_dot += dictionary.mean_center[c] * descriptor[c];
    center_dot += mu[c] * descriptor[c];
  }
  const double z = dictionary.mean_sq_norm - 2.0 * mean_dot - (dictionary.sq_norms[center] - 2.0 * center_dot);
  return std::max(0.0, z);
}

Dictionary kmeans_dictionary(const Matrix& samples, std::size_t k, std::size_t iterations, std::uint64_t seed) {
  require(k >= 1, "kmeans: k must be positive");
  require(samples.rows() >= k, "kmeans: fewer samples than centers");
  const std::size_t n = samples.rows(), dim = samples.cols();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);
  Matrix centers(k, dim);
  for (std::size_t i = 0; i < k; ++i) std::copy_n(samples.row(order[i]).begin(), dim, centers.row(i).begin());

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t s = 0; s < n; ++s) {
      auto x = samples.row(s);
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t i = 0; i < k; ++i) {
        auto mu = centers.row(i);
        double d = 0.0;
        for (std::size_t c = 0; c < dim; ++c) d += (x[c] - mu[c]) * (x[c] - mu[c]);
        if (d < best) {
          best = d;
          arg = i;
        }
      }
      changed |= (it == 0 || assign[s] != arg);
      assign[s] = arg;
    }
    if (!changed) break;
    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t s = 0; s < n; ++s) {
      ++counts[assign[s]];
      auto x = samples.row(s);
      for (std::size_t c = 0; c < dim; ++c) sums(assign[s], c) += x[c];
    }
    for (std::size_t i = 0; i < k; ++i)
      if (counts[i] > 0)
        for (std::size_t c = 0; c < dim; ++c) centers(i, c) = sums(i, c) / static_cast<double>(counts[i]);
  }
  return Dictionary::from_centers(std::move(centers));
}

void FeatureSet::merge(const FeatureSet& other) {
  groups.insert(other.groups.begin(), other.groups.end());
  centers.insert(other.centers.begin(), other.centers.end());
}

double incremental_cost(const FeatureSet& paid, const std::set<FeatureRef>& requested,
                        std::span<const FeatureGroup> groups) {
  double cost = 0.0;
  std::set<std::uint32_t> new_groups;
  for (const FeatureRef& ref : requested) {
    require(ref.group < groups.size(), "feature reference to unknown group");
    if (!paid.has_group(ref.group) && new_groups.insert(ref.group).second) cost += groups[ref.group].base_cost;
    if (!paid.has(ref)) cost += groups[ref.group].per_center_cost;
  }
  return cost;
}

void CostLedger::begin_stage(std::size_t stage, double selector_cost, double predictor_cost) {
  StageCharge entry;
  entry.stage = stage;
  entry.selector_cost = selector_cost;
  entry.predictor_cost = predictor_cost;
  total_ += selector_cost + predictor_cost;
  entries_.push_back(std::move(entry));
}

StageCharge& CostLedger::current() {
  require(!entries_.empty(), "cost ledger: no open stage");
  return entries_.back();
}

double CostLedger::charge_group(std::uint32_t group) {
  require(group < groups_.size(), "cost ledger: unknown group");
  if (paid_.has_group(group)) return 0.0;
  StageCharge& entry = current();
  paid_.groups.insert(group);
  const double delta = groups_[group].base_cost;
  entry.groups.push_back(group);
  entry.group_cost += delta;
  total_ += delta;
  return delta;
}

double CostLedger::charge(FeatureRef ref) {
  double delta = charge_group(ref.group);
  if (!paid_.has(ref)) {
    StageCharge& entry = current();
    paid_.centers.insert(ref);
    const double c = groups_[ref.group].per_center_cost;
    entry.centers.push_back(ref);
    entry.center_cost += c;
    total_ += c;
    delta += c;
  }
  return delta;
}

double CostLedger::prospective_cost(const std::set<FeatureRef>& refs) const {
  return incremental_cost(paid_, refs, groups_);
}

FeatureCache::FeatureCache(const StructuredInstance& instance, std::span<const FeatureGroup> groups)
    : instance_(instance), groups_(groups), base_touched_(groups.size(), false) {}

const std::vector<double>& FeatureCache::code_map(FeatureRef ref) {
  if (auto it = code_maps_.find(ref); it != code_maps_.end()) return it->second;
  require(ref.group < groups_.size(), "feature cache: unknown group");
  const FeatureGroup& group = groups_[ref.group];
  if (ref.center >= group.dictionary.size()) throw InvalidInput("feature cache: center index out of range");
  const BaseFeatureField& field = instance_.base_field(ref.group);
  require_dims(field.dim == group.base_dim, "feature cache: base descriptor dimension differs from the group's");
  if (!base_touched_[ref.group]) {
    base_touched_[ref.group] = true;
    ++base_computations_;
  }
  std::vector<double> codes(instance_.num_pixels());
  for (std::size_t p = 0; p < codes.size(); ++p) codes[p] = soft_vq_code(field.descriptor(p), group.dictionary, ref.center);
  return code_maps_.emplace(ref, std::move(codes)).first->second;
}

double pool(const std::vector<double>& code_map, const Segment& segment) {
  require(!segment.pixels.empty(), "pooled code over an empty segment");
  double sum = 0.0;
  for (std::size_t p : segment.pixels) sum += code_map[p];
  return sum / static_cast<double>(segment.pixels.size());
}

double FeatureCache::pooled_code(const Segment& segment, FeatureRef ref, CostLedger* ledger) {
  const double value = pool(code_map(ref), segment);
  if (ledger != nullptr) ledger->charge(ref);
  return value;
}

}  // namespace speedy
