#include "corpus.hpp"

#include "speedy/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace speedy::detail {

Corpus::Corpus(std::span<const StructuredInstance> instances, std::span<const FeatureGroup> groups,
               const DescriptorLayout& layout)
    : layout_(layout) {
  require(!instances.empty(), "corpus: no instances");
  K_ = instances.front().num_classes;
  const std::size_t F = layout_.size();

  items_.resize(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const StructuredInstance& inst = instances[i];
    require_dims(inst.num_classes == K_, "corpus: instances disagree on the class count");
    CorpusInstance& item = items_[i];
    item.instance = &inst;
    item.hierarchy = inst.hierarchy.get();
    const auto& h = *item.hierarchy;
    item.atom_size = atom_sizes(h);
    item.atom_labels = Matrix(h.num_atoms(), K_);
    item.atom_class_pixels = Matrix(h.num_atoms(), K_);
    item.class_pixels.assign(K_, 0.0);
    for (std::size_t p = 0; p < inst.num_pixels(); ++p) {
      const std::size_t a = h.atom_of(p);
      auto lab = inst.labels.row(p);
      for (std::size_t k = 0; k < K_; ++k) item.atom_labels(a, k) += lab[k];
      const std::size_t c = argmax(lab);
      item.atom_class_pixels(a, c) += 1.0;
      item.class_pixels[c] += 1.0;
    }
    item.global_offset = num_global_;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < h.num_levels(); ++l) {
      item.level_offset.push_back(offset);
      offset += h.level(l).size();
      Matrix means(h.level(l).size(), K_);
      for (std::size_t s = 0; s < h.level(l).size(); ++s) {
        const auto m = segment_mean(inst.labels, h.level(l)[s]);
        std::copy(m.begin(), m.end(), means.row(s).begin());
      }
      item.segment_label_mean.push_back(std::move(means));
    }
    item.num_segments = offset;
    num_global_ += offset;
    total_pixels_ += static_cast<double>(inst.num_pixels());
  }

  static_rows_ = Matrix(num_global_, F);
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    const auto& h = *item.hierarchy;
    FeatureCache cache(*item.instance, groups);
    for (std::uint32_t l = 0; l < h.num_levels(); ++l) {
      for (std::uint32_t s = 0; s < h.level(l).size(); ++s) {
        auto row = static_rows_.row(global_id(i, {l, s}));
        const Segment& seg = h.level(l)[s];
        if (layout_.shape) shape_features(h, seg, row.subspan(layout_.shape_offset(), DescriptorLayout::kShapeColumns));
        for (std::size_t d = 0; d < layout_.derived.size(); ++d)
          row[layout_.derived_offset() + d] = pool(cache.code_map(layout_.derived[d]), seg);
      }
    }
  }

  static_order_.resize(F);
  for (std::size_t f = 0; f < F; ++f) {
    if (layout_.context && f >= layout_.context_offset() && f < layout_.derived_offset()) continue;
    auto& o = static_order_[f];
    o.resize(num_global_);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return static_rows_(a, f) < static_rows_(b, f); });
  }
}

Corpus::Descriptors Corpus::descriptors(const std::vector<ViewState>& view) const {
  Descriptors d;
  d.rows = static_rows_;
  d.order = static_order_;
  if (!layout_.context) return d;
  const std::size_t off = layout_.context_offset();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& h = *items_[i].hierarchy;
    for (std::uint32_t l = 0; l < h.num_levels(); ++l)
      for (std::uint32_t s = 0; s < h.level(l).size(); ++s)
        context_features(h, view[i].stats, {l, s}, d.rows.row(global_id(i, {l, s})).subspan(off, 3 * K_));
  }
  for (std::size_t f = off; f < layout_.derived_offset(); ++f) {
    auto& o = d.order[f];
    o.resize(num_global_);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return d.rows(a, f) < d.rows(b, f); });
  }
  return d;
}

std::size_t StageEffect::add_leaf(std::span<const double> update) {
  leaves_.insert(leaves_.end(), update.begin(), update.end());
  return leaves_.size() / K_ - 1;
}

void StageEffect::add_atom(std::span<const double> scores, double size, std::span<const double> labels,
                           std::size_t leaf) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < K_; ++k) {
    const double e = std::exp(scores[k] - m);
    shifted_exp_.push_back(e);
    sum += e;
  }
  log_norm_.push_back(std::log(sum));
  size_.push_back(size);
  leaf_.push_back(static_cast<std::uint32_t>(leaf));
  const double* u = leaves_.data() + leaf * K_;
  for (std::size_t k = 0; k < K_; ++k) linear_ += labels[k] * u[k];
}

double StageEffect::risk_change(double alpha) const {
  std::vector<double> factor(leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) factor[i] = std::exp(alpha * leaves_[i]);
  double total = 0.0;
  for (std::size_t a = 0; a < size_.size(); ++a) {
    const double* e = shifted_exp_.data() + a * K_;
    const double* f = factor.data() + leaf_[a] * K_;
    double dot = 0.0;
    for (std::size_t k = 0; k < K_; ++k) dot += e[k] * f[k];
    total += size_[a] * (std::log(dot) - log_norm_[a]);
  }
  return (total - alpha * linear_) / n_;
}

LineSearchOutcome line_search_effect(const StageEffect& effect, double alpha_max, double tolerance) {
  if (effect.empty()) return {};
  const auto f = [&](double a) { return effect.risk_change(a); };
  double alpha = golden_section_minimize(f, 0.0, alpha_max, tolerance);
  double value = f(alpha);
  if (const double at_max = f(alpha_max); at_max < value) {
    alpha = alpha_max;
    value = at_max;
  }
  if (!(value < 0.0)) return {};
  return {alpha, -value};
}

ViewMetrics view_metrics(const Corpus& corpus, const std::vector<ViewState>& view,
                         std::span<const std::size_t> members) {
  const std::size_t K = corpus.num_classes();
  ViewMetrics m;
  double correct = 0.0, pixels = 0.0;
  std::vector<double> class_correct(K, 0.0), class_total(K, 0.0);
  for (std::size_t i : members) {
    const CorpusInstance& item = corpus[i];
    const Matrix& y = view[i].atom_scores;
    double risk = 0.0;
    for (std::size_t a = 0; a < y.rows(); ++a) {
      auto row = y.row(a);
      const double lse = log_sum_exp(row);
      for (std::size_t k = 0; k < K; ++k)
        if (item.atom_labels(a, k) != 0.0) risk -= item.atom_labels(a, k) * (row[k] - lse);
      const std::size_t pred = argmax(row);
      correct += item.atom_class_pixels(a, pred);
      class_correct[pred] += item.atom_class_pixels(a, pred);
    }
    for (std::size_t k = 0; k < K; ++k) class_total[k] += item.class_pixels[k];
    pixels += static_cast<double>(item.instance->num_pixels());
    m.risk += risk;
  }
  m.risk /= static_cast<double>(members.size());
  m.pixel_accuracy = correct / pixels;
  double recall = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < K; ++k)
    if (class_total[k] > 0.0) {
      recall += class_correct[k] / class_total[k];
      ++present;
    }
  m.class_accuracy = present > 0 ? recall / static_cast<double>(present) : 0.0;
  return m;
}

}  // namespace speedy::detail
