#include "speedy/core.hpp"

#include <algorithm>
#include <cmath>

namespace speedy {

void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

void require_dims(bool condition, const std::string& message) {
  if (!condition) throw DimensionMismatch(message);
}

ScoreField::ScoreField(Matrix scores) : scores_(std::move(scores)) { check_finite(); }

ScoreField ScoreField::constant(std::size_t num_elements, std::span<const double> row) {
  ScoreField field(num_elements, row.size());
  for (std::size_t j = 0; j < num_elements; ++j) std::copy(row.begin(), row.end(), field.element(j).begin());
  field.check_finite();
  return field;
}

bool ScoreField::all_finite() const {
  return std::all_of(scores_.data().begin(), scores_.data().end(), [](double v) { return std::isfinite(v); });
}

void ScoreField::check_finite() const { require(all_finite(), "score field has non-finite entries"); }

double log_sum_exp(std::span<const double> values) {
  double hi = values[0];
  for (double v : values) hi = std::max(hi, v);
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

void softmax_into(std::span<const double> scores_row, std::span<double> out) {
  double hi = scores_row[0];
  for (double v : scores_row) hi = std::max(hi, v);
  double sum = 0.0;
  for (std::size_t k = 0; k < scores_row.size(); ++k) {
    out[k] = std::exp(scores_row[k] - hi);
    sum += out[k];
  }
  for (std::size_t k = 0; k < scores_row.size(); ++k) out[k] /= sum;
}

ClassDistribution softmax(std::span<const double> scores_row) {
  require(!scores_row.empty(), "softmax of an empty vector");
  for (double v : scores_row) require(std::isfinite(v), "softmax input must be finite");
  ClassDistribution out(scores_row.size());
  softmax_into(scores_row, out);
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  // Rounding can push a flat distribution a hair past its maximum.
  return probs.empty() ? h : std::min(h, std::log(static_cast<double>(probs.size())));
}

double cross_entropy_risk(const ScoreField& scores, const Matrix& truth) {
  require_dims(scores.num_elements() == truth.rows() && scores.num_classes() == truth.cols(),
               "cross_entropy_risk: scores and truth dimensions differ");
  double risk = 0.0;
  for (std::size_t j = 0; j < scores.num_elements(); ++j) {
    auto y = scores.element(j);
    auto p = truth.row(j);
    const double lse = log_sum_exp(y);
    // -sum_k p_k (y_k - lse); a zero-probability class never contributes.
    for (std::size_t k = 0; k < y.size(); ++k)
      if (p[k] != 0.0) risk -= p[k] * (y[k] - lse);
  }
  return risk;
}

double cross_entropy_risk(std::span<const ScoreField> scores, std::span<const Matrix> truths) {
  require_dims(scores.size() == truths.size(), "cross_entropy_risk: instance counts differ");
  require(!scores.empty(), "cross_entropy_risk: empty instance set");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += cross_entropy_risk(scores[i], truths[i]);
  return total / static_cast<double>(scores.size());
}

Matrix descent_direction(const ScoreField& scores, const Matrix& truth) {
  require_dims(scores.num_elements() == truth.rows() && scores.num_classes() == truth.cols(),
               "descent_direction: scores and truth dimensions differ");
  Matrix out(truth.rows(), truth.cols());
  for (std::size_t j = 0; j < truth.rows(); ++j) {
    softmax_into(scores.element(j), out.row(j));
    auto p = truth.row(j);
    for (std::size_t k = 0; k < truth.cols(); ++k) out(j, k) = p[k] - out(j, k);
  }
  return out;
}

double mean_entropy(const ScoreField& scores, std::span<const std::size_t> elements) {
  require(!elements.empty(), "mean_entropy: empty element set");
  std::vector<double> q(scores.num_classes());
  double total = 0.0;
  for (std::size_t j : elements) {
    require(j < scores.num_elements(), "mean_entropy: element index out of range");
    softmax_into(scores.element(j), q);
    total += entropy(q);
  }
  return std::min(total / static_cast<double>(elements.size()), std::log(static_cast<double>(q.size())));
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[best]) best = k;
  return best;
}

}  // namespace speedy
