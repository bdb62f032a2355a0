#pragma once

// Shared numeric types and the cross-entropy objective used by every other
// module: row-major matrices, per-pixel score fields, the softmax link and the
// functional gradient of the per-pixel cross-entropy risk.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace speedy {

/// Raised for malformed numeric input (non-finite values, empty sets, bad indices).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when two objects that must agree in shape do not.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for unreadable/unwritable files and malformed serialized data.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-element class scores (logits) of a structured output: J rows, K columns.
///
/// Entries must stay finite; the constructor and `check_finite` enforce this.
class ScoreField {
 public:
  ScoreField() = default;
  ScoreField(std::size_t num_elements, std::size_t num_classes)
      : scores_(num_elements, num_classes) {}
  explicit ScoreField(Matrix scores);

  /// Every row set to `row`.
  static ScoreField constant(std::size_t num_elements, std::span<const double> row);

  std::size_t num_elements() const { return scores_.rows(); }
  std::size_t num_classes() const { return scores_.cols(); }

  std::span<double> element(std::size_t j) { return scores_.row(j); }
  std::span<const double> element(std::size_t j) const { return scores_.row(j); }

  const Matrix& matrix() const { return scores_; }
  Matrix& matrix() { return scores_; }

  bool all_finite() const;
  void check_finite() const;

  bool operator==(const ScoreField&) const = default;

 private:
  Matrix scores_;
};

/// Normalized class probabilities for one structural element.
using ClassDistribution = std::vector<double>;

/// log(sum_k exp(v_k)), max-shifted.
double log_sum_exp(std::span<const double> values);

/// exp(v_k - max v) normalized. Throws InvalidInput on non-finite entries.
ClassDistribution softmax(std::span<const double> scores_row);

/// Writes softmax(scores_row) into `out` without allocating or validating.
void softmax_into(std::span<const double> scores_row, std::span<double> out);

/// Shannon entropy in nats; 0 log 0 is taken as 0.
double entropy(std::span<const double> probs);

/// -sum_j sum_k p_jk log q_jk for one instance (sum over elements).
double cross_entropy_risk(const ScoreField& scores, const Matrix& truth);

/// Mean of the per-instance risk over a set of instances.
double cross_entropy_risk(std::span<const ScoreField> scores, std::span<const Matrix> truths);

/// Per-element p_j - q(y)_j: the negative gradient of `cross_entropy_risk`.
Matrix descent_direction(const ScoreField& scores, const Matrix& truth);

/// (1/|S|) sum_{j in S} H(softmax(y_j)). Throws on an empty set.
double mean_entropy(const ScoreField& scores, std::span<const std::size_t> elements);

/// Index of the largest entry; lowest index wins ties.
std::size_t argmax(std::span<const double> values);

void require(bool condition, const std::string& message);
void require_dims(bool condition, const std::string& message);

}  // namespace speedy
