#pragma once

#include <cstddef>
#include <vector>

namespace fedcollab {

// Dense row-major matrix of doubles. Row r, column c lives at r * cols + c.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws ShapeError when values.size() != rows * cols.
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  const double* row_ptr(std::size_t r) const { return values_.data() + r * cols_; }
  double* row_ptr(std::size_t r) { return values_.data() + r * cols_; }

  // Copies row r as a flat vector.
  std::vector<double> row(std::size_t r) const;

  bool same_shape(const Tensor2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

}  // namespace fedcollab
