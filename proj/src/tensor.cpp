#include "fedcollab/tensor.hpp"

#include "fedcollab/errors.hpp"

namespace fedcollab {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("Tensor2D: values length does not match rows * cols");
  }
}

std::vector<double> Tensor2D::row(std::size_t r) const {
  return std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
                             values_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_));
}

}  // namespace fedcollab
