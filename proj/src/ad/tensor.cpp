#include "chronoalign/ad/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace chronoalign::ad {

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0 || data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("Tensor: data size does not match shape");
  }
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor(1, static_cast<int>(values.size()), std::vector<double>(values));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, static_cast<int>(values.size()), std::vector<double>(values.begin(), values.end()));
}

std::string Tensor::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace chronoalign::ad
