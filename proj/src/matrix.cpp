#include "tpp/matrix.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace tpp {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: value count does not match shape");
  }
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace tpp
