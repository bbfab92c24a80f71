#include "ckd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "ckd/errors.hpp"

namespace ckd {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill), grad_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("tensor dimensions must be positive, got " + shape_string());
  }
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)), grad_(rows * cols, 0.0) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("tensor dimensions must be positive, got " + shape_string());
  }
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor " + shape_string() + " given " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

double Tensor::item() const {
  if (!is_scalar()) throw DimensionError("item() on non-scalar tensor " + shape_string());
  return data_[0];
}

void Tensor::zero_grad() noexcept { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

}  // namespace ckd
