// SPDX-License-Identifier: Apache-2.0
#include "varleak/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "varleak/error.hpp"

namespace varleak::core {

std::size_t element_count(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  for (auto e : shape_) {
    if (e == 0) throw ConfigError("tensor extents must be positive, got " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != element_count(shape_)) {
    throw ConfigError("tensor of shape " + shape_string(shape_) + " cannot hold " + std::to_string(data_.size()) +
                      " values");
  }
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ConfigError("axis out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  return data_.size() / shape_[0];
}

std::span<double> Tensor::row_span(std::size_t r) noexcept {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row_span(std::size_t r) const noexcept {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin >= end || end > t.rows()) throw ConfigError("invalid row slice");
  Shape shape = t.shape();
  shape[0] = end - begin;
  const auto c = t.cols();
  return Tensor(std::move(shape),
                std::vector<double>(t.data() + begin * c, t.data() + end * c));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("gather_rows needs at least one index");
  Shape shape = t.shape();
  shape[0] = indices.size();
  const auto c = t.cols();
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) throw ConfigError("gather_rows index out of range");
    std::copy_n(t.data() + indices[i] * c, c, out.data() + i * c);
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace varleak::core
