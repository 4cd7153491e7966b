// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace varleak::core {

using Shape = std::vector<std::size_t>;

/// Dense row-major array of doubles. The first extent is the batch axis
/// by convention.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }
  /// Row vector (1 x n) from a list of values.
  static Tensor row(std::initializer_list<double> values);
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  /// Extent of axis 0 and product of the remaining extents.
  [[nodiscard]] std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  [[nodiscard]] std::size_t cols() const noexcept;

  [[nodiscard]] double* data() noexcept { return data_.data(); }
  [[nodiscard]] const double* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<double> values() & noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const& noexcept { return data_; }
  // A span into a temporary would dangle (e.g. in a range-for).
  std::span<const double> values() && = delete;
  [[nodiscard]] std::span<double> row_span(std::size_t r) noexcept;
  [[nodiscard]] std::span<const double> row_span(std::size_t r) const noexcept;

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  /// Same values, new shape; the element count must match.
  [[nodiscard]] Tensor reshaped(Shape shape) const;
  void fill(double v);
  [[nodiscard]] bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

[[nodiscard]] std::size_t element_count(const Shape& shape) noexcept;
[[nodiscard]] std::string shape_string(const Shape& shape);

/// Rows [begin, end) of a tensor along axis 0.
[[nodiscard]] Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
/// Rows selected by index along axis 0.
[[nodiscard]] Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);

}  // namespace varleak::core
