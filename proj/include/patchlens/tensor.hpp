#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchlens {

using Shape = std::vector<std::size_t>;

/// Raised when tensor extents do not fit an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float32 array. Rank 0 holds a single scalar.
///
/// Tensors are plain values: copying copies the buffer. Once handed to a
/// model or cache they are only read through const references, which makes
/// them safe to share across concurrent forward passes.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float value);
  /// Convenience for tests and fixtures: `Tensor::of({2, 2}, {1, 2, 3, 4})`.
  static Tensor of(std::initializer_list<std::size_t> shape, std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * shape_.back() + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * shape_.back() + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const float* ptr(std::size_t i, std::size_t j, std::size_t k) const {
    return data_.data() + (i * shape_[1] + j) * shape_[2] + k;
  }

  /// Contiguous slice along axis 0 (a matrix row, a head's sub-matrix, ...).
  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;

  /// Same buffer, new extents; element count must match.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Largest absolute elementwise difference; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace patchlens
