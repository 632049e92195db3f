// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace perm::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major array of doubles. Every value is finite; construction
// rejects NaN and infinities.
class Tensor {
 public:
  Tensor() : shape_{1}, values_(1, 0.0) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  // Shape [1 x n].
  static Tensor row(std::vector<double> values);
  // Shape [n x 1].
  static Tensor column(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  // Leading dimension for rank-2 tensors, 1 for rank-1.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  // Trailing dimension.
  std::size_t cols() const { return shape_.back(); }

  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double item() const;

  bool operator==(const Tensor& other) const = default;

 private:
  friend class Tape;
  struct Unchecked {};
  Tensor(Shape shape, std::vector<double> values, Unchecked)
      : shape_(std::move(shape)), values_(std::move(values)) {}

  Shape shape_;
  std::vector<double> values_;
};

}  // namespace perm::ad
