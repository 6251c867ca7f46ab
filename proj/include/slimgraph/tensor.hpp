/*
 * Copyright (c) 2026 The SlimGraph Authors. All Rights Reserved
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SLIMGRAPH_TENSOR_HPP_
#define SLIMGRAPH_TENSOR_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace slimgraph {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 tensor. 4-D activations use (N, C, H, W).
///
/// A default-constructed tensor is "absent" (rank 0, no data); every other
/// tensor has all extents >= 1 and exactly numel() elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value) { return Tensor(Shape{1}, value); }

  bool empty() const noexcept { return shape_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  size_t rank() const noexcept { return shape_.size(); }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const float* ptr() const noexcept { return data_.data(); }
  float* ptr() noexcept { return data_.data(); }
  const std::vector<float>& vec() const noexcept { return data_; }

  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

  /// Element of a 4-D tensor.
  float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  /// Same data viewed under a different shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Bitwise equality of shape and data.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Largest |a - b| / max(|b|, floor) over all elements; shapes must match.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace slimgraph

#endif  // SLIMGRAPH_TENSOR_HPP_
