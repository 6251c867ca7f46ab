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

#ifndef SLIMGRAPH_TOYTASK_HPP_
#define SLIMGRAPH_TOYTASK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "slimgraph/tensor.hpp"

namespace slimgraph {

struct ToyTaskConfig {
  int n_classes = 3;
  int n_train = 96;
  int n_val = 96;
  int image_size = 64;
  float noise = 0.05f;
  /// Shape half-size range as fractions of image_size.
  float min_radius = 0.25f;
  float max_radius = 0.3f;
  /// Largest centre displacement from the image centre, as a fraction of
  /// image_size. Clipped so the shape never leaves the frame.
  float max_offset = 0.1f;
  /// Per-channel shape intensity range.
  float min_intensity = 1.0f;
  float max_intensity = 1.0f;
  uint64_t seed = 1;
};

/// Procedural shape classification: one shape per image (disc, cross, bar,
/// ring, square outline, triangle; class k draws shape k) at a random
/// position, size and colour over uniform noise. Labels cycle through the
/// classes, so every split is balanced within one sample.
class ToyTask {
 public:
  explicit ToyTask(const ToyTaskConfig& config);

  static constexpr int kMaxClasses = 6;
  static std::string shape_name(int label);

  const ToyTaskConfig& config() const noexcept { return config_; }
  int n_classes() const noexcept { return config_.n_classes; }
  const Tensor& train_images() const noexcept { return train_images_; }
  const std::vector<int>& train_labels() const noexcept { return train_labels_; }
  const Tensor& val_images() const noexcept { return val_images_; }
  const std::vector<int>& val_labels() const noexcept { return val_labels_; }

  /// Rows `indices` of `images` as one (B, 3, S, S) batch.
  static Tensor gather(const Tensor& images, const std::vector<int64_t>& indices);

 private:
  ToyTaskConfig config_;
  Tensor train_images_;
  std::vector<int> train_labels_;
  Tensor val_images_;
  std::vector<int> val_labels_;
};

/// One sample, a pure function of (seed, stream, index).
void render_toy_sample(const ToyTaskConfig& config, uint64_t stream, int64_t index, int label,
                       float* out);

}  // namespace slimgraph

#endif  // SLIMGRAPH_TOYTASK_HPP_
