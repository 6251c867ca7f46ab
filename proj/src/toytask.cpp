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

#include "slimgraph/toytask.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "slimgraph/error.hpp"
#include "slimgraph/rng.hpp"

namespace slimgraph {
namespace {

constexpr uint64_t kTrainStream = 1;
constexpr uint64_t kValStream = 2;

// Whether pixel (x, y) lies inside shape `label` centred at (cx, cy) with
// half-size r.
bool inside(int label, double x, double y, double cx, double cy, double r, bool vertical) {
  const double dx = x - cx, dy = y - cy;
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (label) {
    case 0:  // disc
      return dx * dx + dy * dy <= r * r;
    case 1: {  // cross
      const double t = r / 3.0;
      return (ax <= t && ay <= r) || (ay <= t && ax <= r);
    }
    case 2:  // bar
      return vertical ? (ax <= r / 3.0 && ay <= r) : (ay <= r / 3.0 && ax <= r);
    case 3: {  // ring
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= r && d >= 0.6 * r;
    }
    case 4:  // square outline
      return std::max(ax, ay) <= r && std::max(ax, ay) >= 0.65 * r;
    default:  // triangle pointing up
      return dy <= r && dy >= -r && ax <= (dy + r) / 2.0;
  }
}

}  // namespace

std::string ToyTask::shape_name(int label) {
  static const char* names[kMaxClasses] = {"disc", "cross", "bar", "ring", "square", "triangle"};
  return names[label % kMaxClasses];
}

void render_toy_sample(const ToyTaskConfig& config, uint64_t stream, int64_t index, int label,
                       float* out) {
  Rng rng(derive_seed(derive_seed(config.seed, stream), static_cast<uint64_t>(index)));
  const int S = config.image_size;
  const double r = rng.uniform(config.min_radius * S, config.max_radius * S);
  // Centre jitter, clipped so the shape stays inside the image.
  const double reach = std::min(static_cast<double>(config.max_offset) * S, S / 2.0 - r);
  const double cx = S / 2.0 + rng.uniform(static_cast<float>(-reach), static_cast<float>(reach));
  const double cy = S / 2.0 + rng.uniform(static_cast<float>(-reach), static_cast<float>(reach));
  const bool vertical = rng.below(2) == 1;
  float colour[3];
  for (float& c : colour) c = rng.uniform(config.min_intensity, config.max_intensity);
  for (int c = 0; c < 3; ++c) {
    float* plane = out + static_cast<int64_t>(c) * S * S;
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        float v = rng.uniform(-config.noise, config.noise);
        if (inside(label, x + 0.5, y + 0.5, cx, cy, r, vertical)) v += colour[c];
        plane[y * S + x] = v;
      }
    }
  }
}

ToyTask::ToyTask(const ToyTaskConfig& config) : config_(config) {
  if (config.n_classes < 2 || config.n_classes > kMaxClasses) {
    fail_validation("toy task: n_classes must be in [2, " + std::to_string(kMaxClasses) + "]");
  }
  if (config.n_train < config.n_classes || config.n_val < config.n_classes) {
    fail_validation("toy task: every split needs at least one sample per class");
  }
  if (config.image_size < 8) fail_validation("toy task: image_size must be >= 8");
  const int64_t S = config.image_size;
  auto build = [&](int n, uint64_t stream, Tensor& images, std::vector<int>& labels) {
    images = Tensor(Shape{n, 3, S, S});
    labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      labels[static_cast<size_t>(i)] = i % config.n_classes;
      render_toy_sample(config, stream, i, labels[static_cast<size_t>(i)], images.ptr() + i * 3 * S * S);
    }
  };
  build(config.n_train, kTrainStream, train_images_, train_labels_);
  build(config.n_val, kValStream, val_images_, val_labels_);
}

Tensor ToyTask::gather(const Tensor& images, const std::vector<int64_t>& indices) {
  Shape shape = images.shape();
  const int64_t row = images.numel() / shape[0];
  shape[0] = static_cast<int64_t>(indices.size());
  Tensor out(shape);
  for (size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(out.ptr() + static_cast<int64_t>(i) * row, images.ptr() + indices[i] * row,
                sizeof(float) * static_cast<size_t>(row));
  }
  return out;
}

}  // namespace slimgraph
