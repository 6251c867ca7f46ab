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

#ifndef SLIMGRAPH_TAPE_HPP_
#define SLIMGRAPH_TAPE_HPP_

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slimgraph/ops.hpp"
#include "slimgraph/tensor.hpp"

namespace slimgraph {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  int index = -1;
  bool valid() const noexcept { return index >= 0; }
};

using GradientMap = std::map<std::string, Tensor>;

/// Computes input gradients from the output gradient. Entries for inputs whose
/// `needs` flag is false may be left absent.
using BackwardFn = std::function<std::vector<Tensor>(const Tape& tape, const Tensor& grad_out,
                                                     const std::vector<bool>& needs)>;

/// Reverse-mode tape. Values are recorded in execution order; backward()
/// replays the recorded operations in exact reverse order.
///
/// A tape built with `recording = false` keeps values only, which is how the
/// executor runs inference through the same operator wrappers.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value);
  /// Leaf that receives a gradient entry under `key`. Registering the same
  /// key twice accumulates both uses into one entry.
  Var parameter(const std::string& key, Tensor value);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  size_t size() const noexcept { return entries_.size(); }

  /// Gradients of the scalar `loss` for every parameter reachable from it.
  GradientMap backward(Var loss, const Tensor& loss_grad) const;
  GradientMap backward(Var loss) const { return backward(loss, Tensor::scalar(1.0f)); }

 private:
  struct Entry {
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    std::string param_key;
    bool requires_grad = false;
  };

  bool recording_;
  std::vector<Entry> entries_;
};

// Differentiable wrappers over slimgraph::ops. Each records one tape entry.
namespace ad {

Var conv2d(Tape& t, Var x, Var w, Var b, const ops::Conv2dParams& p);  // b may be invalid
Var batchnorm_infer(Tape& t, Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                    float eps);
/// Uses batch statistics; writes them to `batch_mean`/`batch_var` when non-null.
Var batchnorm_train(Tape& t, Var x, Var gamma, Var beta, float eps, Tensor* batch_mean,
                    Tensor* batch_var);
Var silu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var add_scalar(Tape& t, Var a, float value);
Var sum(Tape& t, Var x);
Var channel_scale(Tape& t, Var x, Var scale);
Var concat_channels(Tape& t, std::span<const Var> parts);
std::vector<Var> split_channels(Tape& t, Var x, std::span<const int64_t> sizes);
Var maxpool2d(Tape& t, Var x, int kernel, int stride, int pad);
Var global_avg_pool(Tape& t, Var x);
Var linear(Tape& t, Var x, Var w, Var b);
Var softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels);

}  // namespace ad
}  // namespace slimgraph

#endif  // SLIMGRAPH_TAPE_HPP_
