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

#include "slimgraph/tape.hpp"

#include "slimgraph/error.hpp"

namespace slimgraph {
namespace {

void accumulate(Tensor& into, Tensor&& g) {
  if (g.empty()) return;
  if (into.empty()) {
    into = std::move(g);
    return;
  }
  if (into.shape() != g.shape()) {
    fail_internal("gradient shape mismatch " + shape_to_string(into.shape()) + " vs " +
                  shape_to_string(g.shape()));
  }
  for (int64_t i = 0; i < into.numel(); ++i) into[i] += g[i];
}

}  // namespace

Var Tape::constant(Tensor value) {
  entries_.push_back(Entry{std::move(value), {}, nullptr, {}, false});
  return Var{static_cast<int>(entries_.size() - 1)};
}

Var Tape::parameter(const std::string& key, Tensor value) {
  entries_.push_back(Entry{std::move(value), {}, nullptr, key, recording_});
  return Var{static_cast<int>(entries_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (recording_) {
    for (Var v : inputs) needs = needs || requires_grad(v);
  }
  Entry e{std::move(value), {}, nullptr, {}, needs};
  if (needs) {
    e.inputs = std::move(inputs);
    e.backward = std::move(backward);
  }
  entries_.push_back(std::move(e));
  return Var{static_cast<int>(entries_.size() - 1)};
}

const Tensor& Tape::value(Var v) const {
  if (v.index < 0 || static_cast<size_t>(v.index) >= entries_.size()) {
    fail_internal("tape: invalid variable " + std::to_string(v.index));
  }
  return entries_[static_cast<size_t>(v.index)].value;
}

bool Tape::requires_grad(Var v) const {
  return v.valid() && entries_.at(static_cast<size_t>(v.index)).requires_grad;
}

GradientMap Tape::backward(Var loss, const Tensor& loss_grad) const {
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) {
    fail_validation("backward: loss must be scalar, got shape " + shape_to_string(lv.shape()));
  }
  if (loss_grad.numel() != 1) fail_validation("backward: loss gradient must be scalar");
  GradientMap result;
  if (!requires_grad(loss)) return result;

  std::vector<Tensor> grads(entries_.size());
  grads[static_cast<size_t>(loss.index)] = Tensor(lv.shape(), loss_grad[0]);
  for (int i = loss.index; i >= 0; --i) {
    Tensor& g = grads[static_cast<size_t>(i)];
    if (g.empty()) continue;
    const Entry& e = entries_[static_cast<size_t>(i)];
    if (!e.param_key.empty()) {
      accumulate(result[e.param_key], std::move(g));
    } else if (e.backward) {
      std::vector<bool> needs(e.inputs.size());
      for (size_t k = 0; k < e.inputs.size(); ++k) needs[k] = requires_grad(e.inputs[k]);
      std::vector<Tensor> in_grads = e.backward(*this, g, needs);
      for (size_t k = 0; k < e.inputs.size() && k < in_grads.size(); ++k) {
        if (needs[k]) accumulate(grads[static_cast<size_t>(e.inputs[k].index)], std::move(in_grads[k]));
      }
    }
    g = Tensor();
  }
  return result;
}

namespace ad {

Var conv2d(Tape& t, Var x, Var w, Var b, const ops::Conv2dParams& p) {
  const Tensor none;
  Tensor y = ops::conv2d(t.value(x), t.value(w), b.valid() ? t.value(b) : none, p);
  std::vector<Var> inputs{x, w};
  if (b.valid()) inputs.push_back(b);
  return t.record(std::move(y), inputs,
                  [x, w, b, p](const Tape& tp, const Tensor& g, const std::vector<bool>& needs) {
                    const bool need_wb = needs[1] || (b.valid() && needs[2]);
                    ops::Conv2dGrads cg = ops::conv2d_backward(tp.value(x), tp.value(w), b.valid(),
                                                               g, p, needs[0], need_wb);
                    std::vector<Tensor> out{std::move(cg.input), std::move(cg.weight)};
                    if (b.valid()) out.push_back(std::move(cg.bias));
                    return out;
                  });
}

Var batchnorm_infer(Tape& t, Var x, Var gamma, Var beta, const Tensor& mean, const Tensor& var,
                    float eps) {
  Tensor y = ops::batchnorm_infer(t.value(x), t.value(gamma), t.value(beta), mean, var, eps);
  return t.record(std::move(y), {x, gamma, beta},
                  [x, gamma, mean, var, eps](const Tape& tp, const Tensor& g,
                                             const std::vector<bool>&) {
                    ops::BatchNormGrads bg =
                        ops::batchnorm_infer_backward(tp.value(x), tp.value(gamma), mean, var, eps, g);
                    return std::vector<Tensor>{std::move(bg.x), std::move(bg.gamma),
                                               std::move(bg.beta)};
                  });
}

Var batchnorm_train(Tape& t, Var x, Var gamma, Var beta, float eps, Tensor* batch_mean,
                    Tensor* batch_var) {
  ops::BatchNormTrainResult r = ops::batchnorm_train(t.value(x), t.value(gamma), t.value(beta), eps);
  if (batch_mean) *batch_mean = r.batch_mean;
  if (batch_var) *batch_var = r.batch_var;
  Tensor mean = std::move(r.batch_mean), var = std::move(r.batch_var);
  return t.record(std::move(r.y), {x, gamma, beta},
                  [x, gamma, mean, var, eps](const Tape& tp, const Tensor& g,
                                             const std::vector<bool>&) {
                    ops::BatchNormGrads bg =
                        ops::batchnorm_train_backward(tp.value(x), tp.value(gamma), mean, var, eps, g);
                    return std::vector<Tensor>{std::move(bg.x), std::move(bg.gamma),
                                               std::move(bg.beta)};
                  });
}

Var silu(Tape& t, Var x) {
  return t.record(ops::silu(t.value(x)), {x},
                  [x](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{ops::silu_backward(tp.value(x), g)};
                  });
}

Var sigmoid(Tape& t, Var x) {
  return t.record(ops::sigmoid(t.value(x)), {x},
                  [x](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{ops::sigmoid_backward(tp.value(x), g)};
                  });
}

Var add(Tape& t, Var a, Var b) {
  return t.record(ops::add(t.value(a), t.value(b)), {a, b},
                  [](const Tape&, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{g, g};
                  });
}

Var mul(Tape& t, Var a, Var b) {
  return t.record(ops::mul(t.value(a), t.value(b)), {a, b},
                  [a, b](const Tape& tp, const Tensor& g, const std::vector<bool>& needs) {
                    std::vector<Tensor> out(2);
                    if (needs[0]) out[0] = ops::mul(g, tp.value(b));
                    if (needs[1]) out[1] = ops::mul(g, tp.value(a));
                    return out;
                  });
}

Var add_scalar(Tape& t, Var a, float value) {
  return t.record(ops::add_scalar(t.value(a), value), {a},
                  [](const Tape&, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{g};
                  });
}

Var sum(Tape& t, Var x) {
  return t.record(ops::sum(t.value(x)), {x},
                  [x](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{Tensor(tp.value(x).shape(), g[0])};
                  });
}

Var channel_scale(Tape& t, Var x, Var scale) {
  return t.record(ops::channel_scale(t.value(x), t.value(scale)), {x, scale},
                  [x, scale](const Tape& tp, const Tensor& g, const std::vector<bool>& needs) {
                    std::vector<Tensor> out(2);
                    if (needs[0]) out[0] = ops::channel_scale(g, tp.value(scale));
                    if (needs[1]) out[1] = ops::channel_scale_backward_scale(tp.value(x), g);
                    return out;
                  });
}

Var concat_channels(Tape& t, std::span<const Var> parts) {
  std::vector<Tensor> values;
  std::vector<int64_t> sizes;
  for (Var v : parts) {
    values.push_back(t.value(v));
    sizes.push_back(t.value(v).dim(1));
  }
  return t.record(ops::concat_channels(values), std::vector<Var>(parts.begin(), parts.end()),
                  [sizes](const Tape&, const Tensor& g, const std::vector<bool>&) {
                    return ops::split_channels(g, sizes);
                  });
}

std::vector<Var> split_channels(Tape& t, Var x, std::span<const int64_t> sizes) {
  std::vector<Tensor> parts = ops::split_channels(t.value(x), sizes);
  std::vector<Var> out;
  for (size_t k = 0; k < parts.size(); ++k) {
    const Shape full = t.value(x).shape();
    std::vector<int64_t> sz(sizes.begin(), sizes.end());
    out.push_back(t.record(std::move(parts[k]), {x},
                           [full, sz, k](const Tape&, const Tensor& g, const std::vector<bool>&) {
                             // Scatter this slice back into a zero tensor of the full shape.
                             std::vector<Tensor> slices;
                             for (size_t j = 0; j < sz.size(); ++j) {
                               if (j == k) {
                                 slices.push_back(g);
                               } else {
                                 Shape s = full;
                                 s[1] = sz[j];
                                 slices.emplace_back(s);
                               }
                             }
                             return std::vector<Tensor>{ops::concat_channels(slices)};
                           }));
  }
  return out;
}

Var maxpool2d(Tape& t, Var x, int kernel, int stride, int pad) {
  return t.record(ops::maxpool2d(t.value(x), kernel, stride, pad), {x},
                  [x, kernel, stride, pad](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{
                        ops::maxpool2d_backward(tp.value(x), kernel, stride, pad, g)};
                  });
}

Var global_avg_pool(Tape& t, Var x) {
  return t.record(ops::global_avg_pool(t.value(x)), {x},
                  [x](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{ops::global_avg_pool_backward(tp.value(x).shape(), g)};
                  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Tensor none;
  Tensor y = ops::linear(t.value(x), t.value(w), b.valid() ? t.value(b) : none);
  std::vector<Var> inputs{x, w};
  if (b.valid()) inputs.push_back(b);
  return t.record(std::move(y), inputs,
                  [x, w, b](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    ops::LinearGrads lg = ops::linear_backward(tp.value(x), tp.value(w), b.valid(), g);
                    std::vector<Tensor> out{std::move(lg.x), std::move(lg.weight)};
                    if (b.valid()) out.push_back(std::move(lg.bias));
                    return out;
                  });
}

Var softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels) {
  const float loss = ops::softmax_cross_entropy(t.value(logits), labels);
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, labels = std::move(labels)](const Tape& tp, const Tensor& g,
                                                       const std::vector<bool>&) {
                    Tensor grad = ops::softmax_cross_entropy_backward(tp.value(logits), labels);
                    for (int64_t i = 0; i < grad.numel(); ++i) grad[i] *= g[0];
                    return std::vector<Tensor>{std::move(grad)};
                  });
}

}  // namespace ad
}  // namespace slimgraph
