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

#ifndef SLIMGRAPH_OPS_HPP_
#define SLIMGRAPH_OPS_HPP_

#include <span>
#include <vector>

#include "slimgraph/tensor.hpp"

// Pure forward operators and their gradient kernels. All functions are
// deterministic: accumulation orders are fixed and independent of data.
namespace slimgraph::ops {

struct Conv2dParams {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

/// Output spatial extent; throws if it would be < 1.
int64_t conv_out_extent(int64_t in, int64_t kernel, int stride, int pad, const char* axis);

/// Cross-correlation. `bias` may be an absent tensor. Each output element is
/// bias + sum over (Cin, Kh, Kw) in that nesting order.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const Conv2dParams& p);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_out, const Conv2dParams& p, bool need_input,
                            bool need_weight);

Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& mean, const Tensor& var, float eps);

struct BatchNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};
BatchNormGrads batchnorm_infer_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                                        const Tensor& var, float eps, const Tensor& grad_out);

/// Training-mode normalisation with batch statistics over (N, H, W).
struct BatchNormTrainResult {
  Tensor y;
  Tensor batch_mean;
  Tensor batch_var;  // biased
};
BatchNormTrainResult batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                     float eps);
BatchNormGrads batchnorm_train_backward(const Tensor& x, const Tensor& gamma,
                                        const Tensor& batch_mean, const Tensor& batch_var,
                                        float eps, const Tensor& grad_out);

float sigmoid(float x);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out);
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float value);
Tensor sum(const Tensor& x);  // shape {1}

/// y[n,c,...] = x[n,c,...] * s[c]
Tensor channel_scale(const Tensor& x, const Tensor& scale);
Tensor channel_scale_backward_scale(const Tensor& x, const Tensor& grad_out);

Tensor concat_channels(std::span<const Tensor> parts);
std::vector<Tensor> split_channels(const Tensor& x, std::span<const int64_t> sizes);

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int pad);
Tensor maxpool2d_backward(const Tensor& x, int kernel, int stride, int pad, const Tensor& grad_out);

/// (N, C, H, W) -> (N, C)
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

/// x (N, in), weight (out, in), bias (out) or absent -> (N, out)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
struct LinearGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& weight, bool has_bias,
                            const Tensor& grad_out);

/// Mean softmax cross-entropy over the batch. logits (N, K).
float softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax_cross_entropy_backward(const Tensor& logits, std::span<const int> labels);

}  // namespace slimgraph::ops

#endif  // SLIMGRAPH_OPS_HPP_
