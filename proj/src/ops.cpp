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

#include "slimgraph/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "slimgraph/error.hpp"

namespace slimgraph::ops {
namespace {

void require_rank(const Tensor& t, size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail_validation(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                    shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail_validation(std::string(what) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                    shape_to_string(b.shape()));
  }
}

void require_channel_vector(const Tensor& v, int64_t channels, const char* what) {
  if (v.rank() != 1 || v.dim(0) != channels) {
    fail_validation(std::string(what) + ": expected per-channel length " + std::to_string(channels) +
                    ", got shape " + shape_to_string(v.empty() ? Shape{} : v.shape()));
  }
}

// y += a * x over n contiguous elements.
inline void axpy(float* y, float a, const float* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Fixed 8-lane reduction; the combination order is part of the contract.
inline float dot(const float* a, const float* b, int64_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Four axpy updates sharing one source row.
inline void axpy4(float* const y[4], const float a[4], const float* x, int64_t n) {
  float* __restrict y0 = y[0];
  float* __restrict y1 = y[1];
  float* __restrict y2 = y[2];
  float* __restrict y3 = y[3];
  for (int64_t i = 0; i < n; ++i) {
    const float v = x[i];
    y0[i] += a[0] * v;
    y1[i] += a[1] * v;
    y2[i] += a[2] * v;
    y3[i] += a[3] * v;
  }
}

// y += a0*x0, then a1*x1, a2*x2, a3*x3, in that order per element.
inline void gather4(float* __restrict y, const float a[4], const float* const x[4], int64_t n) {
  const float* x0 = x[0];
  const float* x1 = x[1];
  const float* x2 = x[2];
  const float* x3 = x[3];
  for (int64_t i = 0; i < n; ++i) {
    float v = y[i];
    v += a[0] * x0[i];
    v += a[1] * x1[i];
    v += a[2] * x2[i];
    v += a[3] * x3[i];
    y[i] = v;
  }
}

inline float lane_sum(const float* a, int64_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

struct ConvGeometry {
  int64_t n, cin, h, w, cout, kh, kw, ho, wo;
  int64_t k() const { return cin * kh * kw; }
  int64_t p() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, const Conv2dParams& p) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (p.stride_h < 1 || p.stride_w < 1) fail_validation("conv2d: stride must be >= 1");
  if (p.pad_h < 0 || p.pad_w < 0) fail_validation("conv2d: padding must be >= 0");
  if (input.dim(1) != weight.dim(1)) {
    fail_validation("conv2d: input channel dimension (Cin) " + std::to_string(input.dim(1)) +
                    " does not match weight Cin " + std::to_string(weight.dim(1)));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.ho = conv_out_extent(g.h, g.kh, p.stride_h, p.pad_h, "height");
  g.wo = conv_out_extent(g.w, g.kw, p.stride_w, p.pad_w, "width");
  return g;
}

bool is_pointwise(const ConvGeometry& g, const Conv2dParams& p) {
  return g.kh == 1 && g.kw == 1 && p.stride_h == 1 && p.stride_w == 1 && p.pad_h == 0 &&
         p.pad_w == 0;
}

// Unfolds one sample into col[(ci, kh, kw)][(oh, ow)], zero-filling padding.
void im2col(const float* in, const ConvGeometry& g, const Conv2dParams& p, float* col) {
  const int64_t P = g.p();
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    const float* plane = in + ci * g.h * g.w;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        float* row = col + ((ci * g.kh + ky) * g.kw + kx) * P;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * p.stride_h - p.pad_h + ky;
          float* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0f);
            continue;
          }
          const float* src = plane + iy * g.w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * p.stride_w - p.pad_w + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, const Conv2dParams& p, float* in) {
  const int64_t P = g.p();
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    float* plane = in + ci * g.h * g.w;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const float* row = col + ((ci * g.kh + ky) * g.kw + kx) * P;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * p.stride_h - p.pad_h + ky;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = plane + iy * g.w;
          const float* src = row + oy * g.wo;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * p.stride_w - p.pad_w + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

int64_t conv_out_extent(int64_t in, int64_t kernel, int stride, int pad, const char* axis) {
  const int64_t span = in + 2 * static_cast<int64_t>(pad) - kernel;
  if (span < 0) {
    fail_validation(std::string("conv/pool output ") + axis + " < 1 (input " + std::to_string(in) +
                    ", kernel " + std::to_string(kernel) + ", pad " + std::to_string(pad) + ")");
  }
  return span / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const Conv2dParams& p) {
  const ConvGeometry g = conv_geometry(input, weight, p);
  if (!bias.empty()) require_channel_vector(bias, g.cout, "conv2d bias");
  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  const int64_t K = g.k(), P = g.p();
  const bool pointwise = is_pointwise(g, p);
  std::vector<float> col(pointwise ? 0 : static_cast<size_t>(K * P));
  const float* wp = weight.ptr();
  for (int64_t n = 0; n < g.n; ++n) {
    const float* in = input.ptr() + n * g.cin * g.h * g.w;
    const float* cols = in;
    if (!pointwise) {
      im2col(in, g, p, col.data());
      cols = col.data();
    }
    float* o = out.ptr() + n * g.cout * P;
    for (int64_t co = 0; co < g.cout; ++co) {
      float* orow = o + co * P;
      std::fill(orow, orow + P, bias.empty() ? 0.0f : bias[co]);
    }
    int64_t co = 0;
    for (; co + 4 <= g.cout; co += 4) {
      float* orows[4] = {o + co * P, o + (co + 1) * P, o + (co + 2) * P, o + (co + 3) * P};
      for (int64_t k = 0; k < K; ++k) {
        const float w4[4] = {wp[co * K + k], wp[(co + 1) * K + k], wp[(co + 2) * K + k],
                             wp[(co + 3) * K + k]};
        axpy4(orows, w4, cols + k * P, P);
      }
    }
    for (; co < g.cout; ++co) {
      const float* wrow = wp + co * K;
      for (int64_t k = 0; k < K; ++k) axpy(o + co * P, wrow[k], cols + k * P, P);
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_out, const Conv2dParams& p, bool need_input,
                            bool need_weight) {
  const ConvGeometry g = conv_geometry(input, weight, p);
  if (grad_out.shape() != Shape{g.n, g.cout, g.ho, g.wo}) {
    fail_validation("conv2d_backward: grad shape " + shape_to_string(grad_out.shape()));
  }
  const int64_t K = g.k(), P = g.p();
  const bool pointwise = is_pointwise(g, p);
  Conv2dGrads grads;
  if (need_input) grads.input = Tensor(input.shape());
  if (need_weight) grads.weight = Tensor(weight.shape());
  if (need_weight && has_bias) grads.bias = Tensor(Shape{g.cout});
  std::vector<float> col(pointwise ? 0 : static_cast<size_t>(K * P));
  std::vector<float> gcol(need_input && !pointwise ? static_cast<size_t>(K * P) : 0);
  std::vector<float> colT(need_weight ? static_cast<size_t>(K * P) : 0);
  const float* wp = weight.ptr();
  for (int64_t n = 0; n < g.n; ++n) {
    const float* in = input.ptr() + n * g.cin * g.h * g.w;
    const float* go = grad_out.ptr() + n * g.cout * P;
    if (need_weight) {
      const float* cols = in;
      if (!pointwise) {
        im2col(in, g, p, col.data());
        cols = col.data();
      }
      // colT[p][k]: each output position contributes one K-length row update,
      // so every weight-gradient element accumulates positions in order.
      for (int64_t k = 0; k < K; ++k) {
        for (int64_t q = 0; q < P; ++q) colT[static_cast<size_t>(q * K + k)] = cols[k * P + q];
      }
      float* gw = grads.weight.ptr();
      int64_t co = 0;
      for (; co + 4 <= g.cout; co += 4) {
        float* gwrows[4] = {gw + co * K, gw + (co + 1) * K, gw + (co + 2) * K, gw + (co + 3) * K};
        for (int64_t q = 0; q < P; ++q) {
          const float a4[4] = {go[co * P + q], go[(co + 1) * P + q], go[(co + 2) * P + q],
                               go[(co + 3) * P + q]};
          axpy4(gwrows, a4, colT.data() + q * K, K);
        }
      }
      for (; co < g.cout; ++co) {
        for (int64_t q = 0; q < P; ++q) axpy(gw + co * K, go[co * P + q], colT.data() + q * K, K);
      }
      if (has_bias) {
        for (co = 0; co < g.cout; ++co) grads.bias[co] += lane_sum(go + co * P, P);
      }
    }
    if (need_input) {
      float* gi = grads.input.ptr() + n * g.cin * g.h * g.w;
      float* target = pointwise ? gi : gcol.data();
      if (!pointwise) std::fill(gcol.begin(), gcol.end(), 0.0f);
      int64_t co = 0;
      for (; co + 4 <= g.cout; co += 4) {
        const float* gorows[4] = {go + co * P, go + (co + 1) * P, go + (co + 2) * P,
                                  go + (co + 3) * P};
        for (int64_t k = 0; k < K; ++k) {
          const float w4[4] = {wp[co * K + k], wp[(co + 1) * K + k], wp[(co + 2) * K + k],
                               wp[(co + 3) * K + k]};
          gather4(target + k * P, w4, gorows, P);
        }
      }
      for (; co < g.cout; ++co) {
        const float* gorow = go + co * P;
        const float* wrow = wp + co * K;
        for (int64_t k = 0; k < K; ++k) axpy(target + k * P, wrow[k], gorow, P);
      }
      if (!pointwise) col2im_add(gcol.data(), g, p, gi);
    }
  }
  return grads;
}

Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& mean, const Tensor& var, float eps) {
  require_rank(x, 4, "batchnorm input");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require_channel_vector(gamma, C, "batchnorm gamma");
  require_channel_vector(beta, C, "batchnorm beta");
  require_channel_vector(mean, C, "batchnorm running_mean");
  require_channel_vector(var, C, "batchnorm running_var");
  Tensor y(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    if (var[c] < 0.0f) fail_validation("batchnorm: negative variance at channel " + std::to_string(c));
  }
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const float inv = 1.0f / std::sqrt(var[c] + eps);
      const float a = gamma[c] * inv;
      const float m = mean[c], b = beta[c];
      const float* src = x.ptr() + (n * C + c) * HW;
      float* dst = y.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = a * (src[i] - m) + b;
    }
  }
  return y;
}

BatchNormGrads batchnorm_infer_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                                        const Tensor& var, float eps, const Tensor& grad_out) {
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  BatchNormGrads g{Tensor(x.shape()), Tensor(Shape{C}), Tensor(Shape{C})};
  for (int64_t c = 0; c < C; ++c) {
    const float inv = 1.0f / std::sqrt(var[c] + eps);
    const float a = gamma[c] * inv;
    float sg = 0.0f, sgx = 0.0f;
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      const float* go = grad_out.ptr() + (n * C + c) * HW;
      float* gx = g.x.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        gx[i] = a * go[i];
        sg += go[i];
        sgx += go[i] * (src[i] - mean[c]) * inv;
      }
    }
    g.gamma[c] = sgx;
    g.beta[c] = sg;
  }
  return g;
}

BatchNormTrainResult batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                     float eps) {
  require_rank(x, 4, "batchnorm input");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  require_channel_vector(gamma, C, "batchnorm gamma");
  require_channel_vector(beta, C, "batchnorm beta");
  BatchNormTrainResult r{Tensor(x.shape()), Tensor(Shape{C}), Tensor(Shape{C})};
  const double M = static_cast<double>(N * HW);
  for (int64_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) s += src[i];
    }
    const double mu = s / M;
    double sq = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const double d = src[i] - mu;
        sq += d * d;
      }
    }
    const float mean = static_cast<float>(mu);
    const float var = static_cast<float>(sq / M);
    r.batch_mean[c] = mean;
    r.batch_var[c] = var;
    const float a = gamma[c] / std::sqrt(var + eps);
    const float b = beta[c];
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      float* dst = r.y.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) dst[i] = a * (src[i] - mean) + b;
    }
  }
  return r;
}

BatchNormGrads batchnorm_train_backward(const Tensor& x, const Tensor& gamma,
                                        const Tensor& batch_mean, const Tensor& batch_var,
                                        float eps, const Tensor& grad_out) {
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  BatchNormGrads g{Tensor(x.shape()), Tensor(Shape{C}), Tensor(Shape{C})};
  const double M = static_cast<double>(N * HW);
  for (int64_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(batch_var[c]) + eps);
    const double mu = batch_mean[c];
    double sg = 0.0, sgx = 0.0;
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      const float* go = grad_out.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        sg += go[i];
        sgx += go[i] * (src[i] - mu) * inv;
      }
    }
    g.gamma[c] = static_cast<float>(sgx);
    g.beta[c] = static_cast<float>(sg);
    const double scale = gamma[c] * inv / M;
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + c) * HW;
      const float* go = grad_out.ptr() + (n * C + c) * HW;
      float* gx = g.x.ptr() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        const double xhat = (src[i] - mu) * inv;
        gx[i] = static_cast<float>(scale * (M * go[i] - sg - xhat * sgx));
      }
    }
  }
  return g;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float s = sigmoid(x[i]);
    g[i] = grad_out[i] * s * (1.0f - s);
  }
  return g;
}

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float s = sigmoid(x[i]);
    g[i] = grad_out[i] * s * (1.0f + x[i] * (1.0f - s));
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
  return y;
}

Tensor add_scalar(const Tensor& a, float value) {
  Tensor y(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + value;
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
  return Tensor::scalar(static_cast<float>(s));
}

Tensor channel_scale(const Tensor& x, const Tensor& scale) {
  if (x.rank() < 2) fail_validation("channel_scale: input rank < 2");
  const int64_t N = x.dim(0), C = x.dim(1), inner = x.numel() / (N * C);
  require_channel_vector(scale, C, "channel_scale");
  Tensor y(x.shape());
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const float s = scale[c];
      const float* src = x.ptr() + (n * C + c) * inner;
      float* dst = y.ptr() + (n * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] * s;
    }
  }
  return y;
}

Tensor channel_scale_backward_scale(const Tensor& x, const Tensor& grad_out) {
  const int64_t N = x.dim(0), C = x.dim(1), inner = x.numel() / (N * C);
  Tensor g(Shape{C});
  for (int64_t c = 0; c < C; ++c) {
    float acc = 0.0f;
    for (int64_t n = 0; n < N; ++n) {
      acc += dot(x.ptr() + (n * C + c) * inner, grad_out.ptr() + (n * C + c) * inner, inner);
    }
    g[c] = acc;
  }
  return g;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) fail_validation("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.size() < 2) fail_validation("concat_channels: rank < 2");
  int64_t channels = 0;
  for (const Tensor& t : parts) {
    Shape a = t.shape(), b = first;
    if (a.size() != b.size()) fail_validation("concat_channels: rank mismatch");
    a[1] = b[1] = 0;
    if (a != b) {
      fail_validation("concat_channels: non-channel dims differ: " + shape_to_string(t.shape()) +
                      " vs " + shape_to_string(first));
    }
    channels += t.dim(1);
  }
  Shape out_shape = first;
  out_shape[1] = channels;
  Tensor y(out_shape);
  const int64_t N = first[0];
  const int64_t inner = shape_numel(first) / (first[0] * first[1]);
  float* dst = y.ptr();
  for (int64_t n = 0; n < N; ++n) {
    for (const Tensor& t : parts) {
      const int64_t block = t.dim(1) * inner;
      const float* src = t.ptr() + n * block;
      dst = std::copy(src, src + block, dst);
    }
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& x, std::span<const int64_t> sizes) {
  if (x.rank() < 2) fail_validation("split_channels: rank < 2");
  int64_t total = 0;
  for (int64_t s : sizes) {
    if (s < 1) fail_validation("split_channels: sizes must be positive");
    total += s;
  }
  if (total != x.dim(1)) {
    fail_validation("split_channels: sizes sum to " + std::to_string(total) + " but C = " +
                    std::to_string(x.dim(1)));
  }
  const int64_t N = x.dim(0), C = x.dim(1), inner = x.numel() / (N * C);
  std::vector<Tensor> out;
  out.reserve(sizes.size());
  int64_t offset = 0;
  for (int64_t s : sizes) {
    Shape shape = x.shape();
    shape[1] = s;
    Tensor part(shape);
    for (int64_t n = 0; n < N; ++n) {
      const float* src = x.ptr() + (n * C + offset) * inner;
      std::copy(src, src + s * inner, part.ptr() + n * s * inner);
    }
    out.push_back(std::move(part));
    offset += s;
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int pad) {
  require_rank(x, 4, "maxpool2d input");
  if (kernel < 1 || stride < 1 || pad < 0) fail_validation("maxpool2d: invalid kernel/stride/pad");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = conv_out_extent(H, kernel, stride, pad, "height");
  const int64_t Wo = conv_out_extent(W, kernel, stride, pad, "width");
  Tensor y(Shape{N, C, Ho, Wo});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* src = x.ptr() + nc * H * W;
    float* dst = y.ptr() + nc * Ho * Wo;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      for (int64_t ox = 0; ox < Wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            best = std::max(best, src[iy * W + ix]);
          }
        }
        dst[oy * Wo + ox] = best;
      }
    }
  }
  return y;
}

Tensor maxpool2d_backward(const Tensor& x, int kernel, int stride, int pad, const Tensor& grad_out) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  Tensor g(x.shape());
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* src = x.ptr() + nc * H * W;
    const float* go = grad_out.ptr() + nc * Ho * Wo;
    float* gi = g.ptr() + nc * H * W;
    for (int64_t oy = 0; oy < Ho; ++oy) {
      for (int64_t ox = 0; ox < Wo; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        int64_t arg = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            if (src[iy * W + ix] > best) {
              best = src[iy * W + ix];
              arg = iy * W + ix;
            }
          }
        }
        if (arg >= 0) gi[arg] += go[oy * Wo + ox];
      }
    }
  }
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool input");
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor y(Shape{N, C});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    y[nc] = lane_sum(x.ptr() + nc * HW, HW) / static_cast<float>(HW);
  }
  return y;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  Tensor g(input_shape);
  const int64_t NC = input_shape[0] * input_shape[1], HW = input_shape[2] * input_shape[3];
  for (int64_t nc = 0; nc < NC; ++nc) {
    const float v = grad_out[nc] / static_cast<float>(HW);
    std::fill(g.ptr() + nc * HW, g.ptr() + (nc + 1) * HW, v);
  }
  return g;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  if (x.dim(1) != weight.dim(1)) {
    fail_validation("linear: input features " + std::to_string(x.dim(1)) +
                    " do not match weight in-features " + std::to_string(weight.dim(1)));
  }
  const int64_t N = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (!bias.empty()) require_channel_vector(bias, out, "linear bias");
  Tensor y(Shape{N, out});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t o = 0; o < out; ++o) {
      float acc = bias.empty() ? 0.0f : bias[o];
      const float* xr = x.ptr() + n * in;
      const float* wr = weight.ptr() + o * in;
      for (int64_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      y[n * out + o] = acc;
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, bool has_bias,
                            const Tensor& grad_out) {
  const int64_t N = x.dim(0), in = x.dim(1), out = weight.dim(0);
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor()};
  if (has_bias) g.bias = Tensor(Shape{out});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t o = 0; o < out; ++o) {
      const float go = grad_out[n * out + o];
      for (int64_t i = 0; i < in; ++i) {
        g.x[n * in + i] += go * weight[o * in + i];
        g.weight[o * in + i] += go * x[n * in + i];
      }
      if (has_bias) g.bias[o] += go;
    }
  }
  return g;
}

float softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != N) fail_validation("softmax_cross_entropy: label count");
  double total = 0.0;
  for (int64_t n = 0; n < N; ++n) {
    const float* z = logits.ptr() + n * K;
    const int label = labels[static_cast<size_t>(n)];
    if (label < 0 || label >= K) fail_validation("softmax_cross_entropy: label out of range");
    const float zmax = *std::max_element(z, z + K);
    double s = 0.0;
    for (int64_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(z[k] - zmax));
    total += std::log(s) + zmax - z[label];
  }
  return static_cast<float>(total / static_cast<double>(N));
}

Tensor softmax_cross_entropy_backward(const Tensor& logits, std::span<const int> labels) {
  const int64_t N = logits.dim(0), K = logits.dim(1);
  Tensor g(logits.shape());
  for (int64_t n = 0; n < N; ++n) {
    const float* z = logits.ptr() + n * K;
    const float zmax = *std::max_element(z, z + K);
    double s = 0.0;
    for (int64_t k = 0; k < K; ++k) s += std::exp(static_cast<double>(z[k] - zmax));
    for (int64_t k = 0; k < K; ++k) {
      double p = std::exp(static_cast<double>(z[k] - zmax)) / s;
      if (k == labels[static_cast<size_t>(n)]) p -= 1.0;
      g[n * K + k] = static_cast<float>(p / static_cast<double>(N));
    }
  }
  return g;
}

}  // namespace slimgraph::ops
