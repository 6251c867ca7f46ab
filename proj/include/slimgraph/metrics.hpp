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

#ifndef SLIMGRAPH_METRICS_HPP_
#define SLIMGRAPH_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slimgraph/graph.hpp"

namespace slimgraph {

/// Trainable weights: conv and linear weight + bias, batchnorm gamma + beta,
/// scale vectors. Running statistics are excluded.
int64_t count_params(const Graph& graph);
bool is_trainable_param(const std::string& name);

// FLOP convention: one multiply-accumulate is 2 FLOPs.
//
//   conv        2*Cout*Cin*Kh*Kw*Hout*Wout + Cout*Hout*Wout (bias)
//   linear      2*out*in + out
//   batchnorm   2 per output element
//   silu        4 per output element
//   sigmoid     4 per output element
//   add         1 per output element and extra operand
//   scale       1 per output element
//   modulate    6 per output element
//   fakequant   4 per output element
//   maxpool     1 per output element
//   global pool 1 per input element
//   input, output, concat, split: 0
// Counts cover the whole batch of the evaluated input shape.
constexpr const char* kFlopConvention = "FLOPs = 2 x multiply-accumulates";

/// Per-element cost of channel-wise kinds (0 for conv, linear, and
/// structural nodes).
int64_t elementwise_ops(const Node& node);
int64_t node_flops(const Graph& graph, const Node& node, const ShapeMap& shapes);
int64_t count_flops(const Graph& graph, const Shape& input_shape);
inline int64_t count_flops(const Graph& graph) { return count_flops(graph, graph.input_shape()); }

struct MemoryEstimate {
  int64_t weight_bytes = 0;
  /// Serialized container size; engine - weight is the fixed overhead.
  int64_t engine_bytes = 0;
  /// Peak bytes of simultaneously live activations over the insertion-order
  /// schedule. A value is live from its producer to its last consumer;
  /// graph outputs stay live to the end.
  int64_t scratch_bytes = 0;
};

MemoryEstimate estimate_memory(const Graph& graph, int precision_bits);

struct CompressionReport {
  std::string model;
  std::string stage;  // dense | pruned
  int precision_bits = 32;
  double channel_fraction = 0.0;
  int64_t dense_params = 0;
  int64_t params = 0;
  int64_t flops = 0;
  Shape flop_input;
  int64_t weight_bytes = 0;
  int64_t engine_bytes = 0;
  std::optional<double> accuracy;
};

CompressionReport make_report(const Graph& graph, const std::string& stage, int precision_bits,
                              double channel_fraction, int64_t dense_params,
                              std::optional<double> accuracy = std::nullopt);

struct ReportTables {
  std::string csv;
  std::string text;
};

/// Both renderings start with a header naming the FLOP convention and input
/// size; the ratio column is achieved_ratio(dense_params, params).
ReportTables emit_report(const std::vector<CompressionReport>& reports);

}  // namespace slimgraph

#endif  // SLIMGRAPH_METRICS_HPP_
