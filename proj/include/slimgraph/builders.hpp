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

#ifndef SLIMGRAPH_BUILDERS_HPP_
#define SLIMGRAPH_BUILDERS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "slimgraph/graph.hpp"
#include "slimgraph/rng.hpp"

namespace slimgraph {

/// Appends detection-backbone modules to a graph under construction.
///
/// Every method takes the producing port and explicit channel counts and
/// returns the port of the module output. Node ids are `prefix.<part>`.
/// Conv and linear weights (and biases) are drawn uniformly from
/// +-sqrt(1 / fan_in); batchnorm starts at identity statistics.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, Shape input_shape, uint64_t seed);

  PortRef input() const { return PortRef{"input", 0}; }

  PortRef conv(const std::string& id, PortRef x, int64_t cin, int64_t cout, int k, int stride,
               int padding);
  /// conv -> batchnorm -> SiLU, padding k/2.
  PortRef conv_block(const std::string& prefix, PortRef x, int64_t cin, int64_t cout, int k,
                     int stride);
  PortRef bottleneck(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                     int64_t hidden, bool shortcut);
  PortRef c3k2(const std::string& prefix, PortRef x, int64_t cin, int64_t cout, int n_bottlenecks,
               bool shortcut);
  /// Channel-gating stand-in for PSA/ABlock: x + conv1x1(scale(x)).
  PortRef attention_stub(const std::string& prefix, PortRef x, int64_t c);
  PortRef c2psa(const std::string& prefix, PortRef x, int64_t cin, int64_t cout, int n_blocks);
  PortRef sppf(const std::string& prefix, PortRef x, int64_t cin, int64_t cout, int pool_k);
  PortRef spab(const std::string& prefix, PortRef x, int64_t c);
  PortRef a2c2f(const std::string& prefix, PortRef x, int64_t cin, int64_t cout, int n_blocks,
                bool residual);
  /// One (4 + n_classes)-channel map per scale; every node is protected.
  std::vector<PortRef> detect_head(const std::string& prefix, const std::vector<PortRef>& xs,
                                   const std::vector<int64_t>& cins, int n_classes);
  /// Global average pool + linear classifier used for desk-scale training.
  PortRef classifier(const std::string& prefix, PortRef x, int64_t cin, int n_classes);

  void output(const std::string& id, PortRef x);
  Graph& graph() noexcept { return graph_; }

  /// Validates the graph and runs shape inference on the declared input.
  Graph finish();

 private:
  Tensor uniform(Shape shape, int64_t fan_in);
  void add(Node node);

  Graph graph_;
  Rng rng_;
  bool protect_ = false;
  std::string role_;
};

/// Stand-alone fragments wrapped between an input and an output node. An
/// empty `input_shape` selects (1, cin, 16, 16).
Graph build_conv_block(int64_t cin, int64_t cout, int k, int stride, Shape input_shape = {},
                       uint64_t seed = 1);
Graph build_c3k2(int64_t cin, int64_t cout, int n_bottlenecks, bool shortcut,
                 Shape input_shape = {}, uint64_t seed = 1);
Graph build_c2psa(int64_t cin, int64_t cout, int n_blocks, Shape input_shape = {},
                  uint64_t seed = 1);
Graph build_sppf(int64_t cin, int64_t cout, int pool_k, Shape input_shape = {}, uint64_t seed = 1);
Graph build_spab(int64_t c, Shape input_shape = {}, uint64_t seed = 1);
Graph build_a2c2f(int64_t cin, int64_t cout, int n_blocks, bool residual, Shape input_shape = {},
                  uint64_t seed = 1);
/// One input per scale; input i is (1, cins[i], 16 >> i, 16 >> i) realised by
/// stride-2 stems from a single network input.
Graph build_detect_head(const std::vector<int64_t>& cins, int n_classes, uint64_t seed = 1);

enum class Preset { kEcoweedMini, kY11Mini, kY12Mini };

std::string preset_name(Preset preset);
Preset preset_from_name(const std::string& name);
/// Product of the stride-2 stages; input H and W must be divisible by it.
int preset_total_stride(Preset preset);

/// Desk-scale network: backbone + preset modules, a protected 3-scale Detect
/// head (outputs "out.p3", "out.p4", "out.p5") and a classifier ("out.logits").
Graph build_mini_net(Preset preset, const Shape& input_shape, int n_classes, uint64_t seed = 1);

}  // namespace slimgraph

#endif  // SLIMGRAPH_BUILDERS_HPP_
