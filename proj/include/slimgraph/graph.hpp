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

#ifndef SLIMGRAPH_GRAPH_HPP_
#define SLIMGRAPH_GRAPH_HPP_

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "slimgraph/tensor.hpp"

namespace slimgraph {

enum class NodeKind {
  kInput,
  kOutput,
  kConv,
  kBatchNorm,
  kActivation,
  kMaxPool,
  kConcat,
  kAdd,
  kSplit,
  kScale,          // y = x * param("scale")[c]
  kModulate,       // y = x + x * (sigmoid(logits) - 0.5); inputs (x, logits)
  kGlobalAvgPool,  // (N, C, H, W) -> (N, C)
  kLinear,
  kFakeQuant,
};

enum class ActivationKind { kSiLU, kSigmoid };

enum class QuantPhase { kDisabled, kObserve, kActive };

/// Calibrated state of one activation quantizer. The histogram used while
/// observing lives in the calibrator; only the outcome is part of the graph.
struct QuantState {
  QuantPhase phase = QuantPhase::kDisabled;
  float amax = 0.0f;
  float scale = 0.0f;  // amax / 127
  int64_t samples = 0;

  bool operator==(const QuantState&) const = default;
};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view name);
std::string_view to_string(ActivationKind kind);
std::string_view to_string(QuantPhase phase);

struct PortRef {
  std::string node;
  int port = 0;

  auto operator<=>(const PortRef&) const = default;
};

std::string to_string(const PortRef& ref);

struct NodeAttrs {
  int stride = 1;   // conv, maxpool
  int padding = 0;  // conv, maxpool
  int kernel = 0;   // maxpool window
  ActivationKind activation = ActivationKind::kSiLU;
  std::vector<int64_t> split_sizes;
  float eps = 1e-5f;  // batchnorm
  QuantState quant;

  bool operator==(const NodeAttrs&) const = default;
};

struct Node {
  std::string id;
  NodeKind kind = NodeKind::kInput;
  std::vector<PortRef> inputs;
  NodeAttrs attrs;
  std::map<std::string, Tensor> params;
  bool is_protected = false;  // channels may never be pruned (Detect head)
  std::string role;           // free-form tag: "detect", "aux", ...

  int num_outputs() const;
  bool has_param(const std::string& name) const { return params.count(name) != 0; }
  const Tensor& param(const std::string& name) const;
};

/// Directed acyclic computation graph. Nodes are stored in insertion order
/// and a node may only consume nodes inserted before it, so insertion order
/// is the (deterministic) topological order.
class Graph {
 public:
  Graph() = default;
  Graph(std::string name, Shape input_shape)
      : name_(std::move(name)), input_shape_(std::move(input_shape)) {}

  const std::string& name() const noexcept { return name_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  void set_input_shape(Shape shape) { input_shape_ = std::move(shape); }

  std::map<std::string, std::string>& meta() noexcept { return meta_; }
  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }

  /// Appends a node; its inputs must reference existing node outputs.
  const Node& add(Node node);

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const Node& node(const std::string& id) const;
  Node& mutable_node(const std::string& id);
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  size_t size() const noexcept { return nodes_.size(); }
  size_t position(const std::string& id) const;

  const Node& input_node() const;
  std::vector<std::string> output_ids() const;

  /// Consumers of each output port: (consumer id, consumer input index).
  std::map<PortRef, std::vector<std::pair<std::string, int>>> consumers() const;

  /// Structural checks: one input node, >= 1 output node, port arities.
  void validate() const;

  /// Topology, attributes and parameter bytes all equal.
  bool identical(const Graph& other) const;

 private:
  std::string name_;
  Shape input_shape_;
  std::map<std::string, std::string> meta_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, size_t> index_;
};

/// Shape of every node output port.
using ShapeMap = std::map<PortRef, Shape>;

/// Annotates every edge; throws a validation error naming the first
/// inconsistent node (and its producers) on failure.
ShapeMap infer_shapes(const Graph& graph, const Shape& input_shape);
inline ShapeMap infer_shapes(const Graph& graph) { return infer_shapes(graph, graph.input_shape()); }

}  // namespace slimgraph

#endif  // SLIMGRAPH_GRAPH_HPP_
