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

#include "slimgraph/graph.hpp"

#include <array>
#include <utility>

#include "slimgraph/error.hpp"
#include "slimgraph/ops.hpp"

namespace slimgraph {
namespace {

constexpr std::array<std::pair<NodeKind, std::string_view>, 14> kKindNames{{
    {NodeKind::kInput, "input"},
    {NodeKind::kOutput, "output"},
    {NodeKind::kConv, "conv"},
    {NodeKind::kBatchNorm, "batchnorm"},
    {NodeKind::kActivation, "activation"},
    {NodeKind::kMaxPool, "maxpool"},
    {NodeKind::kConcat, "concat"},
    {NodeKind::kAdd, "add"},
    {NodeKind::kSplit, "split"},
    {NodeKind::kScale, "scale"},
    {NodeKind::kModulate, "modulate"},
    {NodeKind::kGlobalAvgPool, "global_avg_pool"},
    {NodeKind::kLinear, "linear"},
    {NodeKind::kFakeQuant, "fakequant"},
}};

// {min, max} input arity; max < 0 means unbounded.
std::pair<int, int> arity(NodeKind kind) {
  switch (kind) {
    case NodeKind::kInput: return {0, 0};
    case NodeKind::kConcat: return {1, -1};
    case NodeKind::kAdd: return {2, -1};
    case NodeKind::kModulate: return {2, 2};
    default: return {1, 1};
  }
}

[[noreturn]] void shape_error(const Node& node, const std::string& what) {
  fail_validation("shape inference failed at node '" + node.id + "' (" +
                  std::string(to_string(node.kind)) + "): " + what);
}

void require_vector(const Node& node, const std::string& name, int64_t length) {
  if (!node.has_param(name)) shape_error(node, "missing parameter '" + name + "'");
  const Tensor& t = node.param(name);
  if (t.rank() != 1 || t.dim(0) != length) {
    shape_error(node, "parameter '" + name + "' has shape " + shape_to_string(t.shape()) +
                          ", expected (" + std::to_string(length) + ")");
  }
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<NodeKind> node_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(ActivationKind kind) {
  return kind == ActivationKind::kSiLU ? "silu" : "sigmoid";
}

std::string_view to_string(QuantPhase phase) {
  switch (phase) {
    case QuantPhase::kDisabled: return "disabled";
    case QuantPhase::kObserve: return "observe";
    case QuantPhase::kActive: return "active";
  }
  return "unknown";
}

std::string to_string(const PortRef& ref) { return ref.node + ":" + std::to_string(ref.port); }

int Node::num_outputs() const {
  if (kind == NodeKind::kOutput) return 0;
  if (kind == NodeKind::kSplit) return static_cast<int>(attrs.split_sizes.size());
  return 1;
}

const Tensor& Node::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) fail_validation("node '" + id + "' has no parameter '" + name + "'");
  return it->second;
}

const Node& Graph::add(Node node) {
  if (node.id.empty()) fail_validation("node id must not be empty");
  if (contains(node.id)) fail_validation("duplicate node id '" + node.id + "'");
  const auto [lo, hi] = arity(node.kind);
  const int n = static_cast<int>(node.inputs.size());
  if (n < lo || (hi >= 0 && n > hi)) {
    fail_validation("node '" + node.id + "' (" + std::string(to_string(node.kind)) + ") has " +
                    std::to_string(n) + " inputs");
  }
  for (const PortRef& in : node.inputs) {
    auto it = index_.find(in.node);
    if (it == index_.end()) {
      fail_validation("node '" + node.id + "' consumes unknown node '" + in.node + "'");
    }
    const Node& producer = nodes_[it->second];
    if (in.port < 0 || in.port >= producer.num_outputs()) {
      fail_validation("node '" + node.id + "' consumes missing port " + to_string(in));
    }
  }
  if (node.kind == NodeKind::kInput) {
    for (const Node& other : nodes_) {
      if (other.kind == NodeKind::kInput) fail_validation("graph already has an input node");
    }
  }
  index_.emplace(node.id, nodes_.size());
  nodes_.push_back(std::move(node));
  return nodes_.back();
}

const Node& Graph::node(const std::string& id) const { return nodes_[position(id)]; }

Node& Graph::mutable_node(const std::string& id) { return nodes_[position(id)]; }

size_t Graph::position(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail_validation("unknown node '" + id + "'");
  return it->second;
}

const Node& Graph::input_node() const {
  for (const Node& n : nodes_) {
    if (n.kind == NodeKind::kInput) return n;
  }
  fail_validation("graph '" + name_ + "' has no input node");
}

std::vector<std::string> Graph::output_ids() const {
  std::vector<std::string> ids;
  for (const Node& n : nodes_) {
    if (n.kind == NodeKind::kOutput) ids.push_back(n.id);
  }
  return ids;
}

std::map<PortRef, std::vector<std::pair<std::string, int>>> Graph::consumers() const {
  std::map<PortRef, std::vector<std::pair<std::string, int>>> result;
  for (const Node& n : nodes_) {
    for (int p = 0; p < n.num_outputs(); ++p) result[PortRef{n.id, p}];
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      result[n.inputs[i]].emplace_back(n.id, static_cast<int>(i));
    }
  }
  return result;
}

void Graph::validate() const {
  int inputs = 0, outputs = 0;
  for (const Node& n : nodes_) {
    if (n.kind == NodeKind::kInput) ++inputs;
    if (n.kind == NodeKind::kOutput) ++outputs;
    if (n.kind == NodeKind::kSplit) {
      if (n.attrs.split_sizes.empty()) fail_validation("split node '" + n.id + "' has no sizes");
      for (int64_t s : n.attrs.split_sizes) {
        if (s < 1) fail_validation("split node '" + n.id + "' has a non-positive size");
      }
    }
  }
  if (inputs != 1) fail_validation("graph '" + name_ + "' must have exactly one input node");
  if (outputs < 1) fail_validation("graph '" + name_ + "' must have at least one output node");
}

bool Graph::identical(const Graph& other) const {
  if (name_ != other.name_ || input_shape_ != other.input_shape_ || meta_ != other.meta_ ||
      nodes_.size() != other.nodes_.size()) {
    return false;
  }
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[i];
    if (a.id != b.id || a.kind != b.kind || a.inputs != b.inputs || !(a.attrs == b.attrs) ||
        a.is_protected != b.is_protected || a.role != b.role || a.params.size() != b.params.size()) {
      return false;
    }
    for (const auto& [name, t] : a.params) {
      auto it = b.params.find(name);
      if (it == b.params.end() || !t.identical(it->second)) return false;
    }
  }
  return true;
}

ShapeMap infer_shapes(const Graph& graph, const Shape& input_shape) {
  graph.validate();
  ShapeMap shapes;
  auto in_shape = [&](const Node& node, size_t i) -> const Shape& {
    auto it = shapes.find(node.inputs[i]);
    if (it == shapes.end()) shape_error(node, "input " + to_string(node.inputs[i]) + " has no shape");
    return it->second;
  };
  for (const Node& node : graph.nodes()) {
    switch (node.kind) {
      case NodeKind::kInput: {
        if (input_shape.size() != 4) {
          shape_error(node, "input shape must be (N,C,H,W), got " + shape_to_string(input_shape));
        }
        shapes[{node.id, 0}] = input_shape;
        break;
      }
      case NodeKind::kOutput:
        shapes[{node.id, 0}] = in_shape(node, 0);
        break;
      case NodeKind::kConv: {
        const Shape& x = in_shape(node, 0);
        if (x.size() != 4) shape_error(node, "conv input must be rank 4");
        const Tensor& w = node.param("weight");
        if (w.rank() != 4) shape_error(node, "conv weight must be rank 4");
        if (w.dim(1) != x[1]) {
          shape_error(node, "conv expects Cin " + std::to_string(w.dim(1)) + " but producer '" +
                                node.inputs[0].node + "' provides " + std::to_string(x[1]) +
                                " channels");
        }
        if (node.has_param("bias")) require_vector(node, "bias", w.dim(0));
        Shape out{x[0], w.dim(0), 0, 0};
        try {
          out[2] = ops::conv_out_extent(x[2], w.dim(2), node.attrs.stride, node.attrs.padding, "height");
          out[3] = ops::conv_out_extent(x[3], w.dim(3), node.attrs.stride, node.attrs.padding, "width");
        } catch (const Error& e) {
          shape_error(node, e.what());
        }
        shapes[{node.id, 0}] = out;
        break;
      }
      case NodeKind::kBatchNorm: {
        const Shape& x = in_shape(node, 0);
        if (x.size() != 4) shape_error(node, "batchnorm input must be rank 4");
        for (const char* p : {"gamma", "beta", "running_mean", "running_var"}) {
          require_vector(node, p, x[1]);
        }
        shapes[{node.id, 0}] = x;
        break;
      }
      case NodeKind::kActivation:
      case NodeKind::kFakeQuant:
        shapes[{node.id, 0}] = in_shape(node, 0);
        break;
      case NodeKind::kMaxPool: {
        const Shape& x = in_shape(node, 0);
        if (x.size() != 4) shape_error(node, "maxpool input must be rank 4");
        Shape out = x;
        try {
          out[2] = ops::conv_out_extent(x[2], node.attrs.kernel, node.attrs.stride, node.attrs.padding, "height");
          out[3] = ops::conv_out_extent(x[3], node.attrs.kernel, node.attrs.stride, node.attrs.padding, "width");
        } catch (const Error& e) {
          shape_error(node, e.what());
        }
        shapes[{node.id, 0}] = out;
        break;
      }
      case NodeKind::kConcat: {
        Shape out = in_shape(node, 0);
        if (out.size() < 2) shape_error(node, "concat input rank < 2");
        int64_t channels = 0;
        for (size_t i = 0; i < node.inputs.size(); ++i) {
          Shape s = in_shape(node, i);
          channels += s.size() > 1 ? s[1] : 0;
          Shape a = s, b = out;
          if (a.size() != b.size()) shape_error(node, "concat rank mismatch");
          a[1] = b[1] = 0;
          if (a != b) {
            shape_error(node, "concat non-channel dims differ between '" + node.inputs[0].node +
                                  "' " + shape_to_string(out) + " and '" + node.inputs[i].node +
                                  "' " + shape_to_string(s));
          }
        }
        out[1] = channels;
        shapes[{node.id, 0}] = out;
        break;
      }
      case NodeKind::kAdd:
      case NodeKind::kModulate: {
        const Shape& first = in_shape(node, 0);
        for (size_t i = 1; i < node.inputs.size(); ++i) {
          if (in_shape(node, i) != first) {
            shape_error(node, "operand shapes differ: '" + node.inputs[0].node + "' " +
                                  shape_to_string(first) + " vs '" + node.inputs[i].node + "' " +
                                  shape_to_string(in_shape(node, i)));
          }
        }
        shapes[{node.id, 0}] = first;
        break;
      }
      case NodeKind::kSplit: {
        const Shape& x = in_shape(node, 0);
        int64_t total = 0;
        for (int64_t s : node.attrs.split_sizes) total += s;
        if (x.size() < 2 || total != x[1]) {
          shape_error(node, "split sizes sum to " + std::to_string(total) + " but input has " +
                                (x.size() > 1 ? std::to_string(x[1]) : "?") + " channels");
        }
        for (size_t k = 0; k < node.attrs.split_sizes.size(); ++k) {
          Shape out = x;
          out[1] = node.attrs.split_sizes[k];
          shapes[{node.id, static_cast<int>(k)}] = out;
        }
        break;
      }
      case NodeKind::kScale: {
        const Shape& x = in_shape(node, 0);
        if (x.size() < 2) shape_error(node, "scale input rank < 2");
        require_vector(node, "scale", x[1]);
        shapes[{node.id, 0}] = x;
        break;
      }
      case NodeKind::kGlobalAvgPool: {
        const Shape& x = in_shape(node, 0);
        if (x.size() != 4) shape_error(node, "global_avg_pool input must be rank 4");
        shapes[{node.id, 0}] = Shape{x[0], x[1]};
        break;
      }
      case NodeKind::kLinear: {
        const Shape& x = in_shape(node, 0);
        const Tensor& w = node.param("weight");
        if (x.size() != 2 || w.rank() != 2 || w.dim(1) != x[1]) {
          shape_error(node, "linear expects (N," + std::to_string(w.rank() == 2 ? w.dim(1) : -1) +
                                ") input, producer '" + node.inputs[0].node + "' gives " +
                                shape_to_string(x));
        }
        if (node.has_param("bias")) require_vector(node, "bias", w.dim(0));
        shapes[{node.id, 0}] = Shape{x[0], w.dim(0)};
        break;
      }
    }
  }
  return shapes;
}

}  // namespace slimgraph
