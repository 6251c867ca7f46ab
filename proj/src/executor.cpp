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

#include "slimgraph/executor.hpp"

#include <set>

#include "slimgraph/error.hpp"
#include "slimgraph/fakequant.hpp"

namespace slimgraph {

std::string param_key(const std::string& node, const std::string& param) {
  return node + "/" + param;
}

Var modulate(Tape& tape, Var x, Var logits) {
  Var gate = ad::add_scalar(tape, ad::sigmoid(tape, logits), -0.5f);
  return ad::add(tape, x, ad::mul(tape, x, gate));
}

ExecResult execute(const Graph& graph, Tape& tape, Var input, const ExecOptions& options) {
  const std::vector<Node>& nodes = graph.nodes();

  std::vector<std::string> wanted = options.outputs;
  if (wanted.empty()) wanted = graph.output_ids();
  std::set<std::string> needed;
  for (const std::string& id : wanted) {
    if (graph.node(id).kind != NodeKind::kOutput) fail_validation("'" + id + "' is not an output node");
    needed.insert(id);
  }
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!needed.count(it->id)) continue;
    for (const PortRef& in : it->inputs) needed.insert(in.node);
  }

  const bool training = options.mode == ExecMode::kTraining;
  auto leaf = [&](const Node& n, const std::string& name) {
    return training ? tape.parameter(param_key(n.id, name), n.param(name))
                    : tape.constant(n.param(name));
  };

  ExecResult result;
  std::map<PortRef, Var> values;
  auto in = [&](const Node& n, size_t i) {
    auto it = values.find(n.inputs[i]);
    if (it == values.end()) fail_internal("executor: missing value for " + to_string(n.inputs[i]));
    return it->second;
  };

  for (const Node& n : nodes) {
    if (!needed.count(n.id)) continue;
    Var out;
    switch (n.kind) {
      case NodeKind::kInput:
        if (tape.value(input).shape().size() != 4) {
          fail_validation("input must be (N,C,H,W), got " + shape_to_string(tape.value(input).shape()));
        }
        out = input;
        break;
      case NodeKind::kOutput:
        out = in(n, 0);
        result.outputs[n.id] = out;
        break;
      case NodeKind::kConv: {
        ops::Conv2dParams p{n.attrs.stride, n.attrs.stride, n.attrs.padding, n.attrs.padding};
        Var w = leaf(n, "weight");
        Var b = n.has_param("bias") ? leaf(n, "bias") : Var{};
        out = ad::conv2d(tape, in(n, 0), w, b, p);
        break;
      }
      case NodeKind::kBatchNorm: {
        Var gamma = leaf(n, "gamma");
        Var beta = leaf(n, "beta");
        if (training) {
          auto& stats = result.batch_stats[n.id];
          out = ad::batchnorm_train(tape, in(n, 0), gamma, beta, n.attrs.eps, &stats.first, &stats.second);
        } else {
          out = ad::batchnorm_infer(tape, in(n, 0), gamma, beta, n.param("running_mean"),
                                    n.param("running_var"), n.attrs.eps);
        }
        break;
      }
      case NodeKind::kActivation:
        out = n.attrs.activation == ActivationKind::kSiLU ? ad::silu(tape, in(n, 0))
                                                          : ad::sigmoid(tape, in(n, 0));
        break;
      case NodeKind::kMaxPool:
        out = ad::maxpool2d(tape, in(n, 0), n.attrs.kernel, n.attrs.stride, n.attrs.padding);
        break;
      case NodeKind::kConcat: {
        std::vector<Var> parts;
        for (size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(in(n, i));
        out = ad::concat_channels(tape, parts);
        break;
      }
      case NodeKind::kAdd: {
        out = in(n, 0);
        for (size_t i = 1; i < n.inputs.size(); ++i) out = ad::add(tape, out, in(n, i));
        break;
      }
      case NodeKind::kSplit: {
        std::vector<Var> parts = ad::split_channels(tape, in(n, 0), n.attrs.split_sizes);
        for (size_t k = 0; k < parts.size(); ++k) values[PortRef{n.id, static_cast<int>(k)}] = parts[k];
        continue;
      }
      case NodeKind::kScale:
        out = ad::channel_scale(tape, in(n, 0), leaf(n, "scale"));
        break;
      case NodeKind::kModulate:
        out = modulate(tape, in(n, 0), in(n, 1));
        break;
      case NodeKind::kGlobalAvgPool:
        out = ad::global_avg_pool(tape, in(n, 0));
        break;
      case NodeKind::kLinear: {
        Var w = leaf(n, "weight");
        Var b = n.has_param("bias") ? leaf(n, "bias") : Var{};
        out = ad::linear(tape, in(n, 0), w, b);
        break;
      }
      case NodeKind::kFakeQuant: {
        const QuantState& q = n.attrs.quant;
        Var x = in(n, 0);
        if (q.phase == QuantPhase::kObserve && options.observer) options.observer(n, tape.value(x));
        out = q.phase == QuantPhase::kActive ? ad::fake_quant(tape, x, q.scale) : x;
        break;
      }
    }
    values[PortRef{n.id, 0}] = out;
  }
  return result;
}

std::map<std::string, Tensor> forward(const Graph& graph, const Tensor& input,
                                      const std::vector<std::string>& outputs) {
  Tape tape(/*recording=*/false);
  Var x = tape.constant(input);
  ExecOptions options;
  options.outputs = outputs;
  ExecResult r = execute(graph, tape, x, options);
  std::map<std::string, Tensor> result;
  for (const auto& [id, v] : r.outputs) result[id] = tape.value(v);
  return result;
}

}  // namespace slimgraph
