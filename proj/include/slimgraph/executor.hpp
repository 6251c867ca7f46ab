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

#ifndef SLIMGRAPH_EXECUTOR_HPP_
#define SLIMGRAPH_EXECUTOR_HPP_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "slimgraph/graph.hpp"
#include "slimgraph/tape.hpp"

namespace slimgraph {

enum class ExecMode {
  kInference,  // batchnorm uses running statistics
  kTraining,   // batchnorm uses batch statistics; parameters are tape leaves
};

struct ExecOptions {
  ExecMode mode = ExecMode::kInference;
  /// Output node ids to evaluate; empty evaluates every output. Only their
  /// ancestors are executed.
  std::vector<std::string> outputs;
  /// Called with the input of every fakequant node in observe phase.
  std::function<void(const Node&, const Tensor&)> observer;
};

struct ExecResult {
  std::map<std::string, Var> outputs;
  /// Training mode: batch (mean, biased var) per batchnorm node.
  std::map<std::string, std::pair<Tensor, Tensor>> batch_stats;
};

/// Tape key under which a node parameter is registered.
std::string param_key(const std::string& node, const std::string& param);

ExecResult execute(const Graph& graph, Tape& tape, Var input, const ExecOptions& options);

/// Inference convenience: output id -> tensor.
std::map<std::string, Tensor> forward(const Graph& graph, const Tensor& input,
                                      const std::vector<std::string>& outputs = {});

/// x + x * (sigmoid(logits) - 0.5), the SPAB modulation.
Var modulate(Tape& tape, Var x, Var logits);

}  // namespace slimgraph

#endif  // SLIMGRAPH_EXECUTOR_HPP_
