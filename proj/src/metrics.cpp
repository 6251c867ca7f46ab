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

#include "slimgraph/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "slimgraph/error.hpp"
#include "slimgraph/modelio.hpp"
#include "slimgraph/pruner.hpp"

namespace slimgraph {

bool is_trainable_param(const std::string& name) {
  return name != "running_mean" && name != "running_var";
}

int64_t count_params(const Graph& graph) {
  int64_t total = 0;
  for (const Node& n : graph.nodes()) {
    for (const auto& [name, t] : n.params) {
      if (is_trainable_param(name)) total += t.numel();
    }
  }
  return total;
}

int64_t elementwise_ops(const Node& node) {
  switch (node.kind) {
    case NodeKind::kBatchNorm:
      return 2;
    case NodeKind::kActivation:
      return 4;
    case NodeKind::kAdd:
      return static_cast<int64_t>(node.inputs.size()) - 1;
    case NodeKind::kScale:
      return 1;
    case NodeKind::kModulate:
      return 6;
    case NodeKind::kFakeQuant:
      return 4;
    case NodeKind::kMaxPool:
      return 1;
    default:
      return 0;
  }
}

int64_t node_flops(const Graph& graph, const Node& n, const ShapeMap& shapes) {
  (void)graph;
  switch (n.kind) {
    case NodeKind::kConv: {
      const Tensor& w = n.param("weight");
      const Shape& out = shapes.at(PortRef{n.id, 0});
      const int64_t positions = out[0] * out[2] * out[3];
      const int64_t b = n.has_param("bias") ? 1 : 0;
      return w.dim(0) * (2 * w.dim(1) * w.dim(2) * w.dim(3) + b) * positions;
    }
    case NodeKind::kLinear: {
      const Tensor& w = n.param("weight");
      const int64_t batch = shapes.at(PortRef{n.id, 0})[0];
      const int64_t b = n.has_param("bias") ? 1 : 0;
      return batch * w.dim(0) * (2 * w.dim(1) + b);
    }
    case NodeKind::kGlobalAvgPool:
      return shape_numel(shapes.at(n.inputs[0]));
    default: {
      const int64_t ops = elementwise_ops(n);
      return ops == 0 ? 0 : ops * shape_numel(shapes.at(PortRef{n.id, 0}));
    }
  }
}

int64_t count_flops(const Graph& graph, const Shape& input_shape) {
  const ShapeMap shapes = infer_shapes(graph, input_shape);
  int64_t total = 0;
  for (const Node& n : graph.nodes()) total += node_flops(graph, n, shapes);
  return total;
}

MemoryEstimate estimate_memory(const Graph& graph, int precision_bits) {
  if (precision_bits != 32 && precision_bits != 16) {
    throw Error(ErrorCode::kUsage, "precision must be 32 or 16");
  }
  MemoryEstimate m;
  m.weight_bytes = weight_blob_bytes(graph, precision_bits);
  m.engine_bytes = static_cast<int64_t>(serialize_model(graph, precision_bits).size());

  const ShapeMap shapes = infer_shapes(graph);
  const std::vector<Node>& nodes = graph.nodes();
  const size_t end = nodes.size();
  std::map<PortRef, size_t> last_use;
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (int p = 0; p < nodes[i].num_outputs(); ++p) last_use[PortRef{nodes[i].id, p}] = i;
    for (const PortRef& in : nodes[i].inputs) {
      last_use[in] = nodes[i].kind == NodeKind::kOutput ? end : std::max(last_use[in], i);
    }
  }
  const int64_t elem = precision_bits / 8;
  for (size_t i = 0; i < nodes.size(); ++i) {
    int64_t live = 0;
    for (const auto& [port, last] : last_use) {
      if (graph.position(port.node) <= i && last >= i) live += shape_numel(shapes.at(port)) * elem;
    }
    m.scratch_bytes = std::max(m.scratch_bytes, live);
  }
  return m;
}

CompressionReport make_report(const Graph& graph, const std::string& stage, int precision_bits,
                              double channel_fraction, int64_t dense_params,
                              std::optional<double> accuracy) {
  CompressionReport r;
  r.model = graph.name();
  r.stage = stage;
  r.precision_bits = precision_bits;
  r.channel_fraction = channel_fraction;
  r.dense_params = dense_params;
  r.params = count_params(graph);
  r.flop_input = graph.input_shape();
  r.flops = count_flops(graph, r.flop_input);
  const MemoryEstimate mem = estimate_memory(graph, precision_bits);
  r.weight_bytes = mem.weight_bytes;
  r.engine_bytes = mem.engine_bytes;
  r.accuracy = accuracy;
  return r;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string input_label(const Shape& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

ReportTables emit_report(const std::vector<CompressionReport>& reports) {
  if (reports.empty()) fail_validation("emit_report: no reports");
  const std::vector<std::string> header = {"model",  "stage",  "precision", "fraction",
                                           "ratio_pct", "params", "flops", "gflops",
                                           "weight_bytes", "engine_bytes", "engine_mb", "val_acc"};
  std::vector<std::vector<std::string>> rows;
  for (const CompressionReport& r : reports) {
    rows.push_back({r.model, r.stage, "fp" + std::to_string(r.precision_bits), fixed(r.channel_fraction, 2),
                    format_ratio(achieved_ratio(r.dense_params, r.params)), std::to_string(r.params),
                    std::to_string(r.flops), fixed(static_cast<double>(r.flops) / 1e9, 4),
                    std::to_string(r.weight_bytes), std::to_string(r.engine_bytes),
                    fixed(static_cast<double>(r.engine_bytes) / (1024.0 * 1024.0), 3),
                    r.accuracy ? fixed(*r.accuracy, 4) : "-"});
  }
  const std::string banner = std::string("# ") + kFlopConvention + "; input " +
                             input_label(reports.front().flop_input) + "\n";

  ReportTables out;
  std::ostringstream csv;
  csv << banner;
  for (size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
  csv << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << "\n";
  }
  out.csv = csv.str();

  std::vector<size_t> width(header.size());
  for (size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream txt;
  txt << banner;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) txt << "  ";
      // Names left-aligned, numbers right-aligned.
      const bool left = i < 3;
      const std::string pad(width[i] - cells[i].size(), ' ');
      txt << (left ? cells[i] + pad : pad + cells[i]);
    }
    txt << "\n";
  };
  line(header);
  for (const auto& row : rows) line(row);
  out.text = txt.str();
  return out;
}

}  // namespace slimgraph
