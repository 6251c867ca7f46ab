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

#include "slimgraph/fakequant.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/half.hpp"
#include "slimgraph/modelio.hpp"

namespace slimgraph {

float qdq(float x, float scale) {
  // nearbyint honours the default FE_TONEAREST mode: round half to even.
  double q = std::nearbyint(static_cast<double>(x) / static_cast<double>(scale));
  q = std::clamp(q, static_cast<double>(kQuantMin), static_cast<double>(kQuantMax));
  return static_cast<float>(q * static_cast<double>(scale));
}

Tensor qdq(const Tensor& x, float scale) {
  if (!(scale > 0.0f)) fail_validation("qdq: scale must be > 0");
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = qdq(x[i], scale);
  return y;
}

Tensor qdq_backward(const Tensor& upstream, const Tensor& x, float scale) {
  const double lo = kQuantMin * static_cast<double>(scale);
  const double hi = kQuantMax * static_cast<double>(scale);
  Tensor g(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    g[i] = (v >= lo && v <= hi) ? upstream[i] : 0.0f;
  }
  return g;
}

namespace ad {
Var fake_quant(Tape& t, Var x, float scale) {
  return t.record(qdq(t.value(x), scale), {x},
                  [x, scale](const Tape& tp, const Tensor& g, const std::vector<bool>&) {
                    return std::vector<Tensor>{qdq_backward(g, tp.value(x), scale)};
                  });
}
}  // namespace ad

void AbsHistogram::grow(float new_range) {
  if (range_ > 0.0f) {
    std::vector<uint64_t> rebinned(kHistogramBins, 0);
    const double ratio = static_cast<double>(range_) / static_cast<double>(new_range);
    for (int i = 0; i < kHistogramBins; ++i) {
      if (!counts_[i]) continue;
      const auto j = static_cast<int>((i + 0.5) * ratio);
      rebinned[static_cast<size_t>(std::min(j, kHistogramBins - 1))] += counts_[i];
    }
    counts_ = std::move(rebinned);
  }
  range_ = new_range;
}

void AbsHistogram::observe(std::span<const float> values) {
  float batch_max = 0.0f;
  for (float v : values) batch_max = std::max(batch_max, std::abs(v));
  if (batch_max > range_) grow(batch_max);
  const double per_unit = range_ > 0.0f ? kHistogramBins / static_cast<double>(range_) : 0.0;
  for (float v : values) {
    const auto bin = static_cast<int64_t>(std::abs(v) * per_unit);
    ++counts_[static_cast<size_t>(std::min<int64_t>(bin, kHistogramBins - 1))];
  }
  total_ += static_cast<int64_t>(values.size());
}

float AbsHistogram::percentile_edge(double percentile) const {
  if (range_ <= 0.0f || total_ == 0) return 0.0f;
  // Integer comparison in parts per million avoids rounding at the threshold.
  const auto ppm = static_cast<uint64_t>(std::llround(percentile * 10000.0));
  const auto need = static_cast<unsigned __int128>(ppm) * static_cast<uint64_t>(total_);
  unsigned __int128 cum = 0;
  for (int k = 0; k < kHistogramBins; ++k) {
    cum += counts_[static_cast<size_t>(k)];
    if (cum * 1000000u >= need) {
      if (k == kHistogramBins - 1) return range_;
      return static_cast<float>((k + 1) * (static_cast<double>(range_) / kHistogramBins));
    }
  }
  return range_;
}

bool is_instrumented(const Graph& graph) {
  return std::any_of(graph.nodes().begin(), graph.nodes().end(),
                     [](const Node& n) { return n.kind == NodeKind::kFakeQuant; });
}

namespace {

Graph copy_header(const Graph& graph) {
  Graph out(graph.name(), graph.input_shape());
  out.meta() = graph.meta();
  return out;
}

}  // namespace

Graph insert_fakequant(const Graph& graph) {
  if (is_instrumented(graph)) {
    fail_validation("graph '" + graph.name() + "' is already instrumented with fakequant nodes");
  }
  Graph out = copy_header(graph);
  for (const Node& n : graph.nodes()) {
    if (n.kind == NodeKind::kConv && !n.is_protected) {
      Node fq;
      fq.id = n.id + ".fq";
      fq.kind = NodeKind::kFakeQuant;
      fq.inputs = n.inputs;
      fq.role = n.role;
      out.add(std::move(fq));
      Node conv = n;
      conv.inputs = {PortRef{n.id + ".fq", 0}};
      out.add(std::move(conv));
    } else {
      out.add(n);
    }
  }
  return out;
}

Graph strip_fakequant(const Graph& graph) {
  std::map<std::string, PortRef> bypass;
  Graph out = copy_header(graph);
  for (const Node& n : graph.nodes()) {
    if (n.kind == NodeKind::kFakeQuant) {
      PortRef src = n.inputs[0];
      auto it = bypass.find(src.node);
      if (it != bypass.end()) src = it->second;
      bypass[n.id] = src;
      continue;
    }
    Node copy = n;
    for (PortRef& in : copy.inputs) {
      auto it = bypass.find(in.node);
      if (it != bypass.end()) in = it->second;
    }
    out.add(std::move(copy));
  }
  return out;
}

Graph set_quant_phase(const Graph& graph, QuantPhase phase) {
  Graph out = graph;
  for (const Node& n : graph.nodes()) {
    if (n.kind != NodeKind::kFakeQuant) continue;
    QuantState& q = out.mutable_node(n.id).attrs.quant;
    if (phase == QuantPhase::kActive && !(q.scale > 0.0f)) {
      fail_validation("quantizer '" + n.id + "' cannot become active before calibration");
    }
    if (phase == QuantPhase::kObserve) q = QuantState{};
    q.phase = phase;
  }
  return out;
}

Graph calibrate(const Graph& graph, std::span<const Tensor> batches,
                std::vector<CalibrationEntry>* report, ExecMode mode) {
  if (!is_instrumented(graph)) fail_validation("calibrate: graph has no fakequant nodes");
  if (batches.empty()) fail_validation("calibrate: at least one batch is required");
  Graph observing = set_quant_phase(graph, QuantPhase::kObserve);

  std::map<std::string, AbsHistogram> histograms;
  ExecOptions options;
  options.mode = mode;
  options.observer = [&](const Node& n, const Tensor& x) { histograms[n.id].observe(x.data()); };
  for (const Tensor& batch : batches) {
    Tape tape(/*recording=*/false);
    execute(observing, tape, tape.constant(batch), options);
  }

  Graph out = observing;
  std::vector<CalibrationEntry> entries;
  for (const Node& n : observing.nodes()) {
    if (n.kind != NodeKind::kFakeQuant) continue;
    auto it = histograms.find(n.id);
    const float amax = it == histograms.end() ? 0.0f : it->second.percentile_edge(kCalibrationPercentile);
    if (!(amax > 0.0f)) {
      fail_validation("calibrate: quantizer '" + n.id +
                      "' observed only zero activations; amax is undefined");
    }
    QuantState& q = out.mutable_node(n.id).attrs.quant;
    q.amax = amax;
    q.scale = amax / static_cast<float>(kQuantMax);
    q.samples = it->second.total();
    q.phase = QuantPhase::kActive;
    entries.push_back(CalibrationEntry{n.id, q.amax, q.scale, q.samples});
  }
  if (report) *report = std::move(entries);
  return out;
}

std::vector<CalibrationEntry> calibration_entries(const Graph& graph) {
  std::vector<CalibrationEntry> entries;
  for (const Node& n : graph.nodes()) {
    if (n.kind == NodeKind::kFakeQuant) {
      entries.push_back(CalibrationEntry{n.id, n.attrs.quant.amax, n.attrs.quant.scale,
                                         n.attrs.quant.samples});
    }
  }
  return entries;
}

std::string format_calibration(const std::vector<CalibrationEntry>& entries) {
  std::ostringstream os;
  os << "# node amax scale samples\n";
  char buf[128];
  for (const CalibrationEntry& e : entries) {
    std::snprintf(buf, sizeof(buf), " %.9g %.9g %lld\n", static_cast<double>(e.amax),
                  static_cast<double>(e.scale), static_cast<long long>(e.samples));
    os << e.node << buf;
  }
  return os.str();
}

std::vector<CalibrationEntry> parse_calibration(const std::string& text) {
  std::vector<CalibrationEntry> entries;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    CalibrationEntry e;
    if (!(ls >> e.node >> e.amax >> e.scale >> e.samples)) {
      fail_format("calibration sidecar: malformed line " + std::to_string(lineno));
    }
    entries.push_back(e);
  }
  return entries;
}

Fp16Export export_fp16(const Graph& graph) {
  Fp16Export result;
  for (const Node& n : graph.nodes()) {
    for (const auto& [name, t] : n.params) {
      CastRecord rec{param_key(n.id, name), t.numel(), 0.0, 0.0};
      for (int64_t i = 0; i < t.numel(); ++i) {
        const float w = t[i];
        if (std::abs(w) > kHalfMax || !std::isfinite(w)) {
          fail_validation("export_fp16: tensor '" + rec.tensor + "' holds " + std::to_string(w) +
                          ", outside the binary16 range");
        }
        const double back = half_to_float(float_to_half(w));
        const double err = std::abs(back - w);
        rec.max_abs_error = std::max(rec.max_abs_error, err);
        // Below 2^-14 binary16 is subnormal and only an absolute bound holds.
        if (std::abs(w) >= 0x1.0p-14f) rec.max_rel_error = std::max(rec.max_rel_error, err / std::abs(w));
      }
      result.casts.push_back(std::move(rec));
    }
  }
  result.bytes = serialize_model(graph, 16);
  return result;
}

}  // namespace slimgraph
