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

#ifndef SLIMGRAPH_FAKEQUANT_HPP_
#define SLIMGRAPH_FAKEQUANT_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slimgraph/executor.hpp"
#include "slimgraph/graph.hpp"
#include "slimgraph/tape.hpp"

namespace slimgraph {

constexpr int kQuantMin = -128;
constexpr int kQuantMax = 127;
constexpr int kHistogramBins = 2048;
constexpr double kCalibrationPercentile = 99.99;

/// Quantize-dequantize one value: clamp(round_half_even(x / scale), -128, 127) * scale.
float qdq(float x, float scale);
Tensor qdq(const Tensor& x, float scale);
/// Clipped straight-through estimator: passes the gradient where
/// -128 * scale <= x <= 127 * scale, zero elsewhere.
Tensor qdq_backward(const Tensor& upstream, const Tensor& x, float scale);

namespace ad {
Var fake_quant(Tape& t, Var x, float scale);
}

/// Running histogram of |x| over 2048 uniform bins spanning [0, running max].
/// When a larger value arrives the existing counts are re-binned onto the
/// wider range.
class AbsHistogram {
 public:
  void observe(std::span<const float> values);
  int64_t total() const noexcept { return total_; }
  float range() const noexcept { return range_; }
  const std::vector<uint64_t>& counts() const noexcept { return counts_; }
  /// Smallest bin upper edge whose cumulative count reaches `percentile` % of
  /// the observed mass. Returns 0 when nothing non-zero was observed.
  float percentile_edge(double percentile) const;

 private:
  void grow(float new_range);

  std::vector<uint64_t> counts_ = std::vector<uint64_t>(kHistogramBins, 0);
  float range_ = 0.0f;
  int64_t total_ = 0;
};

/// Inserts a disabled fakequant node on the input edge of every conv that is
/// not part of the protected Detect head. Throws if already instrumented.
Graph insert_fakequant(const Graph& graph);
bool is_instrumented(const Graph& graph);
/// Removes every fakequant node, reconnecting its consumers to its producer.
Graph strip_fakequant(const Graph& graph);
/// Moves every quantizer to `phase`, clearing calibration when it is kObserve.
Graph set_quant_phase(const Graph& graph, QuantPhase phase);

struct CalibrationEntry {
  std::string node;
  float amax = 0.0f;
  float scale = 0.0f;
  int64_t samples = 0;
};

/// Observe-only pass over `batches`, then amax = percentile edge, scale =
/// amax / 127 and phase -> active. Throws naming the node if a quantizer saw
/// only zeros. With kTraining, batchnorm normalises with batch statistics
/// (running statistics are left untouched), matching what training sees.
Graph calibrate(const Graph& graph, std::span<const Tensor> batches,
                std::vector<CalibrationEntry>* report = nullptr,
                ExecMode mode = ExecMode::kInference);

std::vector<CalibrationEntry> calibration_entries(const Graph& graph);
/// Text sidecar: one "node amax scale samples" line per quantizer.
std::string format_calibration(const std::vector<CalibrationEntry>& entries);
std::vector<CalibrationEntry> parse_calibration(const std::string& text);

struct CastRecord {
  std::string tensor;
  int64_t elements = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // over elements in the binary16 normal range
};

struct Fp16Export {
  std::vector<uint8_t> bytes;  // model container with binary16 weights
  std::vector<CastRecord> casts;
};

/// Casts every weight tensor to binary16 (round-to-nearest-even) and
/// serialises the model. Throws if any |w| > 65504.
Fp16Export export_fp16(const Graph& graph);

}  // namespace slimgraph

#endif  // SLIMGRAPH_FAKEQUANT_HPP_
