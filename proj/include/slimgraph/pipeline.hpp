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

#ifndef SLIMGRAPH_PIPELINE_HPP_
#define SLIMGRAPH_PIPELINE_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slimgraph/builders.hpp"
#include "slimgraph/fakequant.hpp"
#include "slimgraph/graph.hpp"
#include "slimgraph/metrics.hpp"
#include "slimgraph/pruner.hpp"
#include "slimgraph/toytask.hpp"

namespace slimgraph {

struct TrainConfig {
  int epochs = 250;
  std::optional<int> prune_epoch;
  double channel_fraction = 0.0;
  bool qat_enabled = false;
  int calibration_batches = 2;
  float learning_rate = 0.005f;
  float momentum = 0.9f;
  int batch_size = 16;
  uint64_t seed = 1;
  /// Evaluate on the validation split every this many epochs (and always at
  /// the last epoch); other log rows carry the most recent value.
  int eval_every = 1;
};

/// Throws a usage error on an inconsistent config.
void validate_config(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  std::string phase;  // dense | pruned
};

/// "epoch,train_loss,val_acc,phase" plus one row per record.
std::string format_metric_log(const std::vector<EpochRecord>& log);

/// Everything needed to resume training bit-exactly at `epoch`.
struct TrainState {
  Graph graph;
  std::map<std::string, Tensor> velocity;
  int epoch = 0;
  std::string phase = "dense";
  double last_val_acc = 0.0;
};

constexpr float kBatchNormMomentum = 0.1f;

/// Logits output id used for training and evaluation.
constexpr const char* kLogitsOutput = "out.logits";

/// First `calibration_batches` training batches in index order.
std::vector<Tensor> calibration_batches(const ToyTask& task, const TrainConfig& config);

/// Instruments and calibrates the graph when QAT is enabled.
TrainState start_training(const Graph& graph, const ToyTask& task, const TrainConfig& config);

/// Momentum SGD on the softmax cross-entropy of the classifier head, from
/// state.epoch up to `end_epoch`. The epoch-e shuffle depends only on
/// (seed, e), so a run split at any epoch matches an uninterrupted one.
/// Throws naming the epoch if the loss becomes non-finite.
void train_until(TrainState& state, const ToyTask& task, const TrainConfig& config, int end_epoch,
                 std::vector<EpochRecord>* log = nullptr);

/// Scores, plans and applies a uniform prune, then re-calibrates the
/// quantizers (if any) on the slim graph and resets the optimizer.
PrunePlan prune_state(TrainState& state, const ToyTask& task, const TrainConfig& config,
                      double fraction);

/// Classifier accuracy on a labelled set (inference mode).
double evaluate(const Graph& graph, const Tensor& images, const std::vector<int>& labels,
                int batch_size = 16);

/// Plain training to config.epochs with no pruning.
Graph train(const Graph& graph, const ToyTask& task, const TrainConfig& config,
            std::vector<EpochRecord>* log = nullptr);

struct PipelineResult {
  Graph dense;  // at the prune point (or final when no prune happens)
  Graph slim;   // final graph
  PrunePlan plan;
  std::vector<CalibrationEntry> calibration;
  std::vector<EpochRecord> log;
  std::vector<CompressionReport> reports;
  std::vector<uint8_t> fp32_bytes;
  std::vector<uint8_t> fp16_bytes;
  std::vector<CastRecord> casts;
  double dense_accuracy = 0.0;
  double slim_accuracy = 0.0;
  double fp16_accuracy = 0.0;
};

/// instrument -> calibrate -> train to prune_epoch -> prune + re-calibrate
/// -> fine-tune -> export fp32 / fp16 and reports. Errors name the stage.
PipelineResult run_compression_pipeline(Preset preset, const ToyTask& task,
                                        const TrainConfig& config);

/// Writes model_fp32.twnm, model_fp16.twnm, plan.txt, calib.txt,
/// metrics.csv, report.csv and report.txt into `dir` (created if missing).
void write_pipeline_artifacts(const PipelineResult& result, const std::string& dir);

}  // namespace slimgraph

#endif  // SLIMGRAPH_PIPELINE_HPP_
