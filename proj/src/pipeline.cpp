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

#include "slimgraph/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>

#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/modelio.hpp"
#include "slimgraph/rng.hpp"

namespace slimgraph {

namespace {

constexpr uint64_t kShuffleStream = 0x5348;

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage '") + name + "': " + e.what());
  }
}

void update_running_stats(Graph& graph, const ExecResult& result, const Shape& input_shape,
                          const ShapeMap& shapes) {
  (void)input_shape;
  for (const auto& [id, stats] : result.batch_stats) {
    Node& n = graph.mutable_node(id);
    const Shape& s = shapes.at(PortRef{id, 0});
    const double count = static_cast<double>(shape_numel(s) / s[1]);
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    Tensor& mean = n.params.at("running_mean");
    Tensor& var = n.params.at("running_var");
    for (int64_t c = 0; c < mean.numel(); ++c) {
      mean[c] = (1.0f - kBatchNormMomentum) * mean[c] + kBatchNormMomentum * stats.first[c];
      var[c] = (1.0f - kBatchNormMomentum) * var[c] +
               kBatchNormMomentum * static_cast<float>(stats.second[c] * unbias);
    }
  }
}

}  // namespace

void validate_config(const TrainConfig& c) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::kUsage, "invalid config: " + m); };
  if (c.epochs < 0) bad("epochs must be >= 0");
  if (c.prune_epoch && (*c.prune_epoch < 0 || *c.prune_epoch >= c.epochs)) {
    bad("prune_epoch must satisfy 0 <= prune_epoch < epochs");
  }
  if (!(c.channel_fraction >= 0.0 && c.channel_fraction < 1.0)) bad("fraction must be in [0, 1)");
  if (c.qat_enabled && c.calibration_batches < 1) bad("calibration_batches must be >= 1 with QAT");
  if (c.batch_size < 2) bad("batch_size must be >= 2");
  if (!(c.learning_rate >= 0.0f) || !(c.momentum >= 0.0f && c.momentum < 1.0f)) {
    bad("learning rate must be >= 0 and momentum in [0, 1)");
  }
  if (c.eval_every < 1) bad("eval_every must be >= 1");
}

std::string format_metric_log(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_acc,phase\n";
  char buf[128];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.4f,", r.epoch, r.train_loss, r.val_acc);
    os << buf << r.phase << "\n";
  }
  return os.str();
}

std::vector<Tensor> calibration_batches(const ToyTask& task, const TrainConfig& config) {
  std::vector<Tensor> batches;
  const int64_t n = task.train_images().dim(0);
  for (int b = 0; b < config.calibration_batches; ++b) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < config.batch_size; ++i) idx.push_back((b * config.batch_size + i) % n);
    batches.push_back(ToyTask::gather(task.train_images(), idx));
  }
  return batches;
}

TrainState start_training(const Graph& graph, const ToyTask& task, const TrainConfig& config) {
  validate_config(config);
  TrainState state;
  state.graph = graph;
  if (config.qat_enabled) {
    if (!is_instrumented(graph)) state.graph = insert_fakequant(graph);
    const std::vector<Tensor> batches = calibration_batches(task, config);
    state.graph = calibrate(state.graph, batches, nullptr, ExecMode::kTraining);
  }
  return state;
}

double evaluate(const Graph& graph, const Tensor& images, const std::vector<int>& labels, int batch_size) {
  const int64_t n = images.dim(0);
  int64_t correct = 0;
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min<int64_t>(n, start + batch_size); ++i) idx.push_back(i);
    const Tensor logits = forward(graph, ToyTask::gather(images, idx), {kLogitsOutput}).at(kLogitsOutput);
    const int64_t K = logits.dim(1);
    for (size_t b = 0; b < idx.size(); ++b) {
      const float* row = logits.ptr() + static_cast<int64_t>(b) * K;
      const auto best = std::max_element(row, row + K) - row;
      if (best == labels[static_cast<size_t>(idx[b])]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void train_until(TrainState& state, const ToyTask& task, const TrainConfig& config, int end_epoch,
                 std::vector<EpochRecord>* log) {
  validate_config(config);
  const Tensor& images = task.train_images();
  const std::vector<int>& labels = task.train_labels();
  const int64_t n = images.dim(0);
  ExecOptions options;
  options.mode = ExecMode::kTraining;
  options.outputs = {kLogitsOutput};

  for (int epoch = state.epoch + 1; epoch <= end_epoch; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(derive_seed(config.seed, kShuffleStream), static_cast<uint64_t>(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (int64_t start = 0; start + 1 < n; start += config.batch_size) {
      const std::vector<int64_t> idx(order.begin() + start,
                                     order.begin() + std::min<int64_t>(n, start + config.batch_size));
      std::vector<int> y;
      for (int64_t i : idx) y.push_back(labels[static_cast<size_t>(i)]);
      const Tensor x = ToyTask::gather(images, idx);

      Tape tape;
      ExecResult result = execute(state.graph, tape, tape.constant(x), options);
      Var loss = ad::softmax_cross_entropy(tape, result.outputs.at(kLogitsOutput), y);
      const float value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        fail_validation("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                        std::to_string(value) + ")");
      }
      loss_sum += value;
      ++batches;

      const GradientMap grads = tape.backward(loss);
      for (const auto& [key, g] : grads) {
        const size_t slash = key.rfind('/');
        Tensor& w = state.graph.mutable_node(key.substr(0, slash)).params.at(key.substr(slash + 1));
        Tensor& v = state.velocity[key];
        if (v.shape() != w.shape()) v = Tensor(w.shape());
        for (int64_t i = 0; i < w.numel(); ++i) {
          v[i] = config.momentum * v[i] + g[i];
          w[i] -= config.learning_rate * v[i];
        }
      }
      update_running_stats(state.graph, result, x.shape(), infer_shapes(state.graph, x.shape()));
    }

    state.epoch = epoch;
    if (epoch % config.eval_every == 0 || epoch == end_epoch || epoch == config.epochs) {
      state.last_val_acc = evaluate(state.graph, task.val_images(), task.val_labels(), config.batch_size);
    }
    if (log) {
      log->push_back(EpochRecord{epoch, batches ? loss_sum / batches : 0.0, state.last_val_acc, state.phase});
    }
  }
}

PrunePlan prune_state(TrainState& state, const ToyTask& task, const TrainConfig& config, double fraction) {
  const GroupAnalysis analysis = resolve_groups(state.graph);
  PrunePlan plan = make_plan(state.graph, analysis, fraction, state.epoch);
  state.graph = apply_prune(state.graph, analysis, plan);
  if (is_instrumented(state.graph)) {
    // Scales fitted to dense activations are stale for the slim graph.
    state.graph = calibrate(state.graph, calibration_batches(task, config), nullptr, ExecMode::kTraining);
  }
  state.velocity.clear();
  state.phase = "pruned";
  return plan;
}

Graph train(const Graph& graph, const ToyTask& task, const TrainConfig& config, std::vector<EpochRecord>* log) {
  TrainState state = start_training(graph, task, config);
  train_until(state, task, config, config.epochs, log);
  return state.graph;
}

PipelineResult run_compression_pipeline(Preset preset, const ToyTask& task, const TrainConfig& config) {
  validate_config(config);
  PipelineResult r;
  const int64_t S = task.config().image_size;
  const Graph built = stage("build", [&] {
    return build_mini_net(preset, Shape{1, 3, S, S}, task.n_classes(), config.seed);
  });
  TrainState state = stage("calibrate", [&] { return start_training(built, task, config); });
  const int prune_at = config.prune_epoch.value_or(config.epochs);
  stage("train", [&] { train_until(state, task, config, prune_at, &r.log); });
  r.dense = state.graph;
  r.dense_accuracy = evaluate(r.dense, task.val_images(), task.val_labels(), config.batch_size);

  if (config.prune_epoch) {
    r.plan = stage("prune", [&] { return prune_state(state, task, config, config.channel_fraction); });
  } else {
    r.plan.channel_fraction = config.channel_fraction;
    r.plan.group_count = static_cast<int>(resolve_groups(r.dense).groups.size());
  }
  stage("fine-tune", [&] { train_until(state, task, config, config.epochs, &r.log); });
  r.slim = state.graph;
  r.slim_accuracy = evaluate(r.slim, task.val_images(), task.val_labels(), config.batch_size);
  r.calibration = calibration_entries(r.slim);

  stage("export", [&] {
    r.fp32_bytes = serialize_model(r.slim, 32);
    Fp16Export fp16 = export_fp16(r.slim);
    r.fp16_bytes = std::move(fp16.bytes);
    r.casts = std::move(fp16.casts);
    const LoadedModel reloaded = deserialize_model(r.fp16_bytes);
    r.fp16_accuracy = evaluate(reloaded.graph, task.val_images(), task.val_labels(), config.batch_size);
  });

  const int64_t dense_params = count_params(r.dense);
  r.reports.push_back(make_report(r.dense, "dense", 32, 0.0, dense_params, r.dense_accuracy));
  r.reports.push_back(make_report(r.slim, "pruned", 32, config.channel_fraction, dense_params, r.slim_accuracy));
  r.reports.push_back(make_report(r.slim, "pruned", 16, config.channel_fraction, dense_params, r.fp16_accuracy));
  return r;
}

void write_pipeline_artifacts(const PipelineResult& result, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail_format("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path d(dir);
  write_file_atomic((d / "model_fp32.twnm").string(), result.fp32_bytes);
  write_file_atomic((d / "model_fp16.twnm").string(), result.fp16_bytes);
  write_text_atomic((d / "plan.txt").string(), format_plan(result.plan));
  write_text_atomic((d / "calib.txt").string(), format_calibration(result.calibration));
  write_text_atomic((d / "metrics.csv").string(), format_metric_log(result.log));
  const ReportTables tables = emit_report(result.reports);
  write_text_atomic((d / "report.csv").string(), tables.csv);
  write_text_atomic((d / "report.txt").string(), tables.text);
}

}  // namespace slimgraph
