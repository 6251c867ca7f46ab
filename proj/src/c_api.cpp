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

#include "slimgraph/slimgraph.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "slimgraph/builders.hpp"
#include "slimgraph/depgraph.hpp"
#include "slimgraph/error.hpp"
#include "slimgraph/fakequant.hpp"
#include "slimgraph/metrics.hpp"
#include "slimgraph/modelio.hpp"
#include "slimgraph/pipeline.hpp"
#include "slimgraph/pruner.hpp"
#include "slimgraph/toytask.hpp"

using namespace slimgraph;

struct sg_model {
  Graph graph;
  int precision_bits = 32;
};

struct sg_plan {
  PrunePlan plan;
};

namespace {

thread_local std::string g_last_error;

sg_status fail(sg_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `fn`, mapping exceptions onto status codes.
template <typename Fn>
sg_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const Error& e) {
    return fail(static_cast<sg_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SG_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::kUsage, std::string(what) + " must not be NULL");
}

// The default toy task, with the class count from the model metadata and
// the image size from its input shape.
ToyTask task_for(const Graph& graph) {
  ToyTaskConfig tc;
  auto it = graph.meta().find("n_classes");
  if (it == graph.meta().end()) fail_validation("model has no n_classes metadata; it cannot be trained");
  tc.n_classes = std::stoi(it->second);
  tc.image_size = static_cast<int>(graph.input_shape().at(2));
  return ToyTask(tc);
}

}  // namespace

extern "C" {

const char* sg_version(void) { return "1.0.0"; }

const char* sg_last_error(void) { return g_last_error.c_str(); }

void sg_string_free(char* s) { std::free(s); }

sg_status sg_model_build(const char* preset, int n_classes, uint64_t seed, sg_model** out) {
  return guarded([&] {
    require(preset, "preset");
    require(out, "out");
    auto m = std::make_unique<sg_model>();
    m->graph = build_mini_net(preset_from_name(preset), Shape{1, 3, 64, 64}, n_classes, seed);
    *out = m.release();
    return SG_OK;
  });
}

sg_status sg_model_load(const char* path, sg_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    LoadedModel loaded = load_model(path);
    auto m = std::make_unique<sg_model>();
    m->graph = std::move(loaded.graph);
    m->precision_bits = loaded.precision_bits;
    *out = m.release();
    return SG_OK;
  });
}

sg_status sg_model_save(const sg_model* model, int precision_bits, const char* path,
                        uint64_t* bytes_written) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    if (precision_bits != 32 && precision_bits != 16) {
      throw Error(ErrorCode::kUsage, "precision must be 32 or 16");
    }
    size_t n = 0;
    if (precision_bits == 16) {
      const Fp16Export e = export_fp16(model->graph);
      write_file_atomic(path, e.bytes);
      n = e.bytes.size();
    } else {
      n = save_model(model->graph, 32, path);
    }
    if (bytes_written) *bytes_written = n;
    return SG_OK;
  });
}

sg_status sg_model_clone(const sg_model* model, sg_model** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new sg_model(*model);
    return SG_OK;
  });
}

void sg_model_free(sg_model* model) { delete model; }

sg_status sg_model_precision(const sg_model* model, int* bits) {
  return guarded([&] {
    require(model, "model");
    require(bits, "bits");
    *bits = model->precision_bits;
    return SG_OK;
  });
}

sg_status sg_model_name(const sg_model* model, char** name) {
  return guarded([&] {
    require(model, "model");
    require(name, "name");
    *name = dup_string(model->graph.name());
    return SG_OK;
  });
}

sg_status sg_model_param_count(const sg_model* model, int64_t* params) {
  return guarded([&] {
    require(model, "model");
    require(params, "params");
    *params = count_params(model->graph);
    return SG_OK;
  });
}

sg_status sg_model_flops(const sg_model* model, int64_t* flops) {
  return guarded([&] {
    require(model, "model");
    require(flops, "flops");
    *flops = count_flops(model->graph, model->graph.input_shape());
    return SG_OK;
  });
}

sg_status sg_model_group_count(const sg_model* model, int* groups) {
  return guarded([&] {
    require(model, "model");
    require(groups, "groups");
    *groups = static_cast<int>(resolve_groups(model->graph).groups.size());
    return SG_OK;
  });
}

sg_status sg_model_dump_groups(const sg_model* model, char** text) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    *text = dup_string(dump_groups(model->graph, resolve_groups(model->graph)));
    return SG_OK;
  });
}

sg_status sg_model_describe(const sg_model* model, char** text) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    const Graph& g = model->graph;
    const ShapeMap shapes = infer_shapes(g);
    std::ostringstream os;
    for (const Node& n : g.nodes()) {
      os << n.id << " " << to_string(n.kind);
      if (!n.inputs.empty()) {
        os << " <-";
        for (const PortRef& in : n.inputs) os << " " << to_string(in);
      }
      for (int p = 0; p < n.num_outputs(); ++p) os << " " << shape_to_string(shapes.at(PortRef{n.id, p}));
      if (n.is_protected) os << " protected";
      os << "\n";
    }
    *text = dup_string(os.str());
    return SG_OK;
  });
}

sg_status sg_model_instrument(sg_model* model) {
  return guarded([&] {
    require(model, "model");
    model->graph = insert_fakequant(model->graph);
    return SG_OK;
  });
}

int sg_model_is_instrumented(const sg_model* model) {
  return model && is_instrumented(model->graph) ? 1 : 0;
}

sg_status sg_model_calibrate(sg_model* model, int batches, char** calib_text) {
  return guarded([&] {
    require(model, "model");
    if (batches < 1) throw Error(ErrorCode::kUsage, "batches must be >= 1");
    const ToyTask task = task_for(model->graph);
    TrainConfig config;
    config.qat_enabled = true;
    config.calibration_batches = batches;
    Graph g = is_instrumented(model->graph) ? model->graph : insert_fakequant(model->graph);
    std::vector<CalibrationEntry> entries;
    g = calibrate(g, calibration_batches(task, config), &entries, ExecMode::kTraining);
    std::string text = format_calibration(entries);
    model->graph = std::move(g);
    if (calib_text) *calib_text = dup_string(text);
    return SG_OK;
  });
}

sg_status sg_model_train(sg_model* model, int epochs, uint64_t seed, double learning_rate,
                         char** log_text) {
  return guarded([&] {
    require(model, "model");
    const ToyTask task = task_for(model->graph);
    TrainConfig config;
    config.epochs = epochs;
    config.seed = seed;
    config.learning_rate = static_cast<float>(learning_rate);
    config.qat_enabled = is_instrumented(model->graph);
    validate_config(config);
    TrainState state;
    state.graph = model->graph;
    std::vector<EpochRecord> log;
    train_until(state, task, config, epochs, &log);
    model->graph = std::move(state.graph);
    if (log_text) *log_text = dup_string(format_metric_log(log));
    return SG_OK;
  });
}

sg_status sg_model_evaluate(const sg_model* model, double* accuracy) {
  return guarded([&] {
    require(model, "model");
    require(accuracy, "accuracy");
    const ToyTask task = task_for(model->graph);
    *accuracy = evaluate(model->graph, task.val_images(), task.val_labels());
    return SG_OK;
  });
}

sg_status sg_plan_make(const sg_model* model, double fraction, sg_plan** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    auto p = std::make_unique<sg_plan>();
    p->plan = make_plan(model->graph, resolve_groups(model->graph), fraction);
    *out = p.release();
    return SG_OK;
  });
}

sg_status sg_plan_parse(const char* text, sg_plan** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    auto p = std::make_unique<sg_plan>();
    p->plan = parse_plan(text);
    *out = p.release();
    return SG_OK;
  });
}

sg_status sg_plan_load(const char* path, sg_plan** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto p = std::make_unique<sg_plan>();
    p->plan = parse_plan(read_text(path));
    *out = p.release();
    return SG_OK;
  });
}

sg_status sg_plan_format(const sg_plan* plan, char** text) {
  return guarded([&] {
    require(plan, "plan");
    require(text, "text");
    *text = dup_string(format_plan(plan->plan));
    return SG_OK;
  });
}

sg_status sg_plan_save(const sg_plan* plan, const char* path) {
  return guarded([&] {
    require(plan, "plan");
    require(path, "path");
    write_text_atomic(path, format_plan(plan->plan));
    return SG_OK;
  });
}

void sg_plan_free(sg_plan* plan) { delete plan; }

sg_status sg_plan_validate(const sg_plan* plan, const sg_model* model) {
  return guarded([&] {
    require(plan, "plan");
    require(model, "model");
    validate_plan(resolve_groups(model->graph), plan->plan);
    return SG_OK;
  });
}

sg_status sg_model_prune(const sg_model* dense, const sg_plan* plan, sg_model** out) {
  return guarded([&] {
    require(dense, "dense");
    require(plan, "plan");
    require(out, "out");
    auto m = std::make_unique<sg_model>();
    m->graph = apply_prune(dense->graph, plan->plan);
    m->precision_bits = dense->precision_bits;
    *out = m.release();
    return SG_OK;
  });
}

sg_status sg_verify(const sg_model* dense, const sg_model* slim, const sg_plan* plan, int trials,
                    double tol, uint64_t seed, sg_verify_result* result) {
  return guarded([&] {
    require(dense, "dense");
    require(slim, "slim");
    require(plan, "plan");
    const EquivalenceResult r =
        check_prune_equivalence(dense->graph, slim->graph, plan->plan, trials, tol, seed);
    if (result) *result = sg_verify_result{r.trials, r.failures, r.worst_rel_error};
    if (r.failures > 0) {
      return fail(SG_ERR_VALIDATION, std::to_string(r.failures) + " of " + std::to_string(r.trials) +
                                         " trials failed; first: " + r.first_failure);
    }
    return SG_OK;
  });
}

sg_status sg_report(const sg_model* const* models, size_t count, char** csv, char** text) {
  return guarded([&] {
    require(models, "models");
    if (count == 0) throw Error(ErrorCode::kUsage, "report needs at least one model");
    for (size_t i = 0; i < count; ++i) require(models[i], "models[i]");
    const int64_t dense = count_params(models[0]->graph);
    std::vector<CompressionReport> reports;
    for (size_t i = 0; i < count; ++i) {
      const Graph& g = models[i]->graph;
      auto stage = g.meta().find("stage");
      auto fraction = g.meta().find("channel_fraction");
      reports.push_back(make_report(g, stage != g.meta().end() ? stage->second : "dense",
                                    models[i]->precision_bits,
                                    fraction != g.meta().end() ? std::stod(fraction->second) : 0.0,
                                    dense));
    }
    const ReportTables tables = emit_report(reports);
    if (csv) *csv = dup_string(tables.csv);
    if (text) *text = dup_string(tables.text);
    return SG_OK;
  });
}

void sg_pipeline_config_init(sg_pipeline_config* config) {
  if (!config) return;
  const TrainConfig d;
  config->preset = "ecoweed_mini";
  config->fraction = 0.3;
  config->prune_epoch = 150;
  config->epochs = d.epochs;
  config->qat = 0;
  config->calibration_batches = d.calibration_batches;
  config->learning_rate = d.learning_rate;
  config->momentum = d.momentum;
  config->batch_size = d.batch_size;
  config->seed = d.seed;
}

sg_status sg_pipeline_run(const sg_pipeline_config* config, const char* out_dir, char** summary) {
  return guarded([&] {
    require(config, "config");
    require(config->preset, "config->preset");
    require(out_dir, "out_dir");
    TrainConfig tc;
    tc.epochs = config->epochs;
    if (config->prune_epoch >= 0) tc.prune_epoch = config->prune_epoch;
    tc.channel_fraction = config->fraction;
    tc.qat_enabled = config->qat != 0;
    tc.calibration_batches = config->calibration_batches;
    tc.learning_rate = static_cast<float>(config->learning_rate);
    tc.momentum = static_cast<float>(config->momentum);
    tc.batch_size = config->batch_size;
    tc.seed = config->seed;
    validate_config(tc);
    const Preset preset = preset_from_name(config->preset);
    ToyTaskConfig task_config;
    const ToyTask task(task_config);
    const PipelineResult r = run_compression_pipeline(preset, task, tc);
    write_pipeline_artifacts(r, out_dir);
    if (summary) *summary = dup_string(emit_report(r.reports).text);
    return SG_OK;
  });
}

}  // extern "C"
