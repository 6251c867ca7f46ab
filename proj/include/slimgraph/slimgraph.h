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

/*
 * C interface to the slimgraph compression toolkit.
 *
 * Conventions:
 *  - Every fallible call returns an sg_status. On failure the message is
 *    available from sg_last_error() until the next call on the same thread.
 *  - Objects are opaque handles released with their *_free function.
 *    Passing NULL to a *_free function is a no-op.
 *  - Strings returned through char** out-parameters are owned by the caller
 *    and released with sg_string_free().
 *  - Out-parameters are written only on success.
 */

#ifndef SLIMGRAPH_SLIMGRAPH_H_
#define SLIMGRAPH_SLIMGRAPH_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SG_API __declspec(dllexport)
#else
#define SG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the CLI exit codes. */
typedef enum sg_status {
  SG_OK = 0,
  SG_ERR_USAGE = 1,      /* bad argument or configuration */
  SG_ERR_VALIDATION = 2, /* invalid graph or plan, failed verification */
  SG_ERR_FORMAT = 3,     /* I/O, corrupt or unsupported file */
  SG_ERR_INTERNAL = 4
} sg_status;

typedef struct sg_model sg_model;
typedef struct sg_plan sg_plan;

SG_API const char* sg_version(void);

/* Message of the last failed call on this thread ("" if none). */
SG_API const char* sg_last_error(void);

SG_API void sg_string_free(char* s);

/* ---- models ---------------------------------------------------------- */

/* preset: "ecoweed_mini", "y11_mini" or "y12_mini". Input is 1x3x64x64. */
SG_API sg_status sg_model_build(const char* preset, int n_classes, uint64_t seed,
                                sg_model** out);
SG_API sg_status sg_model_load(const char* path, sg_model** out);
/* precision_bits is 32 or 16. bytes_written may be NULL. */
SG_API sg_status sg_model_save(const sg_model* model, int precision_bits, const char* path,
                               uint64_t* bytes_written);
SG_API sg_status sg_model_clone(const sg_model* model, sg_model** out);
SG_API void sg_model_free(sg_model* model);

/* Precision the model was loaded with (32 for built models). */
SG_API sg_status sg_model_precision(const sg_model* model, int* bits);
SG_API sg_status sg_model_name(const sg_model* model, char** name);
SG_API sg_status sg_model_param_count(const sg_model* model, int64_t* params);
/* FLOPs (2 x multiply-accumulates) at the model's declared input shape. */
SG_API sg_status sg_model_flops(const sg_model* model, int64_t* flops);
SG_API sg_status sg_model_group_count(const sg_model* model, int* groups);
/* Channel-group listing, one group header per group plus slot lines. */
SG_API sg_status sg_model_dump_groups(const sg_model* model, char** text);
/* Node listing: "id kind inputs shape" lines. */
SG_API sg_status sg_model_describe(const sg_model* model, char** text);

/* ---- training and quantization --------------------------------------- */

/* Inserts fakequant nodes. Fails if the model is already instrumented. */
SG_API sg_status sg_model_instrument(sg_model* model);
SG_API int sg_model_is_instrumented(const sg_model* model);

/* The toy task is fixed (default generator seed); training seeds only
 * drive the batch order. */

/* Calibrates every quantizer on the first `batches` toy-task batches
 * (instrumenting first if needed). calib_text, if not NULL, receives the
 * sidecar text. */
SG_API sg_status sg_model_calibrate(sg_model* model, int batches, char** calib_text);

/* Momentum SGD on the toy task for `epochs` epochs. An instrumented model
 * trains under simulated quantization. log_text, if not NULL, receives the
 * per-epoch metric log. */
SG_API sg_status sg_model_train(sg_model* model, int epochs, uint64_t seed,
                                double learning_rate, char** log_text);

/* Toy-task validation accuracy of the classifier head. */
SG_API sg_status sg_model_evaluate(const sg_model* model, double* accuracy);

/* ---- pruning ----------------------------------------------------------- */

/* Uniform l1 plan removing floor(fraction * L) channels of every free group. */
SG_API sg_status sg_plan_make(const sg_model* model, double fraction, sg_plan** out);
SG_API sg_status sg_plan_parse(const char* text, sg_plan** out);
SG_API sg_status sg_plan_load(const char* path, sg_plan** out);
SG_API sg_status sg_plan_format(const sg_plan* plan, char** text);
SG_API sg_status sg_plan_save(const sg_plan* plan, const char* path);
SG_API void sg_plan_free(sg_plan* plan);

/* Checks the plan against the model's channel groups. */
SG_API sg_status sg_plan_validate(const sg_plan* plan, const sg_model* model);

/* Slim copy of `dense` with the planned channels removed. */
SG_API sg_status sg_model_prune(const sg_model* dense, const sg_plan* plan, sg_model** out);

typedef struct sg_verify_result {
  int trials;
  int failures;
  double worst_rel_error;
} sg_verify_result;

/* Prune-equivalence oracle: compares `slim` against the zero-embedded dense
 * model on `trials` random inputs. Returns SG_ERR_VALIDATION (with the first
 * failing trial in sg_last_error) when any trial exceeds `tol`; `result` is
 * filled whenever the trials ran. */
SG_API sg_status sg_verify(const sg_model* dense, const sg_model* slim, const sg_plan* plan,
                           int trials, double tol, uint64_t seed, sg_verify_result* result);

/* ---- reports ------------------------------------------------------------ */

/* Report rows for `count` models. The first model is the dense reference for
 * the ratio column. Either output may be NULL. */
SG_API sg_status sg_report(const sg_model* const* models, size_t count, char** csv,
                           char** text);

/* ---- end-to-end pipeline ------------------------------------------------ */

typedef struct sg_pipeline_config {
  const char* preset;
  double fraction;
  int prune_epoch; /* < 0 disables pruning */
  int epochs;
  int qat;
  int calibration_batches;
  double learning_rate;
  double momentum;
  int batch_size;
  uint64_t seed;
} sg_pipeline_config;

/* Fills the defaults used by the CLI. */
SG_API void sg_pipeline_config_init(sg_pipeline_config* config);

/* Runs build, calibrate, train, prune, fine-tune and export, writing the
 * artifacts into out_dir. summary, if not NULL, receives report.txt. */
SG_API sg_status sg_pipeline_run(const sg_pipeline_config* config, const char* out_dir,
                                 char** summary);

#ifdef __cplusplus
}
#endif

#endif /* SLIMGRAPH_SLIMGRAPH_H_ */
