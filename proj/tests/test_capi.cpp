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


#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "slimgraph/slimgraph.h"

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const char* f) const { return (path / f).string(); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  sg_string_free(s);
  return out;
}

sg_model* build(const char* preset = "ecoweed_mini", uint64_t seed = 1) {
  sg_model* m = nullptr;
  REQUIRE(sg_model_build(preset, 3, seed, &m) == SG_OK);
  return m;
}

}  // namespace

TEST_CASE("c api: argument checking and error reporting") {
  CHECK(std::strlen(sg_version()) > 0);
  sg_model* m = nullptr;
  CHECK(sg_model_build(nullptr, 3, 1, &m) == SG_ERR_USAGE);
  CHECK(m == nullptr);
  CHECK(std::strlen(sg_last_error()) > 0);
  CHECK(sg_model_build("resnet", 3, 1, &m) == SG_ERR_USAGE);
  CHECK(std::string(sg_last_error()).find("resnet") != std::string::npos);
  CHECK(sg_model_build("y11_mini", 0, 1, &m) != SG_OK);
  CHECK(sg_model_load("/nonexistent/model.twnm", &m) == SG_ERR_FORMAT);
  int64_t n = 0;
  CHECK(sg_model_param_count(nullptr, &n) == SG_ERR_USAGE);
  sg_model_free(nullptr);
  sg_plan_free(nullptr);
  sg_string_free(nullptr);

  m = build();
  CHECK(sg_model_param_count(m, &n) == SG_OK);
  CHECK(std::strlen(sg_last_error()) == 0);
  CHECK(sg_model_save(m, 8, "/tmp/x.twnm", nullptr) == SG_ERR_USAGE);
  sg_model_free(m);
}

TEST_CASE("c api: model queries, save and load") {
  TempDir dir("slimgraph_capi_models");
  sg_model* m = build("y12_mini");
  char* name = nullptr;
  REQUIRE(sg_model_name(m, &name) == SG_OK);
  CHECK(take(name) == "y12_mini");
  int64_t params = 0, flops = 0;
  int groups = 0, bits = 0;
  CHECK(sg_model_param_count(m, &params) == SG_OK);
  CHECK(sg_model_flops(m, &flops) == SG_OK);
  CHECK(sg_model_group_count(m, &groups) == SG_OK);
  CHECK(params > 0);
  CHECK(flops > 2 * params);
  CHECK(groups > 10);
  char* text = nullptr;
  REQUIRE(sg_model_dump_groups(m, &text) == SG_OK);
  CHECK(take(text).find("group 0") != std::string::npos);
  REQUIRE(sg_model_describe(m, &text) == SG_OK);
  CHECK(take(text).find("out.logits") != std::string::npos);

  uint64_t written32 = 0, written16 = 0;
  REQUIRE(sg_model_save(m, 32, (dir / "a.twnm").c_str(), &written32) == SG_OK);
  REQUIRE(sg_model_save(m, 16, (dir / "h.twnm").c_str(), &written16) == SG_OK);
  CHECK(written16 < written32);
  CHECK(written32 == std::filesystem::file_size(dir / "a.twnm"));

  sg_model* back = nullptr;
  REQUIRE(sg_model_load((dir / "h.twnm").c_str(), &back) == SG_OK);
  CHECK(sg_model_precision(back, &bits) == SG_OK);
  CHECK(bits == 16);
  int64_t back_params = 0;
  CHECK(sg_model_param_count(back, &back_params) == SG_OK);
  CHECK(back_params == params);
  sg_model_free(back);

  sg_model* copy = nullptr;
  REQUIRE(sg_model_clone(m, &copy) == SG_OK);
  REQUIRE(sg_model_save(copy, 32, (dir / "b.twnm").c_str(), nullptr) == SG_OK);
  CHECK(std::filesystem::file_size(dir / "b.twnm") == written32);
  sg_model_free(copy);
  sg_model_free(m);
}

TEST_CASE("c api: plans, pruning and verification") {
  sg_model* dense = build();
  sg_plan* plan = nullptr;
  CHECK(sg_plan_make(dense, 1.5, &plan) == SG_ERR_VALIDATION);
  REQUIRE(sg_plan_make(dense, 0.3, &plan) == SG_OK);
  CHECK(sg_plan_validate(plan, dense) == SG_OK);
  char* text = nullptr;
  REQUIRE(sg_plan_format(plan, &text) == SG_OK);
  const std::string formatted = take(text);

  sg_plan* parsed = nullptr;
  REQUIRE(sg_plan_parse(formatted.c_str(), &parsed) == SG_OK);
  REQUIRE(sg_plan_format(parsed, &text) == SG_OK);
  CHECK(take(text) == formatted);

  sg_model* slim = nullptr;
  REQUIRE(sg_model_prune(dense, plan, &slim) == SG_OK);
  sg_verify_result r{};
  CHECK(sg_verify(dense, slim, plan, 10, 1e-5, 1, &r) == SG_OK);
  CHECK(r.trials == 10);
  CHECK(r.failures == 0);
  CHECK(r.worst_rel_error <= 1e-5);
  // The dense model does not have the planned shapes.
  CHECK(sg_verify(dense, dense, plan, 1, 1e-5, 1, &r) == SG_ERR_VALIDATION);

  // Out-of-range removal index for group 1.
  sg_plan* bad = nullptr;
  REQUIRE(sg_plan_parse("group 1 remove 999\n", &bad) == SG_OK);
  CHECK(sg_plan_validate(bad, dense) == SG_ERR_VALIDATION);
  CHECK(std::string(sg_last_error()).find("group 1") != std::string::npos);
  sg_model* none = nullptr;
  CHECK(sg_model_prune(dense, bad, &none) == SG_ERR_VALIDATION);
  CHECK(none == nullptr);
  CHECK(sg_plan_parse("group x\n", &bad) == SG_ERR_FORMAT);

  const sg_model* models[] = {dense, slim};
  char* csv = nullptr;
  REQUIRE(sg_report(models, 2, &csv, nullptr) == SG_OK);
  const std::string table = take(csv);
  CHECK(table.find(",dense,") != std::string::npos);
  CHECK(table.find(",pruned,") != std::string::npos);
  CHECK(sg_report(models, 0, &csv, nullptr) == SG_ERR_USAGE);

  sg_plan_free(bad);
  sg_plan_free(parsed);
  sg_plan_free(plan);
  sg_model_free(slim);
  sg_model_free(dense);
}

TEST_CASE("c api: quantization and training") {
  sg_model* m = build("y11_mini");
  CHECK(sg_model_is_instrumented(m) == 0);
  char* calib = nullptr;
  REQUIRE(sg_model_calibrate(m, 1, &calib) == SG_OK);
  CHECK(sg_model_is_instrumented(m) == 1);
  CHECK(take(calib).find(".fq") != std::string::npos);
  CHECK(sg_model_instrument(m) == SG_ERR_VALIDATION);

  char* log = nullptr;
  REQUIRE(sg_model_train(m, 1, 1, 0.005, &log) == SG_OK);
  CHECK(take(log).rfind("epoch,train_loss,val_acc,phase\n1,", 0) == 0);
  double acc = -1.0;
  REQUIRE(sg_model_evaluate(m, &acc) == SG_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(sg_model_train(m, -1, 1, 0.005, nullptr) == SG_ERR_USAGE);
  sg_model_free(m);
}

TEST_CASE("c api: pipeline") {
  TempDir dir("slimgraph_capi_pipeline");
  sg_pipeline_config c;
  sg_pipeline_config_init(&c);
  CHECK(c.prune_epoch == 150);
  CHECK(c.epochs == 250);
  CHECK(c.qat == 0);
  CHECK(c.fraction == 0.3);
  c.preset = "y12_mini";
  c.epochs = 2;
  c.prune_epoch = 1;
  c.fraction = 0.3;
  c.qat = 1;
  char* summary = nullptr;
  REQUIRE(sg_pipeline_run(&c, dir.path.c_str(), &summary) == SG_OK);
  CHECK(take(summary).find("# FLOPs") == 0);
  for (const char* f : {"model_fp32.twnm", "model_fp16.twnm", "plan.txt", "calib.txt", "metrics.csv", "report.csv", "report.txt"}) {
    CHECK(std::filesystem::exists(dir.path / f));
  }
  c.prune_epoch = 5;
  CHECK(sg_pipeline_run(&c, dir.path.c_str(), nullptr) == SG_ERR_USAGE);
}
