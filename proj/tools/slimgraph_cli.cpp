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

// slimgraph command-line tool. Exit codes: 0 success, 1 usage error,
// 2 validation or verification failure, 3 I/O or format error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "slimgraph/slimgraph.h"

namespace {

// Carries a status out of a subcommand handler.
struct Failure {
  sg_status status;
  std::string message;
};

void check(sg_status s) {
  if (s != SG_OK) throw Failure{s, sg_last_error()};
}

struct ModelDeleter {
  void operator()(sg_model* m) const { sg_model_free(m); }
};
struct PlanDeleter {
  void operator()(sg_plan* p) const { sg_plan_free(p); }
};
using Model = std::unique_ptr<sg_model, ModelDeleter>;
using Plan = std::unique_ptr<sg_plan, PlanDeleter>;

// Takes ownership of a C string from the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  sg_string_free(s);
  return out;
}

Model load(const std::string& path) {
  sg_model* m = nullptr;
  check(sg_model_load(path.c_str(), &m));
  return Model(m);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text) || !f.flush()) throw Failure{SG_ERR_FORMAT, "cannot write '" + path + "'"};
}

// Prints the resolved configuration before a subcommand runs.
class Echo {
 public:
  explicit Echo(std::string command) : line_("config: command=" + std::move(command)) {}
  template <typename T>
  Echo& add(const std::string& key, const T& value) {
    std::ostringstream os;
    os << value;
    line_ += " " + key + "=" + os.str();
    return *this;
  }
  void print() const { std::cout << line_ << std::endl; }

 private:
  std::string line_;
};

std::string summary(const sg_model* m) {
  int64_t params = 0, flops = 0;
  check(sg_model_param_count(m, &params));
  check(sg_model_flops(m, &flops));
  return "params=" + std::to_string(params) + " flops=" + std::to_string(flops);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slimgraph: structured channel pruning and simulated quantization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sg_version()));

  uint64_t seed = 1;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed")->envname("SLIMGRAPH_SEED")->capture_default_str();
  };

  std::string preset = "ecoweed_mini", out, model_path, log_path, plan_out, plan_path, out_dir;
  int classes = 3, epochs = 250, batches = 2, trials = 100, prune_epoch = 150;
  double fraction = 0.3, tol = 1e-5, lr = 0.005;
  bool qat = false;
  std::vector<std::string> models;
  std::string dense_path, slim_path, csv_path, calib_out;

  auto* build = app.add_subcommand("build", "build a preset network");
  build->add_option("--preset", preset, "ecoweed_mini | y11_mini | y12_mini")->capture_default_str();
  build->add_option("--classes", classes, "classifier classes")->capture_default_str();
  build->add_option("--out", out, "output model")->required();
  add_seed(build);

  auto* train = app.add_subcommand("train", "train a model on the toy task");
  train->add_option("--model", model_path, "input model")->required();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--lr", lr, "learning rate")->capture_default_str();
  train->add_option("--log", log_path, "metric log (csv)");
  train->add_option("--out", out, "output model (default: overwrite --model)");
  add_seed(train);

  auto* prune = app.add_subcommand("prune", "uniform l1 channel prune");
  prune->add_option("--model", model_path)->required();
  prune->add_option("--fraction", fraction)->required();
  prune->add_option("--plan-out", plan_out, "plan sidecar");
  prune->add_option("--out", out, "slim model")->required();

  auto* calib = app.add_subcommand("calibrate", "calibrate activation quantizers");
  calib->add_option("--model", model_path)->required();
  calib->add_option("--batches", batches)->capture_default_str();
  calib->add_option("--calib-out", calib_out, "calibration sidecar");
  calib->add_option("--out", out)->required();

  auto* qat_cmd = app.add_subcommand("qat", "instrument, calibrate and train under simulated int8");
  qat_cmd->add_option("--model", model_path)->required();
  qat_cmd->add_option("--epochs", epochs)->capture_default_str();
  qat_cmd->add_option("--batches", batches, "calibration batches")->capture_default_str();
  qat_cmd->add_option("--lr", lr)->capture_default_str();
  qat_cmd->add_option("--log", log_path);
  qat_cmd->add_option("--out", out)->required();
  add_seed(qat_cmd);

  auto* pipe = app.add_subcommand("pipeline", "build, train, prune, fine-tune and export");
  pipe->add_option("--preset", preset)->capture_default_str();
  pipe->add_option("--fraction", fraction)->capture_default_str();
  pipe->add_option("--prune-epoch", prune_epoch, "negative disables pruning")->capture_default_str();
  pipe->add_option("--epochs", epochs)->capture_default_str();
  pipe->add_option("--batches", batches, "calibration batches")->capture_default_str();
  pipe->add_option("--lr", lr)->capture_default_str();
  pipe->add_flag("--qat", qat, "train under simulated int8");
  pipe->add_option("--out-dir", out_dir)->required();
  add_seed(pipe);

  auto* verify = app.add_subcommand("verify", "prune-equivalence oracle");
  verify->add_option("--dense", dense_path)->required();
  verify->add_option("--slim", slim_path)->required();
  verify->add_option("--plan", plan_path)->required();
  verify->add_option("--trials", trials)->capture_default_str();
  verify->add_option("--tol", tol)->capture_default_str();
  add_seed(verify);

  auto* report = app.add_subcommand("report", "parameter, FLOP and size table");
  report->add_option("--models", models, "first model is the ratio reference")->required();
  report->add_option("--csv", csv_path, "also write the csv table here");

  auto* inspect = app.add_subcommand("inspect", "list nodes and channel groups");
  inspect->add_option("--model", model_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*build) {
      Echo("build").add("preset", preset).add("classes", classes).add("seed", seed).add("out", out).print();
      sg_model* m = nullptr;
      check(sg_model_build(preset.c_str(), classes, seed, &m));
      Model model(m);
      check(sg_model_save(model.get(), 32, out.c_str(), nullptr));
      std::cout << "built " << preset << " " << summary(model.get()) << std::endl;
    } else if (*train || *qat_cmd) {
      const bool is_qat = qat_cmd->parsed();
      if (out.empty()) out = model_path;
      Echo e(is_qat ? "qat" : "train");
      e.add("model", model_path).add("epochs", epochs).add("lr", lr).add("seed", seed);
      if (is_qat) e.add("batches", batches);
      e.add("log", log_path.empty() ? "-" : log_path).add("out", out).print();
      Model model = load(model_path);
      if (is_qat) {
        char* calib_text = nullptr;
        check(sg_model_calibrate(model.get(), batches, &calib_text));
        sg_string_free(calib_text);
      }
      char* log = nullptr;
      check(sg_model_train(model.get(), epochs, seed, lr, &log));
      const std::string log_text = take(log);
      if (!log_path.empty()) write_text(log_path, log_text);
      double acc = 0.0;
      check(sg_model_evaluate(model.get(), &acc));
      check(sg_model_save(model.get(), 32, out.c_str(), nullptr));
      std::printf("trained %d epochs, val_acc=%.4f\n", epochs, acc);
    } else if (*prune) {
      Echo("prune").add("model", model_path).add("fraction", fraction)
          .add("plan_out", plan_out.empty() ? "-" : plan_out).add("out", out).print();
      Model dense = load(model_path);
      sg_plan* p = nullptr;
      check(sg_plan_make(dense.get(), fraction, &p));
      Plan plan(p);
      sg_model* s = nullptr;
      check(sg_model_prune(dense.get(), plan.get(), &s));
      Model slim(s);
      int bits = 32;
      check(sg_model_precision(dense.get(), &bits));
      check(sg_model_save(slim.get(), bits, out.c_str(), nullptr));
      if (!plan_out.empty()) check(sg_plan_save(plan.get(), plan_out.c_str()));
      std::cout << "dense " << summary(dense.get()) << "\nslim  " << summary(slim.get()) << std::endl;
    } else if (*calib) {
      Echo("calibrate").add("model", model_path).add("batches", batches).add("out", out).print();
      Model model = load(model_path);
      char* text = nullptr;
      check(sg_model_calibrate(model.get(), batches, &text));
      const std::string calib_text = take(text);
      check(sg_model_save(model.get(), 32, out.c_str(), nullptr));
      if (!calib_out.empty()) write_text(calib_out, calib_text);
      std::cout << calib_text;
    } else if (*pipe) {
      sg_pipeline_config c;
      sg_pipeline_config_init(&c);
      c.preset = preset.c_str();
      c.fraction = fraction;
      c.prune_epoch = prune_epoch;
      c.epochs = epochs;
      c.qat = qat ? 1 : 0;
      c.calibration_batches = batches;
      c.learning_rate = lr;
      c.seed = seed;
      Echo("pipeline").add("preset", preset).add("fraction", fraction).add("prune_epoch", prune_epoch)
          .add("epochs", epochs).add("qat", qat ? "on" : "off").add("batches", batches).add("lr", lr)
          .add("momentum", c.momentum).add("batch_size", c.batch_size).add("seed", seed)
          .add("out_dir", out_dir).print();
      char* text = nullptr;
      check(sg_pipeline_run(&c, out_dir.c_str(), &text));
      std::cout << take(text);
    } else if (*verify) {
      Echo("verify").add("dense", dense_path).add("slim", slim_path).add("plan", plan_path)
          .add("trials", trials).add("tol", tol).add("seed", seed).print();
      Model dense = load(dense_path);
      Model slim = load(slim_path);
      sg_plan* p = nullptr;
      check(sg_plan_load(plan_path.c_str(), &p));
      Plan plan(p);
      sg_verify_result r{};
      const sg_status s = sg_verify(dense.get(), slim.get(), plan.get(), trials, tol, seed, &r);
      if (s == SG_OK || r.trials > 0) {
        std::printf("verify: %d/%d trials passed, worst relative error %.3g (tol %.3g)\n",
                    r.trials - r.failures, r.trials, r.worst_rel_error, tol);
      }
      check(s);
    } else if (*report) {
      Echo e("report");
      for (const std::string& m : models) e.add("model", m);
      e.add("csv", csv_path.empty() ? "-" : csv_path).print();
      std::vector<Model> owned;
      std::vector<const sg_model*> handles;
      for (const std::string& m : models) {
        owned.push_back(load(m));
        handles.push_back(owned.back().get());
      }
      char* csv = nullptr;
      char* text = nullptr;
      check(sg_report(handles.data(), handles.size(), &csv, &text));
      const std::string csv_text = take(csv);
      if (!csv_path.empty()) write_text(csv_path, csv_text);
      std::cout << take(text);
    } else if (*inspect) {
      Echo("inspect").add("model", model_path).print();
      Model model = load(model_path);
      char* text = nullptr;
      check(sg_model_describe(model.get(), &text));
      std::cout << take(text);
      check(sg_model_dump_groups(model.get(), &text));
      std::cout << take(text);
      std::cout << summary(model.get()) << std::endl;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << std::endl;
    return static_cast<int>(f.status) == SG_ERR_INTERNAL ? 3 : static_cast<int>(f.status);
  }
  return 0;
}
