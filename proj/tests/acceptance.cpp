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


// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "slimgraph/builders.hpp"
#include "slimgraph/depgraph.hpp"
#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/fakequant.hpp"
#include "slimgraph/metrics.hpp"
#include "slimgraph/modelio.hpp"
#include "slimgraph/pipeline.hpp"
#include "slimgraph/pruner.hpp"

using namespace slimgraph;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

int failures = 0;

void report(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs > budget_s) {
    if (o.pass) o.detail = "over the runtime budget";
    o.pass = false;
  }
  failures += o.pass ? 0 : 1;
  std::printf("criterion %2d: %s  %s (%.1fs of %.0fs)%s%s\n", id, o.pass ? "PASS" : "FAIL", title, secs, budget_s,
              o.detail.empty() ? "" : " - ", o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

constexpr Preset kPresets[] = {Preset::kEcoweedMini, Preset::kY11Mini, Preset::kY12Mini};
constexpr double kFractions[] = {0.1, 0.3, 0.5};

struct PlanCase {
  Graph dense;
  GroupAnalysis analysis;
  PrunePlan plan;
  Graph slim;
};

std::vector<PlanCase> plan_cases() {
  std::vector<PlanCase> cases;
  uint64_t seed = 100;
  for (Preset p : kPresets) {
    for (double f : kFractions) {
      PlanCase c;
      c.dense = build_mini_net(p, {1, 3, 64, 64}, 3, ++seed);
      c.analysis = resolve_groups(c.dense);
      c.plan = make_plan(c.dense, c.analysis, f);
      c.slim = apply_prune(c.dense, c.analysis, c.plan);
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

// Nearest binary16 value computed in double arithmetic, ties to even.
double half_oracle(float w) {
  const double x = w;
  if (x == 0.0) return x;
  int e = 0;
  std::frexp(std::fabs(x), &e);  // |x| = m * 2^e, m in [0.5, 1)
  const int exp2 = std::max(e - 1, -14);
  const double ulp = std::ldexp(1.0, exp2 - 10);
  return std::nearbyint(x / ulp) * ulp;
}

int run_cli(const std::string& args) {
  const std::string cmd = "'" SLIMGRAPH_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool format_rejected(const std::vector<uint8_t>& bytes) {
  try {
    deserialize_model(bytes);
  } catch (const Error& e) {
    return e.code() == ErrorCode::kFormat;
  }
  return false;
}

struct RecoveryRun {
  double dense = 0, noft = 0, early = 0, late = 0;
  double arms[3] = {0, 0, 0};
  Graph final_slim;  // fraction 0.3, pruned at 150, fine-tuned to 250
};

RecoveryRun recovery_seed(const ToyTask& task, uint64_t seed) {
  TrainConfig c;
  c.qat_enabled = true;
  c.seed = seed;
  c.epochs = 250;
  // Only the final accuracy of each arm is used.
  c.eval_every = c.epochs;
  RecoveryRun r;
  TrainState st = start_training(build_mini_net(Preset::kEcoweedMini, {1, 3, 64, 64}, 3, seed), task, c);
  train_until(st, task, c, 62);
  const TrainState at62 = st;
  train_until(st, task, c, 150);
  const TrainState at150 = st;
  train_until(st, task, c, 187);
  const TrainState at187 = st;
  train_until(st, task, c, 250);
  r.dense = st.last_val_acc;
  for (int i = 0; i < 3; ++i) {
    TrainState arm = at150;
    prune_state(arm, task, c, kFractions[i]);
    if (i == 1) r.noft = evaluate(arm.graph, task.val_images(), task.val_labels());
    train_until(arm, task, c, 250);
    r.arms[i] = arm.last_val_acc;
    if (i == 1) r.final_slim = arm.graph;
  }
  TrainState early = at62;
  prune_state(early, task, c, 0.3);
  train_until(early, task, c, 250);
  r.early = early.last_val_acc;
  TrainState late = at187;
  prune_state(late, task, c, 0.3);
  train_until(late, task, c, 250);
  r.late = late.last_val_acc;
  return r;
}

}  // namespace

int main() {
  report(1, "achieved-ratio arithmetic on reference parameter counts", 1.0, [] {
    Outcome o;
    const std::pair<int64_t, double> rows[] = {{876859, 68.5}, {1243853, 55.3}, {1683879, 39.5},
                                               {1931397, 30.6}, {2196937, 21.1}, {2459176, 11.6}};
    double worst = 0.0;
    for (const auto& [params, label] : rows) {
      const double shown = std::stod(format_ratio(achieved_ratio(2780000, params)));
      worst = std::max(worst, std::fabs(shown - label));
    }
    o.require(worst <= 0.5, fmt("worst deviation %.2f pp", worst));
    if (o.pass) o.detail = fmt("worst deviation %.1f pp", worst);
    return o;
  });

  const std::vector<PlanCase> cases = plan_cases();

  report(2, "prune equivalence on 3 presets x 3 fractions", 120.0, [&] {
    Outcome o;
    int trials = 0;
    double worst = 0.0;
    uint64_t seed = 7;
    for (const PlanCase& c : cases) {
      const EquivalenceResult r = check_prune_equivalence(c.dense, c.slim, c.plan, 12, 1e-5, ++seed);
      trials += r.trials;
      worst = std::max(worst, r.worst_rel_error);
      o.require(r.failures == 0, c.dense.name() + ": " + r.first_failure);
    }
    o.require(trials >= 100, "fewer than 100 trials");
    if (o.pass) o.detail = fmt("%.0f trials, worst relative error %.2g", trials, worst);
    return o;
  });

  report(3, "channel group partition soundness", 10.0, [] {
    Outcome o;
    int64_t slots = 0;
    for (Preset p : kPresets) {
      const Graph g = build_mini_net(p, {1, 3, 64, 64}, 3);
      const GroupAnalysis a = resolve_groups(g);
      // Each (site, channel) is claimed by exactly one slot channel.
      std::map<Site, std::vector<int>> claims;
      for (const auto& [site, n] : a.site_channels) claims[site].assign(static_cast<size_t>(n), 0);
      for (const ChannelGroup& grp : a.groups) {
        for (const ChannelSlot& s : grp.slots) {
          for (int64_t i = 0; i < s.length; ++i) {
            const GroupIndex& gi = a.channels.at(s.site).at(static_cast<size_t>(s.offset + i));
            o.require(gi.group == grp.id && gi.index == i, to_string(s.site) + " slot/index mismatch");
            ++claims.at(s.site).at(static_cast<size_t>(s.offset + i));
            ++slots;
          }
        }
      }
      for (const auto& [site, c] : claims) {
        for (int k : c) o.require(k == 1, to_string(site) + " claimed " + std::to_string(k) + " times");
      }
      const ShapeMap shapes = infer_shapes(g);
      for (const Node& n : g.nodes()) {
        if (n.kind == NodeKind::kConcat) {
          int64_t offset = 0;
          const auto& out = a.channels.at(Site{n.id, true, 0});
          for (size_t p = 0; p < n.inputs.size(); ++p) {
            const auto& in = a.channels.at(Site{n.id, false, static_cast<int>(p)});
            for (size_t c = 0; c < in.size(); ++c) {
              o.require(out.at(static_cast<size_t>(offset) + c).group == in[c].group &&
                            out.at(static_cast<size_t>(offset) + c).index == in[c].index,
                        n.id + " segment does not map through");
            }
            offset += static_cast<int64_t>(in.size());
          }
          o.require(offset == shapes.at(PortRef{n.id, 0})[1], n.id + " segments do not tile the output");
        }
        if (n.kind == NodeKind::kConv && n.id.size() > 9 && n.id.ends_with(".cv2.conv") &&
            g.contains(n.id.substr(0, n.id.size() - 9) + ".pool1")) {
          const std::string prefix = n.id.substr(0, n.id.size() - 9);
          const auto& cv1 = a.channels.at(Site{prefix + ".cv1.conv", true, 0});
          const auto& cv2 = a.channels.at(Site{n.id, false, 0});
          const size_t h = cv1.size();
          o.require(cv2.size() == 4 * h, n.id + " input is not 4h wide");
          for (size_t r = 0; r < 4; ++r) {
            for (size_t j = 0; j < h; ++j) {
              o.require(cv2.at(r * h + j).group == cv1[j].group && cv2.at(r * h + j).index == cv1[j].index,
                        n.id + " replicated index mismatch");
            }
          }
        }
      }
    }
    if (o.pass) o.detail = fmt("%.0f slot channels, zero violations", static_cast<double>(slots));
    return o;
  });

  report(4, "detect head untouched by every plan", 10.0, [&] {
    Outcome o;
    int nodes = 0;
    for (const PlanCase& c : cases) {
      const ShapeMap before = infer_shapes(c.dense), after = infer_shapes(c.slim);
      for (const Node& n : c.dense.nodes()) {
        if (n.role != "detect") continue;
        ++nodes;
        const Node& s = c.slim.node(n.id);
        for (const auto& [name, t] : n.params) {
          o.require(s.has_param(name) && s.param(name).identical(t), n.id + "/" + name + " changed");
        }
        for (int p = 0; p < n.num_outputs(); ++p) {
          o.require(before.at(PortRef{n.id, p}) == after.at(PortRef{n.id, p}), n.id + " output shape changed");
        }
      }
    }
    if (o.pass) o.detail = fmt("%.0f head nodes checked over 9 plans", nodes);
    return o;
  });

  report(5, "accounting exactness", 10.0, [&] {
    Outcome o;
    for (const PlanCase& c : cases) {
      const GroupCost pred = predict_removal(c.dense, c.analysis, c.plan.removals);
      const int64_t dense = count_params(c.dense), slim = count_params(c.slim);
      o.require(dense - pred.params == slim,
                c.dense.name() + fmt(": predicted %.0f, actual %.0f", static_cast<double>(pred.params),
                                     static_cast<double>(dense - slim)));
    }
    if (o.pass) o.detail = "9 plans, exact integer equality";
    return o;
  });

  report(6, "quantization bounds", 5.0, [] {
    Outcome o;
    Rng rng(2026);
    int64_t violations = 0;
    for (int i = 0; i < 100000; ++i) {
      const float s = static_cast<float>(std::exp(rng.uniform(-9.0f, 2.0f)));
      const float x = rng.uniform(-160.0f, 160.0f) * s;
      const float q = qdq(x, s);
      bool ok = qdq(q, s) == q;
      if (x >= -128.0f * s && x <= 127.0f * s) {
        ok = ok && std::fabs(static_cast<double>(x) - q) <= s / 2.0 * (1.0 + 1e-6);
      } else {
        ok = ok && q == (x > 0 ? 127.0f * s : -128.0f * s);
      }
      const float y = x + rng.uniform(0.0f, 4.0f) * s;
      ok = ok && qdq(y, s) >= q;
      if (std::fabs(x) < 127.5f * s) ok = ok && qdq(-x, s) == -q;
      violations += ok ? 0 : 1;
    }
    o.require(violations == 0, fmt("%.0f violations", static_cast<double>(violations)));
    if (o.pass) o.detail = "100000 pairs, zero violations";
    return o;
  });

  report(7, "calibration correctness", 10.0, [] {
    Outcome o;
    Rng rng(7);
    const double a = 2.5;
    AbsHistogram h;
    std::vector<float> chunk(100000);
    for (int k = 0; k < 10; ++k) {
      for (float& v : chunk) v = rng.uniform(static_cast<float>(-a), static_cast<float>(a));
      h.observe(chunk);
    }
    const double amax = h.percentile_edge(kCalibrationPercentile);
    o.require(amax >= 0.999 * a && amax <= a, fmt("uniform amax %.6f for a = %.2f", amax, a));
    const Graph g = insert_fakequant(build_conv_block(3, 4, 3, 1, {1, 3, 16, 16}));
    std::vector<CalibrationEntry> entries;
    calibrate(g, std::vector<Tensor>{Tensor({4, 3, 16, 16}, -1.375f)}, &entries);
    o.require(entries.size() == 1 && entries[0].amax == 1.375f, "constant input amax is not |c|");
    if (o.pass) o.detail = fmt("uniform amax / a = %.6f, constant amax exact", amax / a);
    return o;
  });

  report(8, "gradient checks", 60.0, [] {
    Outcome o;
    int checked = 0;
    for (const auto& r : slimgraph::testing::primitive_gradient_checks(1e-3, 1e-3)) {
      o.require(r.passed, r.name + fmt(": relative error %.3g", r.worst));
      ++checked;
    }
    const auto q = slimgraph::testing::qat_net_gradient_check(1e-3, 1e-2);
    o.require(q.passed, fmt("instrumented net relative error %.3g", q.worst));
    if (o.pass) o.detail = fmt("%.0f primitive cases, instrumented net error %.2g", checked, q.worst);
    return o;
  });

  const ToyTask task{ToyTaskConfig{}};
  Graph recovered;
  report(9, "pipeline recovery over 3 seeds", 900.0, [&] {
    Outcome o;
    std::vector<RecoveryRun> runs;
    for (uint64_t seed = 1; seed <= 3; ++seed) runs.push_back(recovery_seed(task, seed));
    recovered = runs[0].final_slim;
    auto mean = [&](auto get) {
      double s = 0;
      for (const RecoveryRun& r : runs) s += get(r);
      return s / static_cast<double>(runs.size());
    };
    const double dense = mean([](const RecoveryRun& r) { return r.dense; });
    const double noft = mean([](const RecoveryRun& r) { return r.noft; });
    const double f1 = mean([](const RecoveryRun& r) { return r.arms[0]; });
    const double f3 = mean([](const RecoveryRun& r) { return r.arms[1]; });
    const double f5 = mean([](const RecoveryRun& r) { return r.arms[2]; });
    const double early = mean([](const RecoveryRun& r) { return r.early; });
    const double late = mean([](const RecoveryRun& r) { return r.late; });
    o.require(dense >= 0.95, fmt("dense mean %.3f < 0.95", dense));
    o.require(f3 >= 0.9 * dense, fmt("fine-tuned %.3f < 0.9 x dense %.3f", f3, dense));
    o.require(f3 > noft, fmt("fine-tuned %.3f not above no-fine-tune %.3f", f3, noft));
    o.require(f1 >= f3 && f3 >= f5, fmt("fraction trend %.3f, %.3f, %.3f", f1, f3, f5));
    o.require(late >= early, fmt("late %.3f < early %.3f", late, early));
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "dense %.3f, f0.1/0.3/0.5 %.3f/%.3f/%.3f, no fine-tune %.3f, early %.3f, late %.3f", dense, f1,
                  f3, f5, noft, early, late);
    if (o.pass) {
      o.detail = buf;
    } else {
      o.detail += std::string(" (") + buf + ")";
    }
    return o;
  });

  report(10, "fp16 export", 60.0, [&] {
    Outcome o;
    // Trained slim model from the recovery run; a fresh one if that failed.
    const Graph g = recovered.size() ? recovered : build_mini_net(Preset::kEcoweedMini, {1, 3, 64, 64}, 3);
    o.require(weight_blob_bytes(g, 16) * 2 == weight_blob_bytes(g, 32), "weight blob does not halve");
    const Fp16Export e = export_fp16(g);
    const LoadedModel half = deserialize_model(e.bytes);
    double worst_rel = 0.0;
    int64_t mismatches = 0;
    for (const Node& n : g.nodes()) {
      for (const auto& [name, t] : n.params) {
        const Tensor& h = half.graph.node(n.id).param(name);
        for (int64_t i = 0; i < t.numel(); ++i) {
          const float w = t.data()[i];
          const double want = half_oracle(w);
          mismatches += static_cast<double>(h.data()[i]) == want ? 0 : 1;
          if (std::fabs(w) >= std::ldexp(1.0, -14)) {
            worst_rel = std::max(worst_rel, std::fabs(want - w) / std::fabs(w));
          } else {
            o.require(std::fabs(want - w) <= std::ldexp(1.0, -25), n.id + "/" + name + " subnormal error");
          }
        }
      }
    }
    o.require(mismatches == 0, fmt("%.0f elements differ from the binary16 oracle", static_cast<double>(mismatches)));
    o.require(worst_rel <= std::ldexp(1.0, -11), fmt("relative cast error %.3g", worst_rel));
    const double acc32 = evaluate(g, task.val_images(), task.val_labels());
    const double acc16 = evaluate(half.graph, task.val_images(), task.val_labels());
    o.require(std::fabs(acc32 - acc16) <= 0.01 + 1e-12, fmt("accuracy fp32 %.4f vs fp16 %.4f", acc32, acc16));
    if (o.pass) o.detail = fmt("worst relative cast error %.3g, accuracy fp32 %.4f fp16 %.4f", worst_rel, acc32, acc16);
    return o;
  });

  report(11, "serialization round trip and verify exit codes", 10.0, [&] {
    Outcome o;
    for (Preset p : kPresets) {
      const Graph g = build_mini_net(p, {1, 3, 64, 64}, 3);
      const std::vector<uint8_t> bytes = serialize_model(g, 32);
      const LoadedModel m = deserialize_model(bytes);
      o.require(m.graph.identical(g) && serialize_model(m.graph, 32) == bytes, g.name() + " round trip differs");
      std::vector<uint8_t> bad = bytes;
      bad[bad.size() - 5] ^= 0x10;
      o.require(format_rejected(bad), g.name() + " checksum corruption accepted");
      for (size_t cut : {size_t{7}, bytes.size() / 3, bytes.size() - 1}) {
        o.require(format_rejected(std::vector<uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(cut))),
                  g.name() + " truncation accepted");
      }
    }
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "slimgraph_acceptance";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto at = [&](const char* f) { return "'" + (dir / f).string() + "'"; };
    o.require(run_cli("build --preset ecoweed_mini --out " + at("d.twnm")) == 0, "build failed");
    o.require(run_cli("prune --model " + at("d.twnm") + " --fraction 0.3 --plan-out " + at("p.txt") + " --out " +
                      at("s.twnm")) == 0,
              "prune failed");
    const std::string verify = "verify --dense " + at("d.twnm") + " --slim " + at("s.twnm") + " --plan ";
    o.require(run_cli(verify + at("p.txt") + " --trials 5") == 0, "verify of a good plan did not exit 0");
    // Out-of-range removal index appended to group 1.
    std::string plan = read_text((dir / "p.txt").string());
    plan.insert(plan.find('\n', plan.find("\ngroup 1 ") + 1), " 9999");
    write_text_atomic((dir / "bad.txt").string(), plan);
    o.require(run_cli(verify + at("bad.txt")) == 2, "corrupted plan did not exit 2");
    o.require(run_cli(verify + at("missing.txt")) == 3, "missing plan did not exit 3");
    o.require(run_cli(verify + at("p.txt") + " --trials 0") == 1, "bad trial count did not exit 1");
    std::filesystem::remove_all(dir);
    if (o.pass) o.detail = "3 presets, exit codes 0/1/2/3 as specified";
    return o;
  });

  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAILED" : "PASSED", failures);
  return failures ? 1 : 0;
}
