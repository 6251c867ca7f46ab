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


#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "slimgraph/builders.hpp"
#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/fakequant.hpp"

using namespace slimgraph;
using slimgraph::testing::random_tensor;

namespace {

int count_quantizers(const Graph& g) {
  int n = 0;
  for (const Node& node : g.nodes()) n += node.kind == NodeKind::kFakeQuant;
  return n;
}

bool outputs_identical(const Graph& a, const Graph& b, const Tensor& x) {
  const auto ya = forward(a, x);
  const auto yb = forward(b, x);
  if (ya.size() != yb.size()) return false;
  for (const auto& [id, t] : ya) {
    if (!t.identical(yb.at(id))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("qdq hand examples") {
  CHECK(qdq(0.0f, 0.1f) == 0.0f);
  CHECK(qdq(0.26f, 0.1f) == doctest::Approx(0.3f));
  CHECK(qdq(20.0f, 0.1f) == doctest::Approx(12.7f));
  CHECK(qdq(-20.0f, 0.1f) == doctest::Approx(-12.8f));
  // Half-way cases round to even.
  CHECK(qdq(0.5f, 1.0f) == 0.0f);
  CHECK(qdq(1.5f, 1.0f) == 2.0f);
  CHECK(qdq(-2.5f, 1.0f) == -2.0f);
}

TEST_CASE("qdq properties") {
  Rng rng(9);
  for (int i = 0; i < 20000; ++i) {
    const float s = static_cast<float>(std::exp(rng.uniform(-6.0f, 1.0f)));
    const float x = rng.uniform(-140.0f, 140.0f) * s;
    const float y = rng.uniform(-140.0f, 140.0f) * s;
    const float q = qdq(x, s);
    CHECK(qdq(q, s) == q);
    if (std::fabs(x) <= 127.0f * s) CHECK(std::fabs(x - q) <= s / 2 * (1 + 1e-6f));
    if (x <= y) {
      CHECK(q <= qdq(y, s));
    } else {
      CHECK(q >= qdq(y, s));
    }
    if (std::fabs(x) < 127.5f * s) CHECK(qdq(-x, s) == -q);
  }
}

TEST_CASE("straight-through estimator") {
  const Tensor x({4}, {0.05f, -1.0f, 1000.0f, -1000.0f});
  const Tensor up({4}, {1.0f, 2.0f, 3.0f, 4.0f});
  const Tensor g = qdq_backward(up, x, 0.1f);
  CHECK(g.data()[0] == 1.0f);
  CHECK(g.data()[1] == 2.0f);
  CHECK(g.data()[2] == 0.0f);
  CHECK(g.data()[3] == 0.0f);
  // The clip edges themselves pass.
  const Tensor edge({2}, {12.7f, -12.8f});
  CHECK(qdq_backward(Tensor({2}, 1.0f), edge, 0.1f).data()[0] == 1.0f);
  CHECK(qdq_backward(Tensor({2}, 1.0f), edge, 0.1f).data()[1] == 1.0f);
}

TEST_CASE("instrumentation") {
  const Graph g = build_mini_net(Preset::kEcoweedMini, {1, 3, 32, 32}, 3);
  int convs = 0;
  for (const Node& n : g.nodes()) convs += n.kind == NodeKind::kConv && n.role != "detect";
  const Graph q = insert_fakequant(g);
  CHECK(is_instrumented(q));
  CHECK_FALSE(is_instrumented(g));
  CHECK(count_quantizers(q) == convs);
  for (const Node& n : q.nodes()) {
    if (n.kind == NodeKind::kConv && n.role == "detect") CHECK(q.node(n.inputs[0].node).kind != NodeKind::kFakeQuant);
  }
  Rng rng(1);
  const Tensor x = random_tensor(rng, {2, 3, 32, 32});
  CHECK(outputs_identical(g, q, x));
  CHECK_THROWS_AS(insert_fakequant(q), Error);
  const Graph stripped = strip_fakequant(q);
  CHECK(stripped.size() == g.size());
  CHECK(outputs_identical(g, stripped, x));

  Graph empty("identity", {1, 3, 4, 4});
  Node in;
  in.id = "input";
  in.kind = NodeKind::kInput;
  empty.add(in);
  Node out;
  out.id = "output";
  out.kind = NodeKind::kOutput;
  out.inputs = {PortRef{"input", 0}};
  empty.add(out);
  CHECK(count_quantizers(insert_fakequant(empty)) == 0);
}

TEST_CASE("histogram percentile on uniform samples") {
  Rng rng(17);
  const double a = 3.0;
  AbsHistogram h;
  std::vector<float> chunk(10000);
  for (int c = 0; c < 100; ++c) {
    for (float& v : chunk) v = rng.uniform(static_cast<float>(-a), static_cast<float>(a));
    h.observe(chunk);
  }
  CHECK(h.total() == 1000000);
  const float amax = h.percentile_edge(kCalibrationPercentile);
  CHECK(amax >= 0.999 * a);
  CHECK(amax <= a);
  AbsHistogram zeros;
  zeros.observe(std::vector<float>(10, 0.0f));
  CHECK(zeros.percentile_edge(kCalibrationPercentile) == 0.0f);
}

TEST_CASE("calibration: constant input, zeros, determinism and phases") {
  const Graph g = insert_fakequant(build_conv_block(3, 4, 3, 1, {1, 3, 8, 8}));
  const std::vector<Tensor> constant{Tensor({2, 3, 8, 8}, -0.7f)};
  std::vector<CalibrationEntry> report;
  const Graph c = calibrate(g, constant, &report);
  REQUIRE(report.size() == 1);
  CHECK(report[0].amax == 0.7f);
  CHECK(report[0].scale == 0.7f / 127.0f);
  CHECK(report[0].samples == 2 * 3 * 8 * 8);
  CHECK(c.node(report[0].node).attrs.quant.phase == QuantPhase::kActive);

  const std::vector<Tensor> zeros{Tensor({1, 3, 8, 8}, 0.0f)};
  try {
    calibrate(g, zeros);
    FAIL("expected calibration to fail");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("block.conv.fq") != std::string::npos);
  }

  Rng rng(4);
  const Graph net = insert_fakequant(build_mini_net(Preset::kY11Mini, {1, 3, 32, 32}, 3));
  std::vector<Tensor> big{random_tensor(rng, {2, 3, 32, 32}), random_tensor(rng, {2, 3, 32, 32})};
  const auto first = calibration_entries(calibrate(net, big));
  const auto second = calibration_entries(calibrate(net, big));
  REQUIRE(first.size() == second.size());
  for (size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].amax == second[i].amax);
    CHECK(first[i].amax > 0.0f);
    CHECK(first[i].scale > 0.0f);
  }

  // Observe is transparent; active quantizes; observe again resets.
  const Graph active = calibrate(net, big);
  const Graph observe = set_quant_phase(active, QuantPhase::kObserve);
  CHECK(outputs_identical(net, observe, big[0]));
  CHECK_FALSE(outputs_identical(net, active, big[0]));
  for (const Node& n : observe.nodes()) {
    if (n.kind == NodeKind::kFakeQuant) CHECK(n.attrs.quant == QuantState{QuantPhase::kObserve, 0.0f, 0.0f, 0});
  }
}

TEST_CASE("calibration sidecar round trip") {
  const std::vector<CalibrationEntry> entries{{"a.fq", 1.5f, 1.5f / 127.0f, 100}, {"b.fq", 0.1f, 0.1f / 127.0f, 7}};
  const auto back = parse_calibration(format_calibration(entries));
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].node == entries[i].node);
    CHECK(back[i].amax == entries[i].amax);
    CHECK(back[i].scale == entries[i].scale);
    CHECK(back[i].samples == entries[i].samples);
  }
  CHECK_THROWS_AS(parse_calibration("a.fq one two three\n"), Error);
}

TEST_CASE("fp16 export cast errors") {
  Graph g = build_conv_block(1, 2, 1, 1, {1, 1, 4, 4});
  g.mutable_node("block.conv").params.at("weight") = Tensor({2, 1, 1, 1}, {0.5f, -2.0f});
  g.mutable_node("block.conv").params.at("bias") = Tensor({2}, {1.0f, 0.25f});
  const Fp16Export e = export_fp16(g);
  for (const CastRecord& r : e.casts) {
    if (r.tensor.rfind("block.conv", 0) == 0) {
      CHECK(r.max_abs_error == 0.0);
      CHECK(r.max_rel_error == 0.0);
    }
  }
  g.mutable_node("block.conv").params.at("weight") = Tensor({2, 1, 1, 1}, {70000.0f, 0.0f});
  CHECK_THROWS_AS(export_fp16(g), Error);

  const Graph net = build_mini_net(Preset::kEcoweedMini, {1, 3, 32, 32}, 3);
  for (const CastRecord& r : export_fp16(net).casts) CHECK(r.max_rel_error <= std::ldexp(1.0, -11));
}
