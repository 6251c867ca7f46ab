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


#include <string>

#include "doctest.h"
#include "gradcheck.hpp"
#include "slimgraph/builders.hpp"
#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/metrics.hpp"

using namespace slimgraph;
using slimgraph::testing::random_tensor;

namespace {

// conv(cin->cout, k) with bias followed by batchnorm: trainable count.
int64_t conv_block_params(int64_t cin, int64_t cout, int64_t k) { return cin * cout * k * k + cout + 2 * cout; }

Tensor output_of(const Graph& g, const Tensor& x) { return forward(g, x).begin()->second; }

}  // namespace

TEST_CASE("conv block hand counts") {
  CHECK(count_params(build_conv_block(3, 16, 3, 1)) == 480);
  CHECK(count_params(build_conv_block(1, 1, 1, 1)) == 4);
}

TEST_CASE("stride 2 halves even spatial dims") {
  const Graph g = build_conv_block(4, 8, 3, 2, {1, 4, 16, 16});
  const ShapeMap s = infer_shapes(g);
  CHECK(s.at(PortRef{"output", 0}) == Shape{1, 8, 8, 8});
  const Graph k1 = build_conv_block(4, 8, 1, 2, {1, 4, 10, 10});
  CHECK(infer_shapes(k1).at(PortRef{"output", 0}) == Shape{1, 8, 5, 5});
}

TEST_CASE("c3k2 hand counts and constraints") {
  // cv1 32->32 k1, one bottleneck of two 16->16 k3 blocks, cv2 32->32 k1.
  const int64_t expected = conv_block_params(32, 32, 1) + 2 * conv_block_params(16, 16, 3) + conv_block_params(32, 32, 1);
  CHECK(expected == 6944);
  CHECK(count_params(build_c3k2(32, 32, 1, true)) == 6944);
  // No bottlenecks: just the two projections.
  CHECK(count_params(build_c3k2(32, 32, 0, true)) == 2 * conv_block_params(32, 32, 1));
  GraphBuilder b("x", {1, 8, 8, 8}, 1);
  CHECK_THROWS_AS(b.bottleneck("bad", b.input(), 8, 16, 8, true), Error);
}

TEST_CASE("c2psa keeps spatial dims and splits symmetrically") {
  const Graph g = build_c2psa(64, 64, 1, {1, 64, 8, 8});
  const ShapeMap s = infer_shapes(g);
  CHECK(s.at(PortRef{"output", 0}) == Shape{1, 64, 8, 8});
  CHECK(s.at(PortRef{"c2psa.split", 0}) == s.at(PortRef{"c2psa.split", 1}));
  // Without attention blocks the halves pass straight to the concat.
  const Graph g0 = build_c2psa(32, 32, 0, {1, 32, 8, 8});
  CHECK(g0.node("c2psa.cat").inputs[1] == PortRef{"c2psa.split", 1});
}

TEST_CASE("sppf fan-out and hand count") {
  const Graph g = build_sppf(64, 64, 5, {1, 64, 8, 8});
  CHECK(g.node("sppf.cv2.conv").param("weight").dim(1) == 4 * g.node("sppf.cv1.conv").param("weight").dim(0));
  const ShapeMap s = infer_shapes(g);
  CHECK(s.at(PortRef{"sppf.pool3", 0}) == Shape{1, 32, 8, 8});
  CHECK(conv_block_params(64, 32, 1) + conv_block_params(128, 64, 1) == 10528);
  CHECK(count_params(g) == 10528);
}

TEST_CASE("spab hand count and zero modulation") {
  CHECK(count_params(build_spab(16)) == 3 * conv_block_params(16, 16, 3));
  CHECK(count_params(build_spab(16)) == 7056);
  // Zeroing c3_r's batchnorm makes out3 = silu(0) = 0, so sigmoid(0) - 0.5 = 0
  // and the block passes its input through.
  Graph g = build_spab(4, {1, 4, 6, 6});
  Node& bn = g.mutable_node("spab.c3_r.bn");
  bn.params.at("gamma") = Tensor({4}, 0.0f);
  bn.params.at("beta") = Tensor({4}, 0.0f);
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 4, 6, 6});
  CHECK(output_of(g, x).identical(x));
}

TEST_CASE("a2c2f is the identity at initialisation and validates its residual constraint") {
  const Graph g = build_a2c2f(32, 32, 2, true, {1, 32, 8, 8});
  CHECK(infer_shapes(g).at(PortRef{"output", 0}) == Shape{1, 32, 8, 8});
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 32, 8, 8});
  CHECK(output_of(g, x).identical(x));
  const Graph plain = build_a2c2f(16, 32, 1, false, {1, 16, 8, 8});
  CHECK_FALSE(plain.contains("a2c2f.gamma"));
  CHECK_THROWS_AS(build_a2c2f(16, 32, 1, true), Error);
}

TEST_CASE("detect head channels per scale") {
  const Graph g = build_detect_head({16, 32, 64}, 12);
  int maps = 0;
  for (const std::string& id : g.output_ids()) {
    CHECK(infer_shapes(g).at(g.node(id).inputs[0])[1] == 16);
    ++maps;
  }
  CHECK(maps == 3);
  for (const Node& n : g.nodes()) {
    if (n.role == "detect") CHECK(n.is_protected);
  }
}

TEST_CASE("presets: shapes, scales and per-node parameter closed forms") {
  for (Preset p : {Preset::kEcoweedMini, Preset::kY11Mini, Preset::kY12Mini}) {
    const Graph g = build_mini_net(p, {1, 3, 64, 64}, 3);
    const ShapeMap s = infer_shapes(g);
    CHECK(s.at(g.node("out.p3").inputs[0]) == Shape{1, 7, 8, 8});
    CHECK(s.at(g.node("out.p4").inputs[0]) == Shape{1, 7, 4, 4});
    CHECK(s.at(g.node("out.p5").inputs[0]) == Shape{1, 7, 2, 2});
    CHECK(s.at(g.node("out.logits").inputs[0]) == Shape{1, 3});

    // Closed forms from the inferred shapes rather than tensor sizes.
    int64_t closed = 0;
    for (const Node& n : g.nodes()) {
      switch (n.kind) {
        case NodeKind::kConv: {
          const int64_t cin = s.at(n.inputs[0])[1], cout = s.at(PortRef{n.id, 0})[1];
          const int64_t k = n.param("weight").dim(2);
          closed += cout * cin * k * k + cout;
          break;
        }
        case NodeKind::kBatchNorm:
          closed += 2 * s.at(PortRef{n.id, 0})[1];
          break;
        case NodeKind::kScale:
          closed += s.at(PortRef{n.id, 0})[1];
          break;
        case NodeKind::kLinear: {
          const int64_t in = s.at(n.inputs[0])[1], out = s.at(PortRef{n.id, 0})[1];
          closed += in * out + out;
          break;
        }
        default:
          break;
      }
    }
    CHECK(count_params(g) == closed);
  }
}

TEST_CASE("identity graph and error paths") {
  Graph g("identity", {1, 3, 5, 5});
  Node in;
  in.id = "input";
  in.kind = NodeKind::kInput;
  g.add(in);
  Node out;
  out.id = "output";
  out.kind = NodeKind::kOutput;
  out.inputs = {PortRef{"input", 0}};
  g.add(out);
  CHECK(infer_shapes(g).at(PortRef{"output", 0}) == Shape{1, 3, 5, 5});
  CHECK(count_params(g) == 0);

  GraphBuilder b("mismatch", {1, 3, 8, 8}, 1);
  PortRef a = b.conv_block("left", b.input(), 3, 4, 3, 1);
  PortRef c = b.conv_block("right", b.input(), 3, 5, 3, 1);
  Node add;
  add.id = "sum";
  add.kind = NodeKind::kAdd;
  add.inputs = {a, c};
  b.graph().add(add);
  b.output("output", PortRef{"sum", 0});
  try {
    b.finish();
    FAIL("expected a shape error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("left.act") != std::string::npos);
    CHECK(msg.find("right.act") != std::string::npos);
  }
}

TEST_CASE("builder grid passes shape inference") {
  for (int64_t c : {2, 4, 8}) {
    for (int n : {0, 1, 2}) {
      CHECK_NOTHROW(build_c3k2(c, c, n, true));
      CHECK_NOTHROW(build_c3k2(c, 2 * c, n, false));
      CHECK_NOTHROW(build_c2psa(c, c, n));
      CHECK_NOTHROW(build_a2c2f(c, c, n, true));
    }
    for (int k : {1, 3, 5}) CHECK_NOTHROW(build_sppf(c, c, k));
    CHECK_NOTHROW(build_spab(c));
  }
}
