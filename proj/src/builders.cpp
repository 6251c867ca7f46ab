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

#include "slimgraph/builders.hpp"

#include <cmath>

#include "slimgraph/error.hpp"

namespace slimgraph {

GraphBuilder::GraphBuilder(std::string name, Shape input_shape, uint64_t seed)
    : graph_(std::move(name), std::move(input_shape)), rng_(seed) {
  Node in;
  in.id = "input";
  in.kind = NodeKind::kInput;
  graph_.add(std::move(in));
}

Tensor GraphBuilder::uniform(Shape shape, int64_t fan_in) {
  const float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng_.uniform(-bound, bound);
  return t;
}

void GraphBuilder::add(Node node) {
  node.is_protected = node.is_protected || protect_;
  if (node.role.empty()) node.role = role_;
  graph_.add(std::move(node));
}

PortRef GraphBuilder::conv(const std::string& id, PortRef x, int64_t cin, int64_t cout, int k,
                           int stride, int padding) {
  if (cin < 1 || cout < 1) fail_validation("conv '" + id + "': channel counts must be >= 1");
  if (k < 1 || stride < 1) fail_validation("conv '" + id + "': kernel and stride must be >= 1");
  Node n;
  n.id = id;
  n.kind = NodeKind::kConv;
  n.inputs = {x};
  n.attrs.stride = stride;
  n.attrs.padding = padding;
  const int64_t fan_in = cin * k * k;
  n.params["weight"] = uniform(Shape{cout, cin, k, k}, fan_in);
  n.params["bias"] = uniform(Shape{cout}, fan_in);
  add(std::move(n));
  return PortRef{id, 0};
}

PortRef GraphBuilder::conv_block(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                                 int k, int stride) {
  PortRef c = conv(prefix + ".conv", x, cin, cout, k, stride, k / 2);
  Node bn;
  bn.id = prefix + ".bn";
  bn.kind = NodeKind::kBatchNorm;
  bn.inputs = {c};
  bn.params["gamma"] = Tensor(Shape{cout}, 1.0f);
  bn.params["beta"] = Tensor(Shape{cout}, 0.0f);
  bn.params["running_mean"] = Tensor(Shape{cout}, 0.0f);
  bn.params["running_var"] = Tensor(Shape{cout}, 1.0f);
  add(std::move(bn));
  Node act;
  act.id = prefix + ".act";
  act.kind = NodeKind::kActivation;
  act.inputs = {PortRef{prefix + ".bn", 0}};
  act.attrs.activation = ActivationKind::kSiLU;
  add(std::move(act));
  return PortRef{prefix + ".act", 0};
}

PortRef GraphBuilder::bottleneck(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                                 int64_t hidden, bool shortcut) {
  if (shortcut && cin != cout) {
    fail_validation("bottleneck '" + prefix + "': shortcut requires cin == cout (" +
                    std::to_string(cin) + " vs " + std::to_string(cout) + ")");
  }
  PortRef h = conv_block(prefix + ".cv1", x, cin, hidden, 3, 1);
  PortRef y = conv_block(prefix + ".cv2", h, hidden, cout, 3, 1);
  if (!shortcut) return y;
  Node add_node;
  add_node.id = prefix + ".add";
  add_node.kind = NodeKind::kAdd;
  add_node.inputs = {x, y};
  add(std::move(add_node));
  return PortRef{prefix + ".add", 0};
}

PortRef GraphBuilder::c3k2(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                           int n_bottlenecks, bool shortcut) {
  if (cout % 2 != 0) fail_validation("c3k2 '" + prefix + "': cout must be even");
  if (n_bottlenecks < 0) fail_validation("c3k2 '" + prefix + "': negative bottleneck count");
  const int64_t c = cout / 2;
  PortRef y = conv_block(prefix + ".cv1", x, cin, 2 * c, 1, 1);
  Node split;
  split.id = prefix + ".split";
  split.kind = NodeKind::kSplit;
  split.inputs = {y};
  split.attrs.split_sizes = {c, c};
  add(std::move(split));
  PortRef a{prefix + ".split", 0};
  PortRef b{prefix + ".split", 1};
  for (int i = 0; i < n_bottlenecks; ++i) {
    b = bottleneck(prefix + ".m" + std::to_string(i), b, c, c, cout / 2, shortcut);
  }
  Node cat;
  cat.id = prefix + ".cat";
  cat.kind = NodeKind::kConcat;
  cat.inputs = {a, b};
  add(std::move(cat));
  return conv_block(prefix + ".cv2", PortRef{prefix + ".cat", 0}, 2 * c, cout, 1, 1);
}

PortRef GraphBuilder::attention_stub(const std::string& prefix, PortRef x, int64_t c) {
  Node gate;
  gate.id = prefix + ".gate";
  gate.kind = NodeKind::kScale;
  gate.inputs = {x};
  gate.params["scale"] = Tensor(Shape{c}, 1.0f);
  add(std::move(gate));
  PortRef ffn = conv(prefix + ".ffn", PortRef{prefix + ".gate", 0}, c, c, 1, 1, 0);
  Node sum;
  sum.id = prefix + ".add";
  sum.kind = NodeKind::kAdd;
  sum.inputs = {x, ffn};
  add(std::move(sum));
  return PortRef{prefix + ".add", 0};
}

PortRef GraphBuilder::c2psa(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                            int n_blocks) {
  if (cout % 2 != 0) fail_validation("c2psa '" + prefix + "': cout must be even");
  if (n_blocks < 0) fail_validation("c2psa '" + prefix + "': negative block count");
  const int64_t c = cout / 2;
  PortRef y = conv_block(prefix + ".cv1", x, cin, 2 * c, 1, 1);
  Node split;
  split.id = prefix + ".split";
  split.kind = NodeKind::kSplit;
  split.inputs = {y};
  split.attrs.split_sizes = {c, c};
  add(std::move(split));
  PortRef a{prefix + ".split", 0};
  PortRef b{prefix + ".split", 1};
  for (int i = 0; i < n_blocks; ++i) b = attention_stub(prefix + ".psa" + std::to_string(i), b, c);
  Node cat;
  cat.id = prefix + ".cat";
  cat.kind = NodeKind::kConcat;
  cat.inputs = {a, b};
  add(std::move(cat));
  return conv_block(prefix + ".cv2", PortRef{prefix + ".cat", 0}, 2 * c, cout, 1, 1);
}

PortRef GraphBuilder::sppf(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                           int pool_k) {
  if (pool_k % 2 == 0 || pool_k < 1) fail_validation("sppf '" + prefix + "': pool_k must be odd");
  const int64_t h = std::max<int64_t>(1, cin / 2);
  PortRef y = conv_block(prefix + ".cv1", x, cin, h, 1, 1);
  std::vector<PortRef> branches{y};
  for (int i = 1; i <= 3; ++i) {
    Node pool;
    pool.id = prefix + ".pool" + std::to_string(i);
    pool.kind = NodeKind::kMaxPool;
    pool.inputs = {branches.back()};
    pool.attrs.kernel = pool_k;
    pool.attrs.stride = 1;
    pool.attrs.padding = pool_k / 2;
    branches.push_back(PortRef{pool.id, 0});
    add(std::move(pool));
  }
  Node cat;
  cat.id = prefix + ".cat";
  cat.kind = NodeKind::kConcat;
  cat.inputs = branches;
  add(std::move(cat));
  return conv_block(prefix + ".cv2", PortRef{prefix + ".cat", 0}, 4 * h, cout, 1, 1);
}

PortRef GraphBuilder::spab(const std::string& prefix, PortRef x, int64_t c) {
  if (c < 1) fail_validation("spab '" + prefix + "': channels must be >= 1");
  PortRef o1 = conv_block(prefix + ".c1_r", x, c, c, 3, 1);
  PortRef o2 = conv_block(prefix + ".c2_r", o1, c, c, 3, 1);
  PortRef o3 = conv_block(prefix + ".c3_r", o2, c, c, 3, 1);
  Node mod;
  mod.id = prefix + ".mod";
  mod.kind = NodeKind::kModulate;
  mod.inputs = {x, o3};
  add(std::move(mod));
  return PortRef{prefix + ".mod", 0};
}

PortRef GraphBuilder::a2c2f(const std::string& prefix, PortRef x, int64_t cin, int64_t cout,
                            int n_blocks, bool residual) {
  if (residual && cin != cout) {
    fail_validation("a2c2f '" + prefix + "': residual requires cin == cout (" +
                    std::to_string(cin) + " vs " + std::to_string(cout) + ")");
  }
  if (n_blocks < 0) fail_validation("a2c2f '" + prefix + "': negative block count");
  const int64_t h = std::max<int64_t>(1, cout / 2);
  PortRef y = conv_block(prefix + ".cv1", x, cin, h, 1, 1);
  for (int i = 0; i < n_blocks; ++i) y = attention_stub(prefix + ".attn" + std::to_string(i), y, h);
  y = conv_block(prefix + ".cv2", y, h, cout, 1, 1);
  if (!residual) return y;
  Node gamma;
  gamma.id = prefix + ".gamma";
  gamma.kind = NodeKind::kScale;
  gamma.inputs = {y};
  gamma.params["scale"] = Tensor(Shape{cout}, 0.0f);
  add(std::move(gamma));
  Node sum;
  sum.id = prefix + ".add";
  sum.kind = NodeKind::kAdd;
  sum.inputs = {x, PortRef{prefix + ".gamma", 0}};
  add(std::move(sum));
  return PortRef{prefix + ".add", 0};
}

std::vector<PortRef> GraphBuilder::detect_head(const std::string& prefix,
                                               const std::vector<PortRef>& xs,
                                               const std::vector<int64_t>& cins, int n_classes) {
  if (xs.empty()) fail_validation("detect head '" + prefix + "': empty scale list");
  if (xs.size() != cins.size()) fail_validation("detect head '" + prefix + "': one cin per scale");
  if (n_classes < 1) fail_validation("detect head '" + prefix + "': n_classes must be >= 1");
  protect_ = true;
  role_ = "detect";
  std::vector<PortRef> outs;
  for (size_t s = 0; s < xs.size(); ++s) {
    const std::string p = prefix + ".s" + std::to_string(s);
    const int64_t width = std::max<int64_t>(12, cins[s] / 4);
    PortRef box = conv_block(p + ".box0", xs[s], cins[s], width, 3, 1);
    box = conv(p + ".box1", box, width, 4, 1, 1, 0);
    PortRef cls = conv_block(p + ".cls0", xs[s], cins[s], width, 3, 1);
    cls = conv(p + ".cls1", cls, width, n_classes, 1, 1, 0);
    Node cat;
    cat.id = p + ".cat";
    cat.kind = NodeKind::kConcat;
    cat.inputs = {box, cls};
    add(std::move(cat));
    outs.push_back(PortRef{p + ".cat", 0});
  }
  protect_ = false;
  role_.clear();
  return outs;
}

PortRef GraphBuilder::classifier(const std::string& prefix, PortRef x, int64_t cin, int n_classes) {
  role_ = "aux";
  Node gap;
  gap.id = prefix + ".pool";
  gap.kind = NodeKind::kGlobalAvgPool;
  gap.inputs = {x};
  add(std::move(gap));
  Node fc;
  fc.id = prefix + ".fc";
  fc.kind = NodeKind::kLinear;
  fc.inputs = {PortRef{prefix + ".pool", 0}};
  fc.params["weight"] = uniform(Shape{n_classes, cin}, cin);
  fc.params["bias"] = uniform(Shape{n_classes}, cin);
  add(std::move(fc));
  role_.clear();
  return PortRef{prefix + ".fc", 0};
}

void GraphBuilder::output(const std::string& id, PortRef x) {
  Node out;
  out.id = id;
  out.kind = NodeKind::kOutput;
  out.inputs = {x};
  add(std::move(out));
}

Graph GraphBuilder::finish() {
  infer_shapes(graph_);
  return graph_;
}

namespace {

Shape default_shape(const Shape& requested, int64_t cin) {
  return requested.empty() ? Shape{1, cin, 16, 16} : requested;
}

}  // namespace

Graph build_conv_block(int64_t cin, int64_t cout, int k, int stride, Shape input_shape,
                       uint64_t seed) {
  GraphBuilder b("conv_block", default_shape(input_shape, cin), seed);
  b.output("output", b.conv_block("block", b.input(), cin, cout, k, stride));
  return b.finish();
}

Graph build_c3k2(int64_t cin, int64_t cout, int n_bottlenecks, bool shortcut, Shape input_shape,
                 uint64_t seed) {
  GraphBuilder b("c3k2", default_shape(input_shape, cin), seed);
  b.output("output", b.c3k2("c3k2", b.input(), cin, cout, n_bottlenecks, shortcut));
  return b.finish();
}

Graph build_c2psa(int64_t cin, int64_t cout, int n_blocks, Shape input_shape, uint64_t seed) {
  GraphBuilder b("c2psa", default_shape(input_shape, cin), seed);
  b.output("output", b.c2psa("c2psa", b.input(), cin, cout, n_blocks));
  return b.finish();
}

Graph build_sppf(int64_t cin, int64_t cout, int pool_k, Shape input_shape, uint64_t seed) {
  GraphBuilder b("sppf", default_shape(input_shape, cin), seed);
  b.output("output", b.sppf("sppf", b.input(), cin, cout, pool_k));
  return b.finish();
}

Graph build_spab(int64_t c, Shape input_shape, uint64_t seed) {
  GraphBuilder b("spab", default_shape(input_shape, c), seed);
  b.output("output", b.spab("spab", b.input(), c));
  return b.finish();
}

Graph build_a2c2f(int64_t cin, int64_t cout, int n_blocks, bool residual, Shape input_shape,
                  uint64_t seed) {
  GraphBuilder b("a2c2f", default_shape(input_shape, cin), seed);
  b.output("output", b.a2c2f("a2c2f", b.input(), cin, cout, n_blocks, residual));
  return b.finish();
}

Graph build_detect_head(const std::vector<int64_t>& cins, int n_classes, uint64_t seed) {
  if (cins.empty()) fail_validation("detect head: empty scale list");
  GraphBuilder b("detect_head", Shape{1, cins[0], 16, 16}, seed);
  std::vector<PortRef> xs{b.input()};
  for (size_t s = 1; s < cins.size(); ++s) {
    xs.push_back(b.conv_block("stem" + std::to_string(s), xs.back(), cins[s - 1], cins[s], 3, 2));
  }
  std::vector<PortRef> outs = b.detect_head("detect", xs, cins, n_classes);
  for (size_t s = 0; s < outs.size(); ++s) b.output("out.s" + std::to_string(s), outs[s]);
  return b.finish();
}

std::string preset_name(Preset preset) {
  switch (preset) {
    case Preset::kEcoweedMini: return "ecoweed_mini";
    case Preset::kY11Mini: return "y11_mini";
    case Preset::kY12Mini: return "y12_mini";
  }
  return "unknown";
}

Preset preset_from_name(const std::string& name) {
  if (name == "ecoweed_mini") return Preset::kEcoweedMini;
  if (name == "y11_mini") return Preset::kY11Mini;
  if (name == "y12_mini") return Preset::kY12Mini;
  throw Error(ErrorCode::kUsage, "unknown preset '" + name + "' (expected ecoweed_mini, y11_mini, y12_mini)");
}

int preset_total_stride(Preset) { return 32; }

Graph build_mini_net(Preset preset, const Shape& input_shape, int n_classes, uint64_t seed) {
  if (input_shape.size() != 4 || input_shape[1] != 3) {
    fail_validation("mini nets expect a (N,3,H,W) input, got " + shape_to_string(input_shape));
  }
  const int stride = preset_total_stride(preset);
  if (input_shape[2] % stride != 0 || input_shape[3] % stride != 0) {
    fail_validation("input " + shape_to_string(input_shape) + " is not divisible by total stride " +
                    std::to_string(stride));
  }
  if (n_classes < 1) fail_validation("n_classes must be >= 1");

  GraphBuilder b(preset_name(preset), input_shape, seed);
  PortRef x = b.conv_block("stem", b.input(), 3, 8, 3, 2);           // /2
  x = b.conv_block("down1", x, 8, 16, 3, 2);                         // /4
  x = b.c3k2("stage1", x, 16, 16, 1, true);
  x = b.conv_block("down2", x, 16, 24, 3, 2);                        // /8
  x = b.c3k2("stage2", x, 24, 24, 1, true);
  if (preset == Preset::kEcoweedMini) x = b.spab("spab", x, 24);
  const PortRef p3 = x;
  x = b.conv_block("down3", x, 24, 48, 3, 2);                        // /16
  if (preset == Preset::kY12Mini) {
    x = b.a2c2f("stage3", x, 48, 48, 1, true);
  } else {
    x = b.c3k2("stage3", x, 48, 48, 1, true);
  }
  const PortRef p4 = x;
  x = b.conv_block("down4", x, 48, 56, 3, 2);                        // /32
  if (preset == Preset::kY12Mini) {
    x = b.a2c2f("stage4", x, 56, 56, 1, true);
  } else {
    x = b.c3k2("stage4", x, 56, 56, 1, true);
  }
  x = b.sppf("sppf", x, 56, 56, 5);
  x = b.c2psa("c2psa", x, 56, 56, 1);
  const PortRef p5 = x;

  std::vector<PortRef> maps = b.detect_head("detect", {p3, p4, p5}, {24, 48, 56}, n_classes);
  PortRef logits = b.classifier("aux", p5, 56, n_classes);
  b.output("out.p3", maps[0]);
  b.output("out.p4", maps[1]);
  b.output("out.p5", maps[2]);
  b.output("out.logits", logits);
  b.graph().meta()["preset"] = preset_name(preset);
  b.graph().meta()["n_classes"] = std::to_string(n_classes);
  return b.finish();
}

}  // namespace slimgraph
