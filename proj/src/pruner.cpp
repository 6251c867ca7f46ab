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

#include "slimgraph/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "slimgraph/error.hpp"
#include "slimgraph/executor.hpp"
#include "slimgraph/rng.hpp"

namespace slimgraph {

std::vector<double> l1_importance(const Graph& graph, const GroupAnalysis& analysis,
                                  const ChannelGroup& group) {
  (void)analysis;
  if (group.producers.empty()) {
    fail_validation("l1_importance: group " + std::to_string(group.id) + " has no producing conv");
  }
  std::vector<double> scores(static_cast<size_t>(group.length), 0.0);
  for (const ChannelSlot& slot : group.slots) {
    if (!slot.site.output) continue;
    const Node& n = graph.node(slot.site.node);
    if (n.kind != NodeKind::kConv) continue;
    const Tensor& w = n.param("weight");
    const int64_t row = w.numel() / w.dim(0);
    for (int64_t i = 0; i < group.length; ++i) {
      const float* f = w.ptr() + (slot.offset + i) * row;
      double s = 0.0;
      for (int64_t k = 0; k < row; ++k) s += std::abs(static_cast<double>(f[k]));
      scores[static_cast<size_t>(i)] += s;
    }
  }
  return scores;
}

std::vector<int64_t> select_channels(std::span<const double> scores, double fraction, int64_t min_keep) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    fail_validation("select_channels: fraction must be in [0, 1), got " + std::to_string(fraction));
  }
  const auto L = static_cast<int64_t>(scores.size());
  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  auto n = static_cast<int64_t>(std::floor(fraction * static_cast<double>(L) + 1e-9));
  n = std::min(n, std::max<int64_t>(L - min_keep, 0));
  std::vector<int64_t> order(static_cast<size_t>(L));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    const double sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
    if (sa != sb) return sa < sb;
    return a > b;
  });
  std::vector<int64_t> removal(order.begin(), order.begin() + n);
  std::sort(removal.begin(), removal.end());
  return removal;
}

PrunePlan make_plan(const Graph& graph, const GroupAnalysis& analysis, double fraction,
                    std::optional<int> epoch_trigger) {
  PrunePlan plan;
  plan.channel_fraction = fraction;
  plan.epoch_trigger = epoch_trigger;
  plan.group_count = static_cast<int>(analysis.groups.size());
  for (const ChannelGroup& g : analysis.groups) {
    if (g.is_protected) continue;
    const std::vector<double> scores = l1_importance(graph, analysis, g);
    std::vector<int64_t> removal = select_channels(scores, fraction);
    if (removal.empty()) continue;
    plan.removals[g.id] = std::move(removal);
    plan.lengths[g.id] = g.length;
  }
  return plan;
}

void validate_plan(const GroupAnalysis& analysis, const PrunePlan& plan) {
  if (plan.group_count >= 0 && plan.group_count != static_cast<int>(analysis.groups.size())) {
    fail_validation("plan is stale: it was made for " + std::to_string(plan.group_count) +
                    " groups, the graph has " + std::to_string(analysis.groups.size()));
  }
  for (const auto& [gid, idx] : plan.removals) {
    const std::string name = "group " + std::to_string(gid);
    if (gid < 0 || gid >= static_cast<int>(analysis.groups.size())) {
      fail_validation("plan references unknown " + name);
    }
    const ChannelGroup& g = analysis.groups[static_cast<size_t>(gid)];
    auto len = plan.lengths.find(gid);
    if (len != plan.lengths.end() && len->second != g.length) {
      fail_validation("plan is stale for " + name + ": planned length " + std::to_string(len->second) +
                      ", actual " + std::to_string(g.length));
    }
    if (g.is_protected && !idx.empty()) fail_validation(name + " is protected and cannot be pruned");
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= g.length) {
        fail_validation(name + ": removal index " + std::to_string(idx[i]) + " out of range [0, " +
                        std::to_string(g.length) + ")");
      }
      if (i > 0 && idx[i] <= idx[i - 1]) fail_validation(name + ": removal indices not strictly increasing");
    }
    if (static_cast<int64_t>(idx.size()) >= g.length) {
      fail_validation(name + ": plan removes every channel");
    }
  }
}

std::map<Site, std::vector<int64_t>> kept_channels(const GroupAnalysis& analysis, const PrunePlan& plan) {
  std::vector<std::vector<bool>> removed(analysis.groups.size());
  for (size_t g = 0; g < analysis.groups.size(); ++g) {
    removed[g].assign(static_cast<size_t>(analysis.groups[g].length), false);
  }
  for (const auto& [gid, idx] : plan.removals) {
    for (int64_t i : idx) removed[static_cast<size_t>(gid)][static_cast<size_t>(i)] = true;
  }
  std::map<Site, std::vector<int64_t>> kept;
  for (const auto& [site, chans] : analysis.channels) {
    std::vector<int64_t>& k = kept[site];
    for (size_t j = 0; j < chans.size(); ++j) {
      if (!removed[static_cast<size_t>(chans[j].group)][static_cast<size_t>(chans[j].index)]) {
        k.push_back(static_cast<int64_t>(j));
      }
    }
  }
  return kept;
}

namespace {

// Rows `rows` and columns `cols` of a (R, C, ...) tensor.
Tensor slice2(const Tensor& t, const std::vector<int64_t>& rows, const std::vector<int64_t>& cols) {
  const int64_t C = t.dim(1);
  const int64_t inner = t.numel() / (t.dim(0) * C);
  Shape shape = t.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  shape[1] = static_cast<int64_t>(cols.size());
  std::vector<float> data;
  data.reserve(static_cast<size_t>(shape_numel(shape)));
  for (int64_t r : rows) {
    for (int64_t c : cols) {
      const float* src = t.ptr() + (r * C + c) * inner;
      data.insert(data.end(), src, src + inner);
    }
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice1(const Tensor& t, const std::vector<int64_t>& idx) {
  std::vector<float> data;
  data.reserve(idx.size());
  for (int64_t i : idx) data.push_back(t[i]);
  return Tensor(Shape{static_cast<int64_t>(idx.size())}, std::move(data));
}

}  // namespace

Graph apply_prune(const Graph& graph, const GroupAnalysis& analysis, const PrunePlan& plan) {
  validate_plan(analysis, plan);
  const auto kept = kept_channels(analysis, plan);
  Graph out(graph.name(), graph.input_shape());
  out.meta() = graph.meta();
  char fraction[32];
  std::snprintf(fraction, sizeof(fraction), "%.17g", plan.channel_fraction);
  out.meta()["stage"] = "pruned";
  out.meta()["channel_fraction"] = fraction;
  for (const Node& n : graph.nodes()) {
    Node m = n;
    switch (n.kind) {
      case NodeKind::kConv:
      case NodeKind::kLinear: {
        const auto& rows = kept.at(Site{n.id, true, 0});
        const auto& cols = kept.at(Site{n.id, false, 0});
        m.params["weight"] = slice2(n.param("weight"), rows, cols);
        if (n.has_param("bias")) m.params["bias"] = slice1(n.param("bias"), rows);
        break;
      }
      case NodeKind::kBatchNorm:
      case NodeKind::kScale: {
        const auto& rows = kept.at(Site{n.id, true, 0});
        for (auto& [name, t] : m.params) t = slice1(n.param(name), rows);
        break;
      }
      case NodeKind::kSplit:
        for (int p = 0; p < n.num_outputs(); ++p) {
          m.attrs.split_sizes[static_cast<size_t>(p)] =
              static_cast<int64_t>(kept.at(Site{n.id, true, p}).size());
        }
        break;
      default:
        if (!n.params.empty()) fail_internal("apply_prune: unexpected parameters on " + n.id);
        break;
    }
    out.add(std::move(m));
  }
  try {
    infer_shapes(out);
  } catch (const Error& e) {
    fail_internal(std::string("apply_prune produced an inconsistent graph: ") + e.what());
  }
  return out;
}

Graph apply_prune(const Graph& graph, const PrunePlan& plan) {
  return apply_prune(graph, resolve_groups(graph), plan);
}

Graph zero_embed_oracle(const Graph& graph, const GroupAnalysis& analysis, const PrunePlan& plan) {
  validate_plan(analysis, plan);
  const auto kept = kept_channels(analysis, plan);
  Graph out = graph;
  for (const Node& n : graph.nodes()) {
    if (n.kind != NodeKind::kConv && n.kind != NodeKind::kLinear) continue;
    const Site in{n.id, false, 0};
    const int64_t C = analysis.site_channels.at(in);
    const auto& keep = kept.at(in);
    if (static_cast<int64_t>(keep.size()) == C) continue;
    std::vector<bool> alive(static_cast<size_t>(C), false);
    for (int64_t j : keep) alive[static_cast<size_t>(j)] = true;
    Tensor& w = out.mutable_node(n.id).params.at("weight");
    const int64_t inner = w.numel() / (w.dim(0) * C);
    for (int64_t r = 0; r < w.dim(0); ++r) {
      for (int64_t c = 0; c < C; ++c) {
        if (alive[static_cast<size_t>(c)]) continue;
        float* dst = w.ptr() + (r * C + c) * inner;
        std::fill(dst, dst + inner, 0.0f);
      }
    }
  }
  return out;
}

EquivalenceResult check_prune_equivalence(const Graph& dense, const Graph& slim,
                                          const PrunePlan& plan, int trials, double tol,
                                          uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::kUsage, "trials must be >= 1");
  if (!(tol >= 0.0)) throw Error(ErrorCode::kUsage, "tolerance must be >= 0");
  const GroupAnalysis analysis = resolve_groups(dense);
  const Graph oracle = zero_embed_oracle(dense, analysis, plan);
  const auto kept = kept_channels(analysis, plan);

  // The slim graph must be exactly the planned slicing of the dense one.
  const Graph expected = apply_prune(dense, analysis, plan);
  const ShapeMap want = infer_shapes(expected);
  ShapeMap got;
  try {
    got = infer_shapes(slim);
  } catch (const Error& e) {
    fail_validation(std::string("slim graph is invalid: ") + e.what());
  }
  for (const Node& n : expected.nodes()) {
    if (!slim.contains(n.id)) fail_validation("slim graph lacks node " + n.id);
    for (int p = 0; p < n.num_outputs(); ++p) {
      const PortRef port{n.id, p};
      if (got.count(port) == 0 || got.at(port) != want.at(port)) {
        fail_validation("slim graph does not match the plan at " + to_string(port) + ": expected " +
                        shape_to_string(want.at(port)) + ", got " +
                        (got.count(port) ? shape_to_string(got.at(port)) : std::string("nothing")));
      }
    }
  }
  if (slim.size() != expected.size()) fail_validation("slim graph has extra nodes");

  EquivalenceResult r;
  const std::vector<std::string> outputs = dense.output_ids();
  Shape shape = dense.input_shape();
  shape[0] = 2;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(t)));
    Tensor x(shape);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
    const auto a = forward(slim, x, outputs);
    const auto b = forward(oracle, x, outputs);
    double trial_worst = 0.0;
    std::string worst_output;
    for (const std::string& id : outputs) {
      const Tensor& s = a.at(id);
      const Tensor& d = b.at(id);
      const auto& keep = kept.at(Site{id, false, 0});
      const int64_t C = d.dim(1);
      const int64_t inner = d.numel() / (d.dim(0) * C);
      const int64_t Ck = static_cast<int64_t>(keep.size());
      double diff = 0.0, scale = 0.0;
      for (int64_t nidx = 0; nidx < d.dim(0); ++nidx) {
        for (int64_t j = 0; j < Ck; ++j) {
          const float* ds = d.ptr() + (nidx * C + keep[static_cast<size_t>(j)]) * inner;
          const float* ss = s.ptr() + (nidx * Ck + j) * inner;
          for (int64_t k = 0; k < inner; ++k) {
            diff = std::max(diff, std::abs(static_cast<double>(ss[k]) - ds[k]));
            scale = std::max(scale, std::abs(static_cast<double>(ds[k])));
          }
        }
      }
      const double rel = diff / std::max(scale, 1e-30);
      if (rel > trial_worst) {
        trial_worst = rel;
        worst_output = id;
      }
    }
    r.worst_rel_error = std::max(r.worst_rel_error, trial_worst);
    ++r.trials;
    if (!(trial_worst <= tol)) {
      ++r.failures;
      if (r.first_failure.empty()) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "trial %d: output %s relative error %.3g exceeds %.3g", t,
                      worst_output.c_str(), trial_worst, tol);
        r.first_failure = buf;
      }
    }
  }
  return r;
}

double achieved_ratio(int64_t dense_params, int64_t slim_params) {
  if (dense_params < 1 || slim_params < 1) fail_validation("achieved_ratio: parameter counts must be >= 1");
  if (slim_params > dense_params) {
    fail_validation("achieved_ratio: slim count " + std::to_string(slim_params) + " exceeds dense count " +
                    std::to_string(dense_params));
  }
  return 1.0 - static_cast<double>(slim_params) / static_cast<double>(dense_params);
}

std::string format_ratio(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", ratio * 100.0);
  return buf;
}

std::string format_plan(const PrunePlan& plan) {
  std::ostringstream os;
  os << "# prune plan: group <id> length <L> remove <indices>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", plan.channel_fraction);
  os << "fraction " << buf << "\n";
  os << "epoch " << (plan.epoch_trigger ? std::to_string(*plan.epoch_trigger) : "none") << "\n";
  if (plan.group_count >= 0) os << "groups " << plan.group_count << "\n";
  for (const auto& [gid, idx] : plan.removals) {
    os << "group " << gid;
    auto len = plan.lengths.find(gid);
    if (len != plan.lengths.end()) os << " length " << len->second;
    os << " remove";
    for (int64_t i : idx) os << " " << i;
    os << "\n";
  }
  return os.str();
}

PrunePlan parse_plan(const std::string& text) {
  PrunePlan plan;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    fail_format("plan line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "fraction") {
      if (!(ls >> plan.channel_fraction)) bad("bad fraction");
    } else if (key == "epoch") {
      std::string v;
      ls >> v;
      if (v != "none") {
        try {
          plan.epoch_trigger = std::stoi(v);
        } catch (const std::exception&) {
          bad("bad epoch '" + v + "'");
        }
      }
    } else if (key == "groups") {
      if (!(ls >> plan.group_count)) bad("bad group count");
    } else if (key == "group") {
      int gid = 0;
      if (!(ls >> gid)) bad("bad group id");
      if (plan.removals.count(gid)) bad("duplicate group " + std::to_string(gid));
      std::string word;
      ls >> word;
      if (word == "length") {
        int64_t L = 0;
        if (!(ls >> L)) bad("bad length");
        plan.lengths[gid] = L;
        ls >> word;
      }
      if (word != "remove") bad("expected 'remove'");
      std::vector<int64_t>& idx = plan.removals[gid];
      std::string tok;
      while (ls >> tok) {
        try {
          size_t used = 0;
          idx.push_back(std::stoll(tok, &used));
          if (used != tok.size()) bad("bad index '" + tok + "'");
        } catch (const std::logic_error&) {
          bad("bad index '" + tok + "'");
        }
      }
    } else {
      bad("unknown key '" + key + "'");
    }
  }
  return plan;
}

}  // namespace slimgraph
