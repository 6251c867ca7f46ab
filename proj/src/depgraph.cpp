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

#include "slimgraph/depgraph.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "slimgraph/error.hpp"
#include "slimgraph/metrics.hpp"

namespace slimgraph {

std::string to_string(const Site& site) {
  return site.node + (site.output ? ":out" : ":in") + std::to_string(site.port);
}

std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::kPlain:
      return "plain";
    case GroupKind::kResidual:
      return "residual";
    case GroupKind::kConcatSegment:
      return "concat-segment";
    case GroupKind::kSplitHalf:
      return "split-half";
    case GroupKind::kSppfReplicated:
      return "sppf-replicated";
  }
  return "?";
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  size_t find(size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // The smaller root wins so roots are stable across runs.
  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<size_t> parent_;
};

bool transparent(NodeKind kind) {
  switch (kind) {
    case NodeKind::kBatchNorm:
    case NodeKind::kActivation:
    case NodeKind::kMaxPool:
    case NodeKind::kScale:
    case NodeKind::kFakeQuant:
    case NodeKind::kGlobalAvgPool:
      return true;
    default:
      return false;
  }
}

int64_t spatial(const Shape& s) {
  int64_t v = s[0];
  for (size_t i = 2; i < s.size(); ++i) v *= s[i];
  return v;
}

int64_t kernel_area(const Node& n) { return n.param("weight").dim(2) * n.param("weight").dim(3); }

// Cost of removing one channel of `site`.
GroupCost site_unit_cost(const Graph& graph, const ShapeMap& shapes, const Site& site) {
  const Node& n = graph.node(site.node);
  GroupCost c;
  if (n.kind == NodeKind::kConv) {
    const Tensor& w = n.param("weight");
    const int64_t K = kernel_area(n);
    const int64_t hw = spatial(shapes.at(PortRef{n.id, 0}));
    const int64_t b = n.has_param("bias") ? 1 : 0;
    if (site.output) {
      c.params = w.dim(1) * K + b;
      c.flops = (2 * w.dim(1) * K + b) * hw;
    } else {
      c.params = w.dim(0) * K;
      c.flops = 2 * w.dim(0) * K * hw;
    }
    return c;
  }
  if (n.kind == NodeKind::kLinear) {
    const Tensor& w = n.param("weight");
    const int64_t batch = shapes.at(PortRef{n.id, 0})[0];
    const int64_t b = n.has_param("bias") ? 1 : 0;
    if (site.output) {
      c.params = w.dim(1) + b;
      c.flops = (2 * w.dim(1) + b) * batch;
    } else {
      c.params = w.dim(0);
      c.flops = 2 * w.dim(0) * batch;
    }
    return c;
  }
  if (!site.output) return c;
  if (n.kind == NodeKind::kBatchNorm) c.params = 2;
  if (n.kind == NodeKind::kScale) c.params = 1;
  if (n.kind == NodeKind::kGlobalAvgPool) {
    c.flops = spatial(shapes.at(n.inputs[0]));
  } else {
    c.flops = elementwise_ops(n) * spatial(shapes.at(PortRef{n.id, site.port}));
  }
  return c;
}

}  // namespace

GroupAnalysis resolve_groups(const Graph& graph) {
  GroupAnalysis a;
  a.shapes = infer_shapes(graph);

  // Sites in scan order: per node, inputs then outputs.
  std::vector<Site> sites;
  std::vector<size_t> base;
  std::map<Site, size_t> site_index;
  size_t total = 0;
  auto channels_of = [&](const PortRef& ref, const Site& site) {
    const Shape& s = a.shapes.at(ref);
    if (s.size() < 2) fail_validation("depgraph: site " + to_string(site) + " has no channel axis");
    return s[1];
  };
  auto add_site = [&](Site site, int64_t channels) {
    site_index[site] = sites.size();
    sites.push_back(site);
    base.push_back(total);
    a.site_channels[site] = channels;
    total += static_cast<size_t>(channels);
  };
  for (const Node& n : graph.nodes()) {
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      Site s{n.id, false, static_cast<int>(i)};
      add_site(s, channels_of(n.inputs[i], s));
    }
    for (int p = 0; p < n.num_outputs(); ++p) {
      Site s{n.id, true, p};
      add_site(s, channels_of(PortRef{n.id, p}, s));
    }
  }

  DisjointSets dsu(total);
  auto element = [&](const Site& s, int64_t j) { return base[site_index.at(s)] + static_cast<size_t>(j); };
  auto tie = [&](const Site& x, int64_t xoff, const Site& y, int64_t yoff, int64_t len) {
    for (int64_t j = 0; j < len; ++j) dsu.unite(element(x, xoff + j), element(y, yoff + j));
  };

  for (const Node& n : graph.nodes()) {
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      const Site in{n.id, false, static_cast<int>(i)};
      const Site src{n.inputs[i].node, true, n.inputs[i].port};
      tie(in, 0, src, 0, a.site_channels.at(in));
    }
    const Site out{n.id, true, 0};
    if (transparent(n.kind)) {
      const Site in{n.id, false, 0};
      if (a.site_channels.at(in) != a.site_channels.at(out)) {
        fail_internal("depgraph: channel count changes across " + n.id);
      }
      tie(in, 0, out, 0, a.site_channels.at(in));
      continue;
    }
    switch (n.kind) {
      case NodeKind::kInput:
      case NodeKind::kOutput:
      case NodeKind::kConv:
      case NodeKind::kLinear:
        break;
      case NodeKind::kAdd:
      case NodeKind::kModulate:
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          tie(Site{n.id, false, static_cast<int>(i)}, 0, out, 0, a.site_channels.at(out));
        }
        break;
      case NodeKind::kConcat: {
        int64_t offset = 0;
        for (size_t i = 0; i < n.inputs.size(); ++i) {
          const Site in{n.id, false, static_cast<int>(i)};
          tie(in, 0, out, offset, a.site_channels.at(in));
          offset += a.site_channels.at(in);
        }
        break;
      }
      case NodeKind::kSplit: {
        int64_t offset = 0;
        for (int p = 0; p < n.num_outputs(); ++p) {
          const Site o{n.id, true, p};
          tie(Site{n.id, false, 0}, offset, o, 0, a.site_channels.at(o));
          offset += a.site_channels.at(o);
        }
        break;
      }
      default:
        fail_validation("depgraph: no coupling rule for node '" + n.id + "' of kind " +
                        std::string(to_string(n.kind)));
    }
  }

  // Members of every class, grouped by the multiset of sites they touch.
  std::map<size_t, std::vector<std::pair<size_t, int64_t>>> members;  // root -> (site, channel)
  for (size_t s = 0; s < sites.size(); ++s) {
    const int64_t C = a.site_channels.at(sites[s]);
    for (int64_t j = 0; j < C; ++j) members[dsu.find(base[s] + static_cast<size_t>(j))].push_back({s, j});
  }
  using Key = std::vector<std::pair<size_t, int>>;  // (site, multiplicity)
  std::map<size_t, Key> class_key;
  for (const auto& [root, list] : members) {
    Key key;
    for (const auto& [s, j] : list) {
      if (!key.empty() && key.back().first == s) {
        ++key.back().second;
      } else {
        key.push_back({s, 1});
      }
    }
    class_key[root] = std::move(key);
  }

  // Group ids follow the scan order of the first channel of each group.
  std::map<Key, int> key_group;
  std::vector<std::vector<size_t>> group_classes;
  for (size_t s = 0; s < sites.size(); ++s) {
    const int64_t C = a.site_channels.at(sites[s]);
    for (int64_t j = 0; j < C; ++j) {
      const size_t root = dsu.find(base[s] + static_cast<size_t>(j));
      const Key& key = class_key.at(root);
      auto [it, inserted] = key_group.emplace(key, static_cast<int>(group_classes.size()));
      if (inserted) group_classes.emplace_back();
      std::vector<size_t>& cls = group_classes[static_cast<size_t>(it->second)];
      if (std::find(cls.begin(), cls.end(), root) == cls.end()) cls.push_back(root);
    }
  }
  // The first-seen site of a group is its anchor; classes are appended in
  // anchor channel order, which fixes the group index of each class.

  std::set<Site> protected_sites;
  for (const Node& n : graph.nodes()) {
    const bool all = n.is_protected;
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      if (all || n.kind == NodeKind::kOutput) protected_sites.insert(Site{n.id, false, static_cast<int>(i)});
    }
    for (int p = 0; p < n.num_outputs(); ++p) {
      if (all || n.kind == NodeKind::kInput) protected_sites.insert(Site{n.id, true, p});
    }
  }

  for (const auto& [site, C] : a.site_channels) a.channels[site].assign(static_cast<size_t>(C), GroupIndex{});
  for (size_t g = 0; g < group_classes.size(); ++g) {
    const std::vector<size_t>& cls = group_classes[g];
    const Key& key = class_key.at(cls.front());
    ChannelGroup group;
    group.id = static_cast<int>(g);
    group.length = static_cast<int64_t>(cls.size());
    bool replicated = false, residual = false, split = false, segment = false;
    for (const auto& [s, mult] : key) {
      const Site& site = sites[s];
      const Node& n = graph.node(site.node);
      // Per class, the sorted channels it occupies in this site.
      std::vector<std::vector<int64_t>> at(cls.size());
      for (size_t i = 0; i < cls.size(); ++i) {
        for (const auto& [ms, j] : members.at(cls[i])) {
          if (ms == s) at[i].push_back(j);
        }
      }
      for (int r = 0; r < mult; ++r) {
        const int64_t offset = at[0][static_cast<size_t>(r)];
        for (size_t i = 0; i < cls.size(); ++i) {
          const int64_t ch = at[i][static_cast<size_t>(r)];
          if (ch != offset + static_cast<int64_t>(i)) {
            fail_internal("depgraph: group " + std::to_string(g) + " is not a contiguous run in " +
                          to_string(site));
          }
          a.channels[site][static_cast<size_t>(ch)] = GroupIndex{static_cast<int>(g), static_cast<int64_t>(i)};
        }
        group.slots.push_back(ChannelSlot{site, offset, group.length});
        if (group.length < a.site_channels.at(site) && n.kind == NodeKind::kConcat) segment = true;
      }
      if (mult > 1) replicated = true;
      if (n.kind == NodeKind::kAdd || n.kind == NodeKind::kModulate) residual = true;
      if (n.kind == NodeKind::kSplit && site.output) split = true;
      if (protected_sites.count(site)) group.is_protected = true;
      if (n.kind == NodeKind::kConv && site.output) group.producers.push_back(n.id);
    }
    if (replicated) {
      group.kind = GroupKind::kSppfReplicated;
    } else if (residual) {
      group.kind = GroupKind::kResidual;
    } else if (split) {
      group.kind = GroupKind::kSplitHalf;
    } else if (segment) {
      group.kind = GroupKind::kConcatSegment;
    }
    a.groups.push_back(std::move(group));
  }
  return a;
}

GroupCost group_cost(const Graph& graph, const GroupAnalysis& analysis, const ChannelGroup& group) {
  GroupCost total;
  for (const ChannelSlot& slot : group.slots) {
    const GroupCost c = site_unit_cost(graph, analysis.shapes, slot.site);
    total.params += c.params;
    total.flops += c.flops;
  }
  return total;
}

GroupCost predict_removal(const Graph& graph, const GroupAnalysis& analysis, const RemovalMap& removals) {
  GroupCost total;
  std::map<int, std::set<int64_t>> removed;
  for (const auto& [gid, idx] : removals) {
    if (gid < 0 || gid >= static_cast<int>(analysis.groups.size())) {
      fail_validation("predict_removal: unknown group " + std::to_string(gid));
    }
    const GroupCost c = group_cost(graph, analysis, analysis.groups[static_cast<size_t>(gid)]);
    const std::set<int64_t> unique(idx.begin(), idx.end());
    total.params += static_cast<int64_t>(unique.size()) * c.params;
    total.flops += static_cast<int64_t>(unique.size()) * c.flops;
    removed[gid] = unique;
  }
  auto count_removed = [&](const Site& site) {
    int64_t r = 0;
    for (const GroupIndex& gi : analysis.channels.at(site)) {
      auto it = removed.find(gi.group);
      if (it != removed.end() && it->second.count(gi.index)) ++r;
    }
    return r;
  };
  for (const Node& n : graph.nodes()) {
    if (n.kind != NodeKind::kConv && n.kind != NodeKind::kLinear) continue;
    const int64_t overlap = count_removed(Site{n.id, false, 0}) * count_removed(Site{n.id, true, 0});
    if (n.kind == NodeKind::kConv) {
      const int64_t K = kernel_area(n);
      total.params -= overlap * K;
      total.flops -= overlap * 2 * K * spatial(analysis.shapes.at(PortRef{n.id, 0}));
    } else {
      total.params -= overlap;
      total.flops -= overlap * 2 * analysis.shapes.at(PortRef{n.id, 0})[0];
    }
  }
  return total;
}

std::string dump_groups(const Graph& graph, const GroupAnalysis& analysis) {
  std::ostringstream os;
  for (const ChannelGroup& g : analysis.groups) {
    const GroupCost c = group_cost(graph, analysis, g);
    os << "group " << g.id << " kind=" << to_string(g.kind) << " length=" << g.length
       << (g.is_protected ? " protected" : " free") << " cost_params=" << c.params
       << " cost_flops=" << c.flops << "\n";
    for (const ChannelSlot& s : g.slots) {
      os << "  " << to_string(s.site) << " [" << s.offset << "," << s.offset + s.length << ")\n";
    }
  }
  return os.str();
}

}  // namespace slimgraph
