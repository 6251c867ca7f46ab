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

#ifndef SLIMGRAPH_DEPGRAPH_HPP_
#define SLIMGRAPH_DEPGRAPH_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slimgraph/graph.hpp"

namespace slimgraph {

/// One channel dimension of the graph: an input or output port of a node.
struct Site {
  std::string node;
  bool output = true;
  int port = 0;
  auto operator<=>(const Site&) const = default;
};

std::string to_string(const Site& site);

/// A contiguous run of channels [offset, offset + length) within a site.
struct ChannelSlot {
  Site site;
  int64_t offset = 0;
  int64_t length = 0;
};

enum class GroupKind { kPlain, kResidual, kConcatSegment, kSplitHalf, kSppfReplicated };

std::string_view to_string(GroupKind kind);

/// Coupled channel slots that must share one removal index set. Channel i of
/// the group is channel `offset + i` of every slot.
struct ChannelGroup {
  int id = 0;
  int64_t length = 0;
  bool is_protected = false;
  GroupKind kind = GroupKind::kPlain;
  std::vector<ChannelSlot> slots;
  /// Conv nodes whose output channels belong to the group (importance sources).
  std::vector<std::string> producers;
};

/// Position of one site channel inside the partition.
struct GroupIndex {
  int group = -1;
  int64_t index = 0;
};

struct GroupAnalysis {
  std::vector<ChannelGroup> groups;
  /// Every site, channel by channel.
  std::map<Site, std::vector<GroupIndex>> channels;
  /// Channel extent of every site.
  std::map<Site, int64_t> site_channels;
  ShapeMap shapes;
};

/// Union-find over (site, channel) pairs:
///  - a consumer input channel is the producer output channel feeding it;
///  - batchnorm, activation, pooling, scale and fakequant pass channel j
///    through unchanged;
///  - add and modulate tie all inputs and the output channel-wise;
///  - concat places input i at its running offset, split the reverse;
///  - conv and linear never couple their input to their output.
/// Classes touching the same sites with the same multiplicities form one
/// group. Protected nodes, the network input and graph outputs protect every
/// group they touch. Throws if a group's slots are not contiguous runs.
GroupAnalysis resolve_groups(const Graph& graph);

struct GroupCost {
  int64_t params = 0;
  int64_t flops = 0;
};

/// Parameters and FLOPs removed with one channel of `group`, summed over
/// its slots: producer filter row and bias, normalisation and scale entries,
/// consumer input columns (times replication) and per-element work.
GroupCost group_cost(const Graph& graph, const GroupAnalysis& analysis, const ChannelGroup& group);

/// Removed channels per group id.
using RemovalMap = std::map<int, std::vector<int64_t>>;

/// Exact totals removed by `removals`. Per-channel costs count a weight
/// whose row and column are both removed twice; the prediction subtracts
/// those overlaps per conv and linear node.
GroupCost predict_removal(const Graph& graph, const GroupAnalysis& analysis,
                          const RemovalMap& removals);

/// Text listing: group id, kind, length, protection, cost and slots.
std::string dump_groups(const Graph& graph, const GroupAnalysis& analysis);

}  // namespace slimgraph

#endif  // SLIMGRAPH_DEPGRAPH_HPP_
