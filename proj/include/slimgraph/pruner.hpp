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

#ifndef SLIMGRAPH_PRUNER_HPP_
#define SLIMGRAPH_PRUNER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimgraph/depgraph.hpp"
#include "slimgraph/graph.hpp"

namespace slimgraph {

struct PrunePlan {
  /// Sorted removal indices per group id. Groups without an entry keep all
  /// channels.
  RemovalMap removals;
  /// Group length at planning time, used to reject stale plans.
  std::map<int, int64_t> lengths;
  /// Number of groups in the analysed graph; -1 when unknown.
  int group_count = -1;
  double channel_fraction = 0.0;
  std::optional<int> epoch_trigger;
};

/// Sum over the group's producing convs of the l1 norm of each output
/// filter. Throws if the group has no producing conv.
std::vector<double> l1_importance(const Graph& graph, const GroupAnalysis& analysis,
                                  const ChannelGroup& group);

/// Removes floor(fraction * L) lowest-scoring indices, keeping at least
/// `min_keep`. Equal scores remove the higher index first. Sorted result.
std::vector<int64_t> select_channels(std::span<const double> scores, double fraction,
                                     int64_t min_keep = 1);

/// Uniform fraction over every unprotected group.
PrunePlan make_plan(const Graph& graph, const GroupAnalysis& analysis, double fraction,
                    std::optional<int> epoch_trigger = std::nullopt);

/// Throws a validation error naming the group on unknown ids, stale lengths,
/// out-of-range or duplicate indices, protected groups with removals, or
/// removal of every channel.
void validate_plan(const GroupAnalysis& analysis, const PrunePlan& plan);

/// Slim graph with the planned channels deleted and surviving weights copied
/// bit-exactly.
Graph apply_prune(const Graph& graph, const GroupAnalysis& analysis, const PrunePlan& plan);
Graph apply_prune(const Graph& graph, const PrunePlan& plan);

/// Dense graph whose consumers ignore the planned channels (their input
/// columns are zeroed).
Graph zero_embed_oracle(const Graph& graph, const GroupAnalysis& analysis, const PrunePlan& plan);

/// Kept channel indices of every site under `plan`.
std::map<Site, std::vector<int64_t>> kept_channels(const GroupAnalysis& analysis,
                                                   const PrunePlan& plan);

struct EquivalenceResult {
  int trials = 0;
  int failures = 0;
  /// Largest max|slim - oracle| / max|oracle| over trials and outputs.
  double worst_rel_error = 0.0;
  std::string first_failure;  // empty when every trial passed
};

/// Runs `slim` and the zero-embedded dense graph on `trials` seeded normal
/// inputs (batch 2) and compares every output on its surviving channels.
/// Throws a validation error if the plan does not fit `dense` or the slim
/// graph does not have the planned shapes.
EquivalenceResult check_prune_equivalence(const Graph& dense, const Graph& slim,
                                          const PrunePlan& plan, int trials, double tol,
                                          uint64_t seed);

/// 1 - slim / dense. Throws if slim > dense or either count is < 1.
double achieved_ratio(int64_t dense_params, int64_t slim_params);
/// Percentage with one decimal, e.g. "11.5".
std::string format_ratio(double ratio);

std::string format_plan(const PrunePlan& plan);
PrunePlan parse_plan(const std::string& text);

}  // namespace slimgraph

#endif  // SLIMGRAPH_PRUNER_HPP_
