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

#ifndef SLIMGRAPH_MODELIO_HPP_
#define SLIMGRAPH_MODELIO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slimgraph/graph.hpp"

// Model container layout (all integers little-endian):
//
//   [0, 4)     magic "TWNM"
//   [4, 8)     u32 version (1)
//   [8, 16)    u64 topology length T
//   [16, 16+T) topology: canonical JSON (sorted keys) describing nodes,
//              edges, attributes and a tensor directory
//              {name, dtype f32|f16, shape, offset, length}
//   blob       tensors in directory order, float32 or IEEE binary16
//   last 4     u32 CRC-32 of the blob
namespace slimgraph {

constexpr char kModelMagic[4] = {'T', 'W', 'N', 'M'};
constexpr uint32_t kModelVersion = 1;
constexpr size_t kModelHeaderBytes = 16;
constexpr size_t kModelTrailerBytes = 4;

struct LoadedModel {
  Graph graph;
  int precision_bits = 32;
};

std::vector<uint8_t> serialize_model(const Graph& graph, int precision_bits);
/// Parses and validates a container; binary16 weights are widened to float32
/// and shapes are re-inferred. Throws a format error without returning a
/// partial graph.
LoadedModel deserialize_model(std::span<const uint8_t> bytes);

/// Writes via a temporary file and rename. Returns bytes written.
size_t save_model(const Graph& graph, int precision_bits, const std::string& path);
LoadedModel load_model(const std::string& path);

/// Size of the weight blob alone for `precision_bits`.
int64_t weight_blob_bytes(const Graph& graph, int precision_bits);

std::vector<uint8_t> read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::span<const uint8_t> bytes);
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace slimgraph

#endif  // SLIMGRAPH_MODELIO_HPP_
