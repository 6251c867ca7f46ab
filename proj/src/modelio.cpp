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

#include "slimgraph/modelio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "json.hpp"
#include "slimgraph/error.hpp"
#include "slimgraph/half.hpp"

namespace slimgraph {
namespace {

using nlohmann::json;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(std::span<const uint8_t> b, size_t at) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[at + i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::span<const uint8_t> b, size_t at) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[at + i]) << (8 * i);
  return v;
}

uint32_t crc32_of(std::span<const uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<uint32_t>(crc);
}

QuantPhase phase_from_string(const std::string& s) {
  if (s == "disabled") return QuantPhase::kDisabled;
  if (s == "observe") return QuantPhase::kObserve;
  if (s == "active") return QuantPhase::kActive;
  fail_format("unknown quantizer phase '" + s + "'");
}

json attrs_to_json(const NodeAttrs& a) {
  return json{{"stride", a.stride},
              {"padding", a.padding},
              {"kernel", a.kernel},
              {"activation", std::string(to_string(a.activation))},
              {"split_sizes", a.split_sizes},
              {"eps", static_cast<double>(a.eps)},
              {"quant",
               {{"phase", std::string(to_string(a.quant.phase))},
                {"amax", static_cast<double>(a.quant.amax)},
                {"scale", static_cast<double>(a.quant.scale)},
                {"samples", a.quant.samples}}}};
}

NodeAttrs attrs_from_json(const json& j) {
  NodeAttrs a;
  a.stride = j.at("stride").get<int>();
  a.padding = j.at("padding").get<int>();
  a.kernel = j.at("kernel").get<int>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "silu") {
    a.activation = ActivationKind::kSiLU;
  } else if (act == "sigmoid") {
    a.activation = ActivationKind::kSigmoid;
  } else {
    fail_format("unknown activation '" + act + "'");
  }
  a.split_sizes = j.at("split_sizes").get<std::vector<int64_t>>();
  a.eps = static_cast<float>(j.at("eps").get<double>());
  const json& q = j.at("quant");
  a.quant.phase = phase_from_string(q.at("phase").get<std::string>());
  a.quant.amax = static_cast<float>(q.at("amax").get<double>());
  a.quant.scale = static_cast<float>(q.at("scale").get<double>());
  a.quant.samples = q.at("samples").get<int64_t>();
  return a;
}

}  // namespace

int64_t weight_blob_bytes(const Graph& graph, int precision_bits) {
  int64_t elements = 0;
  for (const Node& n : graph.nodes()) {
    for (const auto& [name, t] : n.params) elements += t.numel();
  }
  return elements * (precision_bits / 8);
}

std::vector<uint8_t> serialize_model(const Graph& graph, int precision_bits) {
  if (precision_bits != 32 && precision_bits != 16) {
    throw Error(ErrorCode::kUsage, "precision must be 32 or 16, got " + std::to_string(precision_bits));
  }
  const size_t elem = precision_bits / 8;
  json nodes = json::array();
  json directory = json::array();
  std::vector<uint8_t> blob;
  blob.reserve(static_cast<size_t>(weight_blob_bytes(graph, precision_bits)));
  for (const Node& n : graph.nodes()) {
    json inputs = json::array();
    for (const PortRef& in : n.inputs) inputs.push_back(json::array({in.node, in.port}));
    json params = json::object();
    for (const auto& [name, t] : n.params) {
      params[name] = directory.size();
      directory.push_back(json{{"name", n.id + "/" + name},
                               {"dtype", precision_bits == 32 ? "f32" : "f16"},
                               {"shape", t.shape()},
                               {"offset", blob.size()},
                               {"length", static_cast<size_t>(t.numel()) * elem}});
      for (float v : t.data()) {
        if (precision_bits == 32) {
          put_u32(blob, std::bit_cast<uint32_t>(v));
        } else {
          const uint16_t h = float_to_half(v);
          blob.push_back(static_cast<uint8_t>(h & 0xff));
          blob.push_back(static_cast<uint8_t>(h >> 8));
        }
      }
    }
    nodes.push_back(json{{"id", n.id},
                         {"kind", std::string(to_string(n.kind))},
                         {"inputs", inputs},
                         {"attrs", attrs_to_json(n.attrs)},
                         {"params", params},
                         {"protected", n.is_protected},
                         {"role", n.role}});
  }
  const json topology{{"format", "slimgraph-model"},
                      {"name", graph.name()},
                      {"input_shape", graph.input_shape()},
                      {"meta", graph.meta()},
                      {"precision", precision_bits},
                      {"nodes", nodes},
                      {"tensors", directory}};
  const std::string text = topology.dump();

  std::vector<uint8_t> out;
  out.reserve(kModelHeaderBytes + text.size() + blob.size() + kModelTrailerBytes);
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  put_u32(out, kModelVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  put_u32(out, crc32_of(blob));
  return out;
}

LoadedModel deserialize_model(std::span<const uint8_t> bytes) {
  if (bytes.size() < kModelHeaderBytes + kModelTrailerBytes) {
    fail_format("model file truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) fail_format("bad magic: not a TWNM model file");
  const uint32_t version = get_u32(bytes, 4);
  if (version != kModelVersion) {
    fail_format("unsupported model version " + std::to_string(version) + " (this build reads version " +
                std::to_string(kModelVersion) + ")");
  }
  const uint64_t topo_len = get_u64(bytes, 8);
  if (topo_len > bytes.size() - kModelHeaderBytes - kModelTrailerBytes) {
    fail_format("model file truncated: topology length " + std::to_string(topo_len) +
                " exceeds file size " + std::to_string(bytes.size()));
  }
  const size_t blob_begin = kModelHeaderBytes + topo_len;
  const size_t blob_end = bytes.size() - kModelTrailerBytes;
  std::span<const uint8_t> blob = bytes.subspan(blob_begin, blob_end - blob_begin);
  const uint32_t stored_crc = get_u32(bytes, blob_end);
  if (crc32_of(blob) != stored_crc) fail_format("checksum mismatch: weight blob is corrupted");

  json topo;
  try {
    topo = json::parse(bytes.begin() + kModelHeaderBytes, bytes.begin() + static_cast<long>(blob_begin));
  } catch (const json::exception& e) {
    fail_format(std::string("topology parse error: ") + e.what());
  }

  LoadedModel model;
  try {
    if (!topo.is_object() || topo.value("format", "") != "slimgraph-model") {
      fail_format("topology is not a slimgraph model description");
    }
    model.precision_bits = topo.at("precision").get<int>();
    if (model.precision_bits != 32 && model.precision_bits != 16) {
      fail_format("unsupported precision " + std::to_string(model.precision_bits));
    }
    const size_t elem = static_cast<size_t>(model.precision_bits / 8);

    const json& dir = topo.at("tensors");
    std::vector<Tensor> tensors;
    std::vector<std::pair<uint64_t, uint64_t>> extents;
    for (const json& entry : dir) {
      const Shape shape = entry.at("shape").get<Shape>();
      const uint64_t offset = entry.at("offset").get<uint64_t>();
      const uint64_t length = entry.at("length").get<uint64_t>();
      const std::string dtype = entry.at("dtype").get<std::string>();
      const std::string name = entry.at("name").get<std::string>();
      if (dtype != (model.precision_bits == 32 ? "f32" : "f16")) {
        fail_format("tensor '" + name + "' has dtype " + dtype + " inconsistent with precision");
      }
      if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](int64_t d) { return d < 1; })) {
        fail_format("tensor '" + name + "' has an invalid shape");
      }
      const auto numel = static_cast<uint64_t>(shape_numel(shape));
      if (length != numel * elem) fail_format("tensor '" + name + "' length does not match its shape");
      if (offset > blob.size() || length > blob.size() - offset) {
        fail_format("tensor '" + name + "' lies outside the weight blob");
      }
      extents.emplace_back(offset, length);
      std::vector<float> data(numel);
      const uint8_t* src = blob.data() + offset;
      for (uint64_t i = 0; i < numel; ++i) {
        if (elem == 4) {
          uint32_t u = 0;
          for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(src[4 * i + b]) << (8 * b);
          data[i] = std::bit_cast<float>(u);
        } else {
          const auto h = static_cast<uint16_t>(src[2 * i] | (src[2 * i + 1] << 8));
          data[i] = half_to_float(h);
        }
      }
      tensors.emplace_back(shape, std::move(data));
    }
    std::sort(extents.begin(), extents.end());
    for (size_t i = 1; i < extents.size(); ++i) {
      if (extents[i - 1].first + extents[i - 1].second > extents[i].first) {
        fail_format("tensor directory entries overlap");
      }
    }

    Graph graph(topo.at("name").get<std::string>(), topo.at("input_shape").get<Shape>());
    graph.meta() = topo.at("meta").get<std::map<std::string, std::string>>();
    std::vector<bool> used(tensors.size(), false);
    for (const json& jn : topo.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<std::string>();
      const auto kind = node_kind_from_string(jn.at("kind").get<std::string>());
      if (!kind) fail_format("node '" + n.id + "' has unknown kind");
      n.kind = *kind;
      for (const json& in : jn.at("inputs")) {
        n.inputs.push_back(PortRef{in.at(0).get<std::string>(), in.at(1).get<int>()});
      }
      n.attrs = attrs_from_json(jn.at("attrs"));
      n.is_protected = jn.at("protected").get<bool>();
      n.role = jn.at("role").get<std::string>();
      for (const auto& [name, idx] : jn.at("params").items()) {
        const auto i = idx.get<size_t>();
        if (i >= tensors.size() || used[i]) {
          fail_format("node '" + n.id + "' parameter '" + name + "' has an invalid tensor index");
        }
        used[i] = true;
        n.params[name] = tensors[i];
      }
      graph.add(std::move(n));
    }
    infer_shapes(graph);
    model.graph = std::move(graph);
  } catch (const json::exception& e) {
    fail_format(std::string("topology is inconsistent: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormat) throw;
    fail_format(std::string("topology/blob inconsistency: ") + e.what());
  }
  return model;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_format("cannot open '" + path + "' for reading");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string read_text(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_atomic(const std::string& path, std::span<const uint8_t> bytes) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail_format("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::remove(tmp.c_str());
      fail_format("write to '" + path + "' failed");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail_format("cannot move temporary file onto '" + path + "'");
  }
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

size_t save_model(const Graph& graph, int precision_bits, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_model(graph, precision_bits);
  write_file_atomic(path, bytes);
  return bytes.size();
}

LoadedModel load_model(const std::string& path) { return deserialize_model(read_file(path)); }

}  // namespace slimgraph
