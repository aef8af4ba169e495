// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Genome <-> JSON. The document lists nodes in order with their input node
// indices, mirroring a "node index / input node(s) / node type" table:
//
//   {
//     "schema_version": 1,
//     "optimizer": {"kind": "adam", "lr0": 0.041888, "decay": 0.136235},
//     "nodes": [
//       {"index": 0, "kind": "input"},
//       {"index": 1, "kind": "conv", "inputs": [0],
//        "conv": {"channels": "quadruple", "kernel": 3, "stride": 2,
//                 "transposed": true, "separable": true, "weight_norm": false,
//                 "bias": false, "activation": "prelu", "norm": "batch_norm"}},
//       {"index": 2, "kind": "mul", "inputs": [0, 1], "resize": "first"}
//     ]
//   }
//
// Output is canonical: keys sorted, inputs ascending, fixed indentation.

#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "evonas/genome.hpp"

namespace evonas {

inline constexpr int kGenomeSchemaVersion = 1;

/// Malformed or invalid document. `where` is a JSON pointer or byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

inline nlohmann::json genome_to_json(const Genome& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const NodeGene& n = g.nodes[i];
    json j;
    j["index"] = i;
    j["kind"] = std::string(name_of(n.kind));
    if (n.kind != NodeKind::Input) {
      json inputs = json::array();
      for (const std::size_t p : g.predecessors(i)) inputs.push_back(p);
      j["inputs"] = inputs;
    }
    if (n.conv) {
      const ConvGene& c = *n.conv;
      j["conv"] = {{"channels", std::string(name_of(c.channels))},
                   {"kernel", c.kernel},
                   {"stride", c.stride},
                   {"transposed", c.transposed},
                   {"separable", c.separable},
                   {"weight_norm", c.weight_norm},
                   {"bias", c.bias},
                   {"activation", std::string(name_of(c.activation))},
                   {"norm", std::string(name_of(c.norm))}};
    }
    if (n.resize) j["resize"] = std::string(name_of(*n.resize));
    nodes.push_back(std::move(j));
  }
  json doc;
  doc["schema_version"] = kGenomeSchemaVersion;
  doc["optimizer"] = {{"kind", std::string(name_of(g.optimizer.kind))},
                      {"lr0", g.optimizer.lr0},
                      {"decay", g.optimizer.decay}};
  doc["nodes"] = std::move(nodes);
  return doc;
}

inline std::string serialize(const Genome& g) { return genome_to_json(g).dump(2) + "\n"; }

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "/" + key, "missing field");
  return *it;
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                           const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ParseError(path + "/" + it.key(), "unknown field");
  }
}

inline std::string get_string(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_boolean()) throw ParseError(path + "/" + key, "expected a boolean");
  return v.get<bool>();
}

inline std::int64_t get_int(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_number_integer()) throw ParseError(path + "/" + key, "expected an integer");
  return v.get<std::int64_t>();
}

inline double get_number(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_number()) throw ParseError(path + "/" + key, "expected a number");
  return v.get<double>();
}

template <typename E, std::size_t N>
E get_enum(const nlohmann::json& obj, const std::string& key, const std::string& path,
           const std::array<E, N>& values) {
  const std::string s = get_string(obj, key, path);
  const auto v = parse_name(s, values);
  if (!v) throw ParseError(path + "/" + key, "unknown value '" + s + "'");
  return *v;
}

}  // namespace detail

/// Builds a genome from a parsed document; throws ParseError on schema
/// problems and on any genome invariant violation.
inline Genome genome_from_json(const nlohmann::json& doc) {
  using detail::field;
  if (!doc.is_object()) throw ParseError("", "genome document must be an object");
  detail::reject_unknown(doc, {"schema_version", "optimizer", "nodes"}, "");
  const std::int64_t version = detail::get_int(doc, "schema_version", "");
  if (version != kGenomeSchemaVersion) {
    throw ParseError("/schema_version", "unsupported schema version " + std::to_string(version));
  }
  Genome g;
  const auto& opt = field(doc, "optimizer", "");
  detail::reject_unknown(opt, {"kind", "lr0", "decay"}, "/optimizer");
  g.optimizer.kind = detail::get_enum(opt, "kind", "/optimizer", kAllOptimizers);
  g.optimizer.lr0 = detail::get_number(opt, "lr0", "/optimizer");
  g.optimizer.decay = detail::get_number(opt, "decay", "/optimizer");

  const auto& nodes = field(doc, "nodes", "");
  if (!nodes.is_array()) throw ParseError("/nodes", "expected an array");
  if (nodes.empty()) throw ParseError("/nodes", "genome has no nodes");
  const std::size_t count = nodes.size();
  g.adjacency = Adjacency(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string path = "/nodes/" + std::to_string(i);
    const auto& jn = nodes[i];
    if (!jn.is_object()) throw ParseError(path, "expected an object");
    detail::reject_unknown(jn, {"index", "kind", "inputs", "conv", "resize"}, path);
    if (detail::get_int(jn, "index", path) != static_cast<std::int64_t>(i)) {
      throw ParseError(path + "/index", "node index must equal its position " + std::to_string(i));
    }
    NodeGene node;
    node.kind = detail::get_enum(jn, "kind", path, kAllNodeKinds);
    if (node.kind != NodeKind::Input) {
      const auto& inputs = field(jn, "inputs", path);
      if (!inputs.is_array()) throw ParseError(path + "/inputs", "expected an array");
      std::set<std::int64_t> seen;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto& v = inputs[k];
        const std::string ip = path + "/inputs/" + std::to_string(k);
        if (!v.is_number_integer()) throw ParseError(ip, "expected an integer");
        const auto src = v.get<std::int64_t>();
        if (src < 0 || src >= static_cast<std::int64_t>(count)) throw ParseError(ip, "input index out of range");
        if (!seen.insert(src).second) throw ParseError(ip, "duplicate input");
        g.adjacency.set(i, static_cast<std::size_t>(src), true);
      }
    } else if (jn.contains("inputs") && !jn["inputs"].empty()) {
      throw ParseError(path + "/inputs", "input node takes no inputs");
    }
    if (jn.contains("conv")) {
      const auto& jc = jn["conv"];
      const std::string cp = path + "/conv";
      detail::reject_unknown(jc, {"channels", "kernel", "stride", "transposed", "separable", "weight_norm", "bias",
                                  "activation", "norm"},
                             cp);
      ConvGene c;
      c.channels = detail::get_enum(jc, "channels", cp, kAllChannelRules);
      c.kernel = static_cast<int>(detail::get_int(jc, "kernel", cp));
      c.stride = static_cast<int>(detail::get_int(jc, "stride", cp));
      c.transposed = detail::get_bool(jc, "transposed", cp);
      c.separable = detail::get_bool(jc, "separable", cp);
      c.weight_norm = detail::get_bool(jc, "weight_norm", cp);
      c.bias = detail::get_bool(jc, "bias", cp);
      c.activation = detail::get_enum(jc, "activation", cp, kAllActivations);
      c.norm = detail::get_enum(jc, "norm", cp, kAllNorms);
      node.conv = c;
    }
    if (jn.contains("resize")) node.resize = detail::get_enum(jn, "resize", path, kAllResizeTargets);
    g.nodes.push_back(node);
  }
  const auto violations = validate(g);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    const std::string where = v.node >= 0 ? "/nodes/" + std::to_string(v.node) : "";
    std::string msg = "invalid genome:";
    for (const Violation& each : violations) {
      msg += "\n  - [" + each.code + "]";
      if (each.node >= 0) msg += " node " + std::to_string(each.node) + ":";
      msg += " " + each.detail;
    }
    throw ParseError(where, msg);
  }
  return g;
}

inline Genome deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
  return genome_from_json(doc);
}

}  // namespace evonas
