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

// Heritable description of one candidate network and its trainer: ordered
// node genes, a lower-triangular adjacency matrix and optimizer genes.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/ops.hpp"
#include "evonas/optim.hpp"
#include "evonas/rng.hpp"

namespace evonas {

enum class NodeKind { Input, ConvBlock, MaxPool2x2, UpsampleNN2x, Concat, Add, Mul };

/// Output channel count of a conv block relative to its input.
enum class ChannelRule { Same, Double, Half, Quadruple, Quarter, Three, ThirtyTwo };

inline constexpr std::array kAllChannelRules = {ChannelRule::Same,      ChannelRule::Double,  ChannelRule::Half,
                                                ChannelRule::Quadruple, ChannelRule::Quarter, ChannelRule::Three,
                                                ChannelRule::ThirtyTwo};
inline constexpr std::array kAllActivations = {Activation::None,  Activation::ReLU,    Activation::PReLU,
                                               Activation::ELU,   Activation::SELU,    Activation::Tanh,
                                               Activation::Sigmoid, Activation::SoftmaxChannels};
inline constexpr std::array kAllNorms = {Norm::None, Norm::BatchNorm, Norm::InstanceNorm, Norm::LocalResponse,
                                         Norm::SoftmaxChannels};
inline constexpr std::array kAllOptimizers = {OptimizerKind::Adam, OptimizerKind::RMSprop,
                                              OptimizerKind::SGDMomentum};
inline constexpr std::array kKernels = {1, 3, 5};
inline constexpr std::array kStrides = {1, 2};

/// Divisions round up with a floor of one channel.
inline std::int64_t resolve_channels(ChannelRule rule, std::int64_t in) {
  switch (rule) {
    case ChannelRule::Same:
      return std::max<std::int64_t>(in, 1);
    case ChannelRule::Double:
      return std::max<std::int64_t>(2 * in, 1);
    case ChannelRule::Half:
      return std::max<std::int64_t>((in + 1) / 2, 1);
    case ChannelRule::Quadruple:
      return std::max<std::int64_t>(4 * in, 1);
    case ChannelRule::Quarter:
      return std::max<std::int64_t>((in + 3) / 4, 1);
    case ChannelRule::Three:
      return 3;
    case ChannelRule::ThirtyTwo:
      return 32;
  }
  return in;
}

struct ConvGene {
  ChannelRule channels = ChannelRule::Same;
  int kernel = 3;
  int stride = 1;
  bool transposed = false;
  bool separable = false;
  bool weight_norm = false;
  bool bias = true;
  Activation activation = Activation::None;
  Norm norm = Norm::None;

  friend bool operator==(const ConvGene&, const ConvGene&) = default;
};

struct NodeGene {
  NodeKind kind = NodeKind::Input;
  std::optional<ConvGene> conv;
  std::optional<ResizeTarget> resize;

  static NodeGene input() { return {NodeKind::Input, std::nullopt, std::nullopt}; }
  static NodeGene conv_block(ConvGene g) { return {NodeKind::ConvBlock, g, std::nullopt}; }
  static NodeGene max_pool() { return {NodeKind::MaxPool2x2, std::nullopt, std::nullopt}; }
  static NodeGene upsample() { return {NodeKind::UpsampleNN2x, std::nullopt, std::nullopt}; }
  static NodeGene connective(NodeKind k, ResizeTarget rt) { return {k, std::nullopt, rt}; }

  friend bool operator==(const NodeGene&, const NodeGene&) = default;
};

inline bool is_connective(NodeKind k) {
  return k == NodeKind::Concat || k == NodeKind::Add || k == NodeKind::Mul;
}

inline ConnectiveKind to_connective(NodeKind k) {
  switch (k) {
    case NodeKind::Concat:
      return ConnectiveKind::Concat;
    case NodeKind::Add:
      return ConnectiveKind::Add;
    case NodeKind::Mul:
      return ConnectiveKind::Mul;
    default:
      throw std::invalid_argument("node kind is not a connective");
  }
}

/// Number of predecessors a node of this kind needs.
inline int required_arity(NodeKind k) {
  if (k == NodeKind::Input) return 0;
  return is_connective(k) ? 2 : 1;
}

struct OptimizerGenes {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr0 = 1e-3;
  double decay = 0.0;

  friend bool operator==(const OptimizerGenes&, const OptimizerGenes&) = default;
};

/// Square boolean matrix; entry (i, j) means node j feeds node i.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool get(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }
  void flip(std::size_t i, std::size_t j) { set(i, j, !get(i, j)); }

  /// Sorted predecessor list of node i.
  std::vector<std::size_t> predecessors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_; ++j)
      if (get(i, j)) out.push_back(j);
    return out;
  }

  /// Inserts an empty row and column at `pos`.
  void insert(std::size_t pos) {
    Adjacency next(n_ + 1);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        next.set(i < pos ? i : i + 1, j < pos ? j : j + 1, get(i, j));
    *this = std::move(next);
  }

  /// Removes row and column `pos`.
  void erase(std::size_t pos) {
    Adjacency next(n_ - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      if (i == pos) continue;
      for (std::size_t j = 0; j < n_; ++j) {
        if (j == pos) continue;
        next.set(i < pos ? i : i - 1, j < pos ? j : j - 1, get(i, j));
      }
    }
    *this = std::move(next);
  }

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Genome {
  std::vector<NodeGene> nodes;
  Adjacency adjacency;
  OptimizerGenes optimizer;

  std::size_t size() const { return nodes.size(); }
  std::vector<std::size_t> predecessors(std::size_t i) const { return adjacency.predecessors(i); }
  std::size_t output_index() const { return nodes.empty() ? 0 : nodes.size() - 1; }

  friend bool operator==(const Genome&, const Genome&) = default;
};

// ---------------------------------------------------------------------------
// Names shared by serialization, printing and the CLI.

inline std::string_view name_of(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::ConvBlock: return "conv";
    case NodeKind::MaxPool2x2: return "maxpool";
    case NodeKind::UpsampleNN2x: return "upsample";
    case NodeKind::Concat: return "concat";
    case NodeKind::Add: return "add";
    case NodeKind::Mul: return "mul";
  }
  return "?";
}

inline std::string_view name_of(ChannelRule r) {
  switch (r) {
    case ChannelRule::Same: return "same";
    case ChannelRule::Double: return "double";
    case ChannelRule::Half: return "half";
    case ChannelRule::Quadruple: return "quadruple";
    case ChannelRule::Quarter: return "quarter";
    case ChannelRule::Three: return "three";
    case ChannelRule::ThirtyTwo: return "thirty_two";
  }
  return "?";
}

inline std::string_view name_of(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::PReLU: return "prelu";
    case Activation::ELU: return "elu";
    case Activation::SELU: return "selu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::SoftmaxChannels: return "softmax";
  }
  return "?";
}

inline std::string_view name_of(Norm n) {
  switch (n) {
    case Norm::None: return "none";
    case Norm::BatchNorm: return "batch_norm";
    case Norm::InstanceNorm: return "instance_norm";
    case Norm::LocalResponse: return "local_response_norm";
    case Norm::SoftmaxChannels: return "softmax";
  }
  return "?";
}

inline std::string_view name_of(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RMSprop: return "rmsprop";
    case OptimizerKind::SGDMomentum: return "sgd_momentum";
  }
  return "?";
}

inline std::string_view name_of(ResizeTarget r) { return r == ResizeTarget::First ? "first" : "second"; }

/// Reverse lookup over an enum's value list; nullopt when unknown.
template <typename E, std::size_t N>
std::optional<E> parse_name(std::string_view s, const std::array<E, N>& values) {
  for (const E v : values)
    if (name_of(v) == s) return v;
  return std::nullopt;
}

inline constexpr std::array kAllNodeKinds = {NodeKind::Input, NodeKind::ConvBlock, NodeKind::MaxPool2x2,
                                             NodeKind::UpsampleNN2x, NodeKind::Concat, NodeKind::Add,
                                             NodeKind::Mul};
inline constexpr std::array kAllResizeTargets = {ResizeTarget::First, ResizeTarget::Second};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string code;  // "empty", "input", "acyclicity", "arity", "gene", "optimizer", "matrix"
  std::int64_t node = -1;
  std::string detail;
};

inline std::vector<Violation> validate(const Genome& g) {
  std::vector<Violation> out;
  auto report = [&](std::string code, std::int64_t node, std::string detail) {
    out.push_back({std::move(code), node, std::move(detail)});
  };
  const std::size_t n = g.nodes.size();
  if (n == 0) {
    report("empty", -1, "genome has no nodes");
    return out;
  }
  if (g.adjacency.size() != n) {
    report("matrix", -1, "adjacency is " + std::to_string(g.adjacency.size()) + "x" +
                             std::to_string(g.adjacency.size()) + " for " + std::to_string(n) + " nodes");
    return out;
  }
  if (g.nodes[0].kind != NodeKind::Input) report("input", 0, "node 0 must be the input node");
  for (std::size_t i = 1; i < n; ++i) {
    if (g.nodes[i].kind == NodeKind::Input) {
      report("input", static_cast<std::int64_t>(i), "only node 0 may be an input node");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      if (g.adjacency.get(i, j)) {
        report("acyclicity", static_cast<std::int64_t>(i),
               "edge " + std::to_string(j) + "->" + std::to_string(i) + " is on or above the diagonal");
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const NodeGene& node = g.nodes[i];
    const auto preds = g.predecessors(i);
    const int want = required_arity(node.kind);
    if (static_cast<int>(preds.size()) != want) {
      report("arity", static_cast<std::int64_t>(i),
             std::string(name_of(node.kind)) + " node has " + std::to_string(preds.size()) +
                 " predecessors, needs " + std::to_string(want));
    }
    const bool conv = node.kind == NodeKind::ConvBlock;
    if (conv != node.conv.has_value()) {
      report("gene", static_cast<std::int64_t>(i), "conv parameters present iff node is a conv block");
    }
    if (is_connective(node.kind) != node.resize.has_value()) {
      report("gene", static_cast<std::int64_t>(i), "resize target present iff node is a connective");
    }
    if (node.conv) {
      const ConvGene& c = *node.conv;
      if (std::find(kKernels.begin(), kKernels.end(), c.kernel) == kKernels.end()) {
        report("gene", static_cast<std::int64_t>(i), "kernel must be 1, 3 or 5");
      }
      if (std::find(kStrides.begin(), kStrides.end(), c.stride) == kStrides.end()) {
        report("gene", static_cast<std::int64_t>(i), "stride must be 1 or 2");
      }
    }
  }
  const OptimizerGenes& o = g.optimizer;
  if (!(o.lr0 >= kMinLearningRate && o.lr0 <= kMaxLearningRate)) {
    report("optimizer", -1, "initial learning rate outside [1e-5, 1e-1]");
  }
  if (!(o.decay >= 0.0 && o.decay <= 1.0)) report("optimizer", -1, "decay outside [0, 1]");
  return out;
}

inline bool is_valid(const Genome& g) { return validate(g).empty(); }

// ---------------------------------------------------------------------------
// Random initialization

struct GenomeConfig {
  int min_nodes = 3;   // including the input node
  int max_nodes = 12;
};

template <typename E, std::size_t N>
E pick(Rng& rng, const std::array<E, N>& values) {
  return values[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(N) - 1))];
}

inline ConvGene random_conv_gene(Rng& rng) {
  ConvGene c;
  c.channels = pick(rng, kAllChannelRules);
  c.kernel = pick(rng, kKernels);
  c.stride = pick(rng, kStrides);
  c.transposed = bernoulli(rng, 0.5);
  c.separable = bernoulli(rng, 0.5);
  c.weight_norm = bernoulli(rng, 0.5);
  c.bias = bernoulli(rng, 0.5);
  c.activation = pick(rng, kAllActivations);
  c.norm = pick(rng, kAllNorms);
  return c;
}

inline ResizeTarget random_resize(Rng& rng) { return pick(rng, kAllResizeTargets); }

/// Kinds a node at `index` may take; connectives need two distinct predecessors.
inline std::vector<NodeKind> allowed_kinds(std::size_t index) {
  std::vector<NodeKind> kinds = {NodeKind::ConvBlock, NodeKind::MaxPool2x2, NodeKind::UpsampleNN2x};
  if (index >= 2) {
    kinds.push_back(NodeKind::Concat);
    kinds.push_back(NodeKind::Add);
    kinds.push_back(NodeKind::Mul);
  }
  return kinds;
}

inline NodeGene random_node_of_kind(NodeKind kind, Rng& rng) {
  if (kind == NodeKind::ConvBlock) return NodeGene::conv_block(random_conv_gene(rng));
  if (kind == NodeKind::MaxPool2x2) return NodeGene::max_pool();
  if (kind == NodeKind::UpsampleNN2x) return NodeGene::upsample();
  return NodeGene::connective(kind, random_resize(rng));
}

inline NodeGene random_node(std::size_t index, Rng& rng) {
  const auto kinds = allowed_kinds(index);
  const NodeKind kind = kinds[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(kinds.size()) - 1))];
  return random_node_of_kind(kind, rng);
}

inline OptimizerGenes random_optimizer(Rng& rng) {
  OptimizerGenes o;
  o.kind = pick(rng, kAllOptimizers);
  o.lr0 = log_uniform(rng, kMinLearningRate, kMaxLearningRate);
  o.decay = uniform01(rng);
  return o;
}

/// Draws predecessors for node `index` uniformly among earlier nodes.
inline void random_predecessors(Genome& g, std::size_t index, Rng& rng) {
  const int arity = required_arity(g.nodes[index].kind);
  const auto lo = std::int64_t{0}, hi = static_cast<std::int64_t>(index) - 1;
  if (arity >= 1) {
    const auto a = static_cast<std::size_t>(uniform_int(rng, lo, hi));
    g.adjacency.set(index, a, true);
    if (arity == 2 && index >= 2) {
      std::size_t b = a;
      while (b == a) b = static_cast<std::size_t>(uniform_int(rng, lo, hi));
      g.adjacency.set(index, b, true);
    }
  }
}

inline Genome random_genome(const GenomeConfig& cfg, Rng& rng) {
  const int lo = std::max(cfg.min_nodes, 1);
  const int hi = std::max(cfg.max_nodes, lo);
  const auto count = static_cast<std::size_t>(uniform_int(rng, lo, hi));
  Genome g;
  g.nodes.reserve(count);
  g.nodes.push_back(NodeGene::input());
  for (std::size_t i = 1; i < count; ++i) g.nodes.push_back(random_node(i, rng));
  g.adjacency = Adjacency(count);
  for (std::size_t i = 1; i < count; ++i) random_predecessors(g, i, rng);
  g.optimizer = random_optimizer(rng);
  return g;
}

}  // namespace evonas
