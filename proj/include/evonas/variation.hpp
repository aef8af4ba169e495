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

// Genetic operators. Each maps valid genomes to valid genomes.

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "evonas/genome.hpp"
#include "evonas/rng.hpp"

namespace evonas {

namespace detail {

inline void erase_node(Genome& g, std::size_t pos) {
  g.nodes.erase(g.nodes.begin() + static_cast<std::ptrdiff_t>(pos));
  g.adjacency.erase(pos);
}

}  // namespace detail

/// Restores predecessor arity. Orphans are wired to the nearest preceding
/// node; surplus edges keep the highest-indexed predecessors; connectives
/// short one input gain the nearest unconnected preceding node. A connective
/// at index 1 cannot have two distinct predecessors and is removed.
/// Entries on or above the diagonal are cleared.
inline Genome repair(Genome g) {
  if (g.nodes.empty()) g.nodes.push_back(NodeGene::input());
  if (g.adjacency.size() != g.nodes.size()) {
    Adjacency fixed(g.nodes.size());
    const std::size_t m = std::min(g.adjacency.size(), g.nodes.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) fixed.set(i, j, g.adjacency.get(i, j));
    g.adjacency = std::move(fixed);
  }
  std::size_t i = 1;
  while (i < g.nodes.size()) {
    const std::size_t n = g.nodes.size();
    for (std::size_t j = i; j < n; ++j) g.adjacency.set(i, j, false);
    const NodeKind kind = g.nodes[i].kind;
    if (is_connective(kind) && i < 2) {
      detail::erase_node(g, i);
      continue;
    }
    const int want = required_arity(kind);
    auto preds = g.predecessors(i);
    while (static_cast<int>(preds.size()) > want) {
      g.adjacency.set(i, preds.front(), false);
      preds.erase(preds.begin());
    }
    for (std::size_t j = i; j-- > 0 && static_cast<int>(preds.size()) < want;) {
      if (!g.adjacency.get(i, j)) {
        g.adjacency.set(i, j, true);
        preds.push_back(j);
      }
    }
    ++i;
  }
  for (std::size_t j = 0; j < g.nodes.size(); ++j) g.adjacency.set(0, j, false);
  return g;
}

/// Removes every node without a directed path to the output (the
/// highest-indexed node). Node 0 is always kept.
inline Genome prune(const Genome& g) {
  const std::size_t n = g.nodes.size();
  if (n <= 1) return g;
  std::vector<bool> live(n, false);
  live[n - 1] = true;
  live[0] = true;
  for (std::size_t i = n; i-- > 1;) {
    if (!live[i]) continue;
    for (const std::size_t p : g.predecessors(i)) live[p] = true;
  }
  Genome out;
  out.optimizer = g.optimizer;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (live[i]) keep.push_back(i);
  out.nodes.reserve(keep.size());
  for (const std::size_t k : keep) out.nodes.push_back(g.nodes[k]);
  out.adjacency = Adjacency(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = 0; b < keep.size(); ++b) out.adjacency.set(a, b, g.adjacency.get(keep[a], keep[b]));
  return out;
}

/// Which mutation rules fired; exposed for statistics and tests.
struct MutationLog {
  bool flipped_edge = false;
  bool added_node = false;
  bool deleted_node = false;
  bool reinitialized_node = false;
  bool reinitialized_optimizer = false;

  bool any() const {
    return flipped_edge || added_node || deleted_node || reinitialized_node || reinitialized_optimizer;
  }
};

/// Per-parameter reinitialization of one node gene at probability `rate`.
inline NodeGene reinitialize_node(const NodeGene& node, std::size_t index, double rate, Rng& rng) {
  NodeGene out = node;
  if (bernoulli(rng, rate)) {
    const auto kinds = allowed_kinds(index);
    const NodeKind k = kinds[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(kinds.size()) - 1))];
    if (k != node.kind) out = random_node_of_kind(k, rng);
  }
  if (out.conv && out.kind == node.kind) {
    ConvGene& c = *out.conv;
    if (bernoulli(rng, rate)) c.channels = pick(rng, kAllChannelRules);
    if (bernoulli(rng, rate)) c.kernel = pick(rng, kKernels);
    if (bernoulli(rng, rate)) c.stride = pick(rng, kStrides);
    if (bernoulli(rng, rate)) c.transposed = bernoulli(rng, 0.5);
    if (bernoulli(rng, rate)) c.separable = bernoulli(rng, 0.5);
    if (bernoulli(rng, rate)) c.weight_norm = bernoulli(rng, 0.5);
    if (bernoulli(rng, rate)) c.bias = bernoulli(rng, 0.5);
    if (bernoulli(rng, rate)) c.activation = pick(rng, kAllActivations);
    if (bernoulli(rng, rate)) c.norm = pick(rng, kAllNorms);
  }
  if (out.resize && out.kind == node.kind && bernoulli(rng, rate)) out.resize = random_resize(rng);
  return out;
}

/// Applies each mutation rule with probability `rate`:
///   (a) flip one adjacency bit strictly below the diagonal;
///   (b) one of {add node, delete node, reinitialize a node per-parameter};
///   (c) per-gene reinitialization of the optimizer genes.
/// When anything changed the result is repaired and pruned.
inline Genome mutate(const Genome& parent, double rate, Rng& rng, MutationLog* log = nullptr) {
  Genome g = parent;
  MutationLog local;
  MutationLog& ml = log ? *log : local;
  ml = {};

  if (bernoulli(rng, rate) && g.size() >= 2) {
    const auto n = static_cast<std::int64_t>(g.size());
    // Strictly-lower entries enumerated row-major: row i holds i entries.
    const std::int64_t count = n * (n - 1) / 2;
    std::int64_t pick_idx = uniform_int(rng, 0, count - 1);
    std::size_t row = 1;
    while (pick_idx >= static_cast<std::int64_t>(row)) {
      pick_idx -= static_cast<std::int64_t>(row);
      ++row;
    }
    g.adjacency.flip(row, static_cast<std::size_t>(pick_idx));
    ml.flipped_edge = true;
  }

  if (bernoulli(rng, rate)) {
    const auto choice = uniform_int(rng, 0, 2);
    if (choice == 0) {
      const auto pos = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(g.size())));
      g.nodes.insert(g.nodes.begin() + static_cast<std::ptrdiff_t>(pos), random_node(pos, rng));
      g.adjacency.insert(pos);
      random_predecessors(g, pos, rng);
      // Splice the new node in front of its successor so it is not pruned away.
      if (pos + 1 < g.size()) g.adjacency.set(pos + 1, pos, true);
      ml.added_node = true;
    } else if (choice == 1) {
      if (g.size() >= 2) {
        const auto pos = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(g.size()) - 1));
        detail::erase_node(g, pos);
        ml.deleted_node = true;
      }
    } else if (g.size() >= 2) {
      const auto pos = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(g.size()) - 1));
      g.nodes[pos] = reinitialize_node(g.nodes[pos], pos, rate, rng);
      ml.reinitialized_node = true;
    }
  }

  if (bernoulli(rng, rate)) {
    const OptimizerGenes fresh = random_optimizer(rng);
    if (bernoulli(rng, rate)) g.optimizer.kind = fresh.kind;
    if (bernoulli(rng, rate)) g.optimizer.lr0 = fresh.lr0;
    if (bernoulli(rng, rate)) g.optimizer.decay = fresh.decay;
    ml.reinitialized_optimizer = true;
  }

  if (!ml.any()) return g;
  return prune(repair(std::move(g)));
}

/// Uniform crossover of optimizer genes plus single-point crossover of the
/// node list: child = a.nodes[..k] ++ b.nodes[k..], each row of the
/// adjacency taken from the parent that contributed the node.
inline Genome crossover(const Genome& a, const Genome& b, Rng& rng) {
  Genome child;
  child.optimizer.kind = bernoulli(rng, 0.5) ? a.optimizer.kind : b.optimizer.kind;
  child.optimizer.lr0 = bernoulli(rng, 0.5) ? a.optimizer.lr0 : b.optimizer.lr0;
  child.optimizer.decay = bernoulli(rng, 0.5) ? a.optimizer.decay : b.optimizer.decay;

  const auto shortest = static_cast<std::int64_t>(std::min(a.size(), b.size()));
  const auto cut = static_cast<std::size_t>(uniform_int(rng, 1, std::max<std::int64_t>(shortest, 1)));
  const std::size_t n = cut + (b.size() > cut ? b.size() - cut : 0);
  child.nodes.reserve(n);
  for (std::size_t i = 0; i < cut && i < a.size(); ++i) child.nodes.push_back(a.nodes[i]);
  for (std::size_t i = cut; i < b.size(); ++i) child.nodes.push_back(b.nodes[i]);
  child.adjacency = Adjacency(child.nodes.size());
  for (std::size_t i = 0; i < child.nodes.size(); ++i) {
    const Genome& src = i < cut ? a : b;
    for (std::size_t j = 0; j < i && j < src.size(); ++j) child.adjacency.set(i, j, src.adjacency.get(i, j));
  }
  return prune(repair(std::move(child)));
}

}  // namespace evonas
